#pragma once

#include "safestab/sim.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace safestab {

// Trajectory CSV, fixed column order:
//   t, x_1..x_n, u_1..u_m, W, h_1..h_k, region (0 = R1, 1 = R2), active_1..active_k
// Numbers use the shortest representation that round-trips exactly.

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("csv: cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> trajectory_csv_header(int n, int m, int k) {
  std::vector<std::string> cols{"t"};
  for (int i = 1; i <= n; ++i) cols.push_back("x_" + std::to_string(i));
  for (int i = 1; i <= m; ++i) cols.push_back("u_" + std::to_string(i));
  cols.emplace_back("W");
  for (int i = 1; i <= k; ++i) cols.push_back("h_" + std::to_string(i));
  cols.emplace_back("region");
  for (int i = 1; i <= k; ++i) cols.push_back("active_" + std::to_string(i));
  return cols;
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj, int n, int m, int k) {
  const auto header = trajectory_csv_header(n, m, k);
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (std::size_t r = 0; r < traj.size(); ++r) {
    os << format_double(traj.times[r]);
    for (Eigen::Index i = 0; i < traj.states[r].size(); ++i) os << ',' << format_double(traj.states[r][i]);
    for (Eigen::Index i = 0; i < traj.inputs[r].size(); ++i) os << ',' << format_double(traj.inputs[r][i]);
    os << ',' << format_double(traj.W[r]);
    for (Eigen::Index i = 0; i < traj.h[r].size(); ++i) os << ',' << format_double(traj.h[r][i]);
    os << ',' << static_cast<int>(traj.regions[r]);
    for (bool a : traj.active[r]) os << ',' << (a ? 1 : 0);
    os << '\n';
  }
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }

  /// Count of columns named prefix_1, prefix_2, ...
  int count_prefixed(std::string_view prefix) const {
    int count = 0;
    while (column(std::string(prefix) + "_" + std::to_string(count + 1)) >= 0) ++count;
    return count;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable read_csv(std::istream& is) {
  CsvTable table;
  std::string line;
  if (!std::getline(is, line) || line.empty()) throw ConfigError("csv: missing header row");
  if (line.back() == '\r') line.pop_back();
  table.header = split_csv_line(line);
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != table.header.size()) throw ConfigError("csv: row width does not match header");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c));
    table.rows.push_back(std::move(row));
  }
  return table;
}

/// Checks that a table follows the trajectory column layout.
inline void check_trajectory_schema(const CsvTable& table) {
  const int n = table.count_prefixed("x");
  const int m = table.count_prefixed("u");
  const int k = table.count_prefixed("h");
  if (n == 0 || m == 0) throw ConfigError("csv: not a trajectory file (no x_i or u_i columns)");
  if (table.header != trajectory_csv_header(n, m, k)) throw ConfigError("csv: columns do not match the trajectory schema");
}

}  // namespace safestab
