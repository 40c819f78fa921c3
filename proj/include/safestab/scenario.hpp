#pragma once

#include "safestab/doa.hpp"
#include "safestab/filters.hpp"
#include "safestab/sim.hpp"
#include "safestab/system.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace safestab {

// Scenario files are JSON. See scenarios/README.md for the schema.

struct BarrierSpec {
  std::string type;  // "quadratic" | "exp_positivity"
  std::string name;
  double alpha = 1.0;
  // quadratic: h = offset - (x - center)^T M (x - center), M row-major
  double offset = 0.0;
  std::vector<double> center;
  std::vector<double> matrix;
  // exp_positivity: h = 1 - exp(-x[index])
  int index = 0;

  bool operator==(const BarrierSpec&) const = default;
};

struct ScenarioData {
  std::string name;
  std::string system_type;                // "linear" | "tumor"
  std::vector<double> A;                  // linear: n x n, row-major
  std::vector<double> B;                  // linear: n x m, row-major
  int n = 0;
  int m = 0;
  std::map<std::string, double> params;   // tumor parameters
  std::vector<double> x_e;
  std::vector<double> u_e;
  bool polish_equilibrium = false;
  double eq_tol = 1e-3;
  std::vector<double> P;                  // n x n, row-major
  std::vector<BarrierSpec> barriers;
  double gamma = 1.0;
  double p = 10.0;
  double alpha_W = 1.0;
  double b_floor = 1e-10;
  // simulation defaults
  std::vector<double> x0;
  double dt = 1e-3;
  double t_final = 10.0;
  // DOA grid defaults
  int doa_points_per_axis = 41;
  double doa_c_lo = 1e-3;
  double doa_c_hi = 100.0;
  std::vector<double> doa_box_lo;
  std::vector<double> doa_box_hi;
  double ray_t_max = 10.0;

  bool operator==(const ScenarioData&) const = default;
};

inline Mat row_major(const std::vector<double>& v, int rows, int cols, const char* what) {
  if (static_cast<int>(v.size()) != rows * cols)
    throw ConfigError(std::string("scenario: ") + what + " has " + std::to_string(v.size()) + " entries, expected " +
                      std::to_string(rows * cols));
  Mat out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = v[static_cast<std::size_t>(i * cols + j)];
  return out;
}

inline Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

// ---- JSON ---------------------------------------------------------------

inline void to_json(nlohmann::json& j, const BarrierSpec& b) {
  j = nlohmann::json{{"type", b.type}, {"name", b.name}, {"alpha", b.alpha}};
  if (b.type == "quadratic") {
    j["offset"] = b.offset;
    j["center"] = b.center;
    j["matrix"] = b.matrix;
  } else {
    j["index"] = b.index;
  }
}

inline void from_json(const nlohmann::json& j, BarrierSpec& b) {
  b.type = j.at("type").get<std::string>();
  b.name = j.value("name", b.type);
  b.alpha = j.value("alpha", 1.0);
  if (b.type == "quadratic") {
    b.offset = j.at("offset").get<double>();
    b.center = j.at("center").get<std::vector<double>>();
    b.matrix = j.at("matrix").get<std::vector<double>>();
  } else if (b.type == "exp_positivity") {
    b.index = j.at("index").get<int>();
  } else {
    throw ConfigError("scenario: unknown barrier type '" + b.type + "'");
  }
}

inline nlohmann::json scenario_to_json(const ScenarioData& s) {
  nlohmann::json sys{{"type", s.system_type}, {"n", s.n}, {"m", s.m}};
  if (s.system_type == "linear") {
    sys["A"] = s.A;
    sys["B"] = s.B;
  } else {
    sys["params"] = s.params;
  }
  nlohmann::json j;
  j["name"] = s.name;
  j["system"] = sys;
  j["equilibrium"] = {{"x", s.x_e}, {"u", s.u_e}, {"polish", s.polish_equilibrium}, {"tol", s.eq_tol}};
  j["clf"] = {{"P", s.P}};
  j["barriers"] = s.barriers;
  j["controller"] = {{"gamma", s.gamma}, {"p", s.p}, {"alpha_W", s.alpha_W}, {"b_floor", s.b_floor}};
  j["simulation"] = {{"x0", s.x0}, {"dt", s.dt}, {"t_final", s.t_final}};
  j["doa"] = {{"points_per_axis", s.doa_points_per_axis},
              {"c_bounds", {s.doa_c_lo, s.doa_c_hi}},
              {"box_lo", s.doa_box_lo},
              {"box_hi", s.doa_box_hi},
              {"ray_t_max", s.ray_t_max}};
  return j;
}

inline ScenarioData scenario_from_json(const nlohmann::json& j) {
  try {
    ScenarioData s;
    s.name = j.at("name").get<std::string>();
    const auto& sys = j.at("system");
    s.system_type = sys.at("type").get<std::string>();
    s.n = sys.at("n").get<int>();
    s.m = sys.at("m").get<int>();
    if (s.system_type == "linear") {
      s.A = sys.at("A").get<std::vector<double>>();
      s.B = sys.at("B").get<std::vector<double>>();
    } else if (s.system_type == "tumor") {
      s.params = sys.at("params").get<std::map<std::string, double>>();
    } else {
      throw ConfigError("scenario: unknown system type '" + s.system_type + "'");
    }
    const auto& eq = j.at("equilibrium");
    s.x_e = eq.at("x").get<std::vector<double>>();
    s.u_e = eq.at("u").get<std::vector<double>>();
    s.polish_equilibrium = eq.value("polish", false);
    s.eq_tol = eq.value("tol", 1e-3);
    s.P = j.at("clf").at("P").get<std::vector<double>>();
    s.barriers = j.at("barriers").get<std::vector<BarrierSpec>>();
    if (j.contains("controller")) {
      const auto& c = j.at("controller");
      s.gamma = c.value("gamma", s.gamma);
      s.p = c.value("p", s.p);
      s.alpha_W = c.value("alpha_W", s.alpha_W);
      s.b_floor = c.value("b_floor", s.b_floor);
    }
    if (j.contains("simulation")) {
      const auto& c = j.at("simulation");
      s.x0 = c.value("x0", s.x0);
      s.dt = c.value("dt", s.dt);
      s.t_final = c.value("t_final", s.t_final);
    }
    if (j.contains("doa")) {
      const auto& c = j.at("doa");
      s.doa_points_per_axis = c.value("points_per_axis", s.doa_points_per_axis);
      if (c.contains("c_bounds")) {
        const auto cb = c.at("c_bounds").get<std::vector<double>>();
        if (cb.size() != 2) throw ConfigError("scenario: doa.c_bounds needs two entries");
        s.doa_c_lo = cb[0];
        s.doa_c_hi = cb[1];
      }
      s.doa_box_lo = c.value("box_lo", s.doa_box_lo);
      s.doa_box_hi = c.value("box_hi", s.doa_box_hi);
      s.ray_t_max = c.value("ray_t_max", s.ray_t_max);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
}

inline ScenarioData load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scenario: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario: " + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

// ---- Bundled case studies ---------------------------------------------------

/// 2-D linear example: f(x) = -(x2, x1), g = (0, 1)^T, x_e = 0.
inline ScenarioData linear2d_data() {
  ScenarioData s;
  s.name = "linear2d";
  s.system_type = "linear";
  s.n = 2;
  s.m = 1;
  s.A = {0.0, -1.0, -1.0, 0.0};
  s.B = {0.0, 1.0};
  s.x_e = {0.0, 0.0};
  s.u_e = {0.0};
  s.P = {3.4142, -2.4142, -2.4142, 2.4142};
  // h = 1 - 0.1 x1^2 - 0.15 x1 x2 - 0.1 x2^2. The unit offset makes the safe set a
  // bounded ellipse around the origin; without it h <= 0 everywhere.
  s.barriers = {BarrierSpec{"quadratic", "ellipse", 1.0, 1.0, {0.0, 0.0}, {0.1, 0.075, 0.075, 0.1}, 0}};
  s.x0 = {2.0, -2.5};
  s.t_final = 10.0;
  s.doa_points_per_axis = 201;
  s.doa_c_lo = 1e-3;
  s.doa_c_hi = 250.0;
  s.doa_box_lo = {-4.8, -4.8};
  s.doa_box_hi = {4.8, 4.8};
  s.ray_t_max = 10.0;
  return s;
}

/// 3-D tumor/immune model around the dormancy equilibrium.
inline ScenarioData tumor3d_data() {
  ScenarioData s;
  s.name = "tumor3d";
  s.system_type = "tumor";
  s.n = 3;
  s.m = 1;
  s.params = {{"alpha_NT", 0.5}, {"alpha_TN", 0.9}, {"beta", 0.9},
              {"K_R", 10.0},     {"K_T", 10.0},     {"R_R", 0.9}, {"R_T", 0.9}};
  s.x_e = {6.4286, 7.1429, 3.5714};
  s.u_e = {-0.4};
  s.polish_equilibrium = true;
  s.P = {0.3564, -0.2472, -0.4017, -0.2472, 0.4597, 0.3699, -0.4017, 0.3699, 4.6665};
  s.barriers = {
      BarrierSpec{"quadratic", "tumor_bound", 1.0, 25.0, {5.0, 0.0, 0.0}, {1, 0, 0, 0, 0, 0, 0, 0, 0}, 0},
      BarrierSpec{"exp_positivity", "resting_positive", 1.0, 0.0, {}, {}, 1},
      BarrierSpec{"exp_positivity", "hunting_positive", 1.0, 0.0, {}, {}, 2},
  };
  s.x0 = {9.5, 6.5, 3.5};
  s.t_final = 50.0;
  s.doa_points_per_axis = 41;
  s.doa_c_lo = 1e-3;
  s.doa_c_hi = 20.0;
  s.doa_box_lo = {0.0, 0.0, 0.0};
  s.doa_box_hi = {10.0, 30.0, 30.0};
  s.ray_t_max = 20.0;
  return s;
}

inline std::vector<std::string> builtin_scenario_names() { return {"linear2d", "tumor3d"}; }

inline ScenarioData builtin_scenario_data(const std::string& name) {
  if (name == "linear2d") return linear2d_data();
  if (name == "tumor3d") return tumor3d_data();
  throw ConfigError("unknown scenario '" + name + "' (expected linear2d or tumor3d)");
}

// ---- Construction -----------------------------------------------------------

inline ControlAffineSystem make_system(const ScenarioData& s) {
  if (s.system_type == "linear") {
    const Mat A = row_major(s.A, s.n, s.n, "system.A");
    const Mat B = row_major(s.B, s.n, s.m, "system.B");
    return ControlAffineSystem(
        s.name, s.n, s.m, [A](const Vec& x) -> Vec { return A * x; }, [B](const Vec&) -> Mat { return B; });
  }
  if (s.system_type == "tumor") {
    if (s.n != 3 || s.m != 1) throw ConfigError("scenario: tumor model is 3 states, 1 input");
    auto get = [&](const char* key) {
      auto it = s.params.find(key);
      if (it == s.params.end()) throw ConfigError(std::string("scenario: missing tumor parameter ") + key);
      if (!(it->second > 0.0)) throw ConfigError(std::string("scenario: tumor parameter must be positive: ") + key);
      return it->second;
    };
    const double a_nt = get("alpha_NT"), a_tn = get("alpha_TN"), beta = get("beta");
    const double k_r = get("K_R"), k_t = get("K_T"), r_r = get("R_R"), r_t = get("R_T");
    // x1 tumor cells, x2 resting immune cells, x3 hunting immune cells.
    auto f = [=](const Vec& x) -> Vec {
      Vec dx(3);
      dx[0] = r_t * x[0] - r_t / k_t * x[0] * x[0] - a_tn * r_t / k_t * x[0] * x[1];
      dx[1] = -a_nt * x[1] * x[0] + beta * x[1] * x[2];
      dx[2] = r_r * x[2] - r_r / k_r * x[2] * x[2] - beta * r_r / k_r * x[1] * x[2];
      return dx;
    };
    auto g = [=](const Vec& x) -> Mat {
      Mat gm = Mat::Zero(3, 1);
      gm(0, 0) = -r_t / k_t * x[0] * x[1];
      return gm;
    };
    return ControlAffineSystem(s.name, 3, 1, f, g);
  }
  throw ConfigError("scenario: unknown system type '" + s.system_type + "'");
}

inline Barrier make_barrier(const BarrierSpec& b, int n) {
  const auto alpha = ExtendedClassK::linear(b.alpha);
  if (b.type == "quadratic") {
    if (static_cast<int>(b.center.size()) != n) throw ConfigError("scenario: barrier center has wrong dimension");
    return quadratic_barrier(b.name, b.offset, to_vec(b.center), row_major(b.matrix, n, n, "barrier matrix"), alpha);
  }
  if (b.type == "exp_positivity") {
    if (b.index < 0 || b.index >= n) throw ConfigError("scenario: barrier index out of range");
    return exp_positivity_barrier(b.name, b.index, alpha);
  }
  throw ConfigError("scenario: unknown barrier type '" + b.type + "'");
}

struct Scenario {
  ScenarioData data;
  ControlAffineSystem sys;
  EquilibriumPair printed_eq;  // as written in the scenario file
  EquilibriumPair eq;          // after optional Newton polishing
  QuadraticClf clf;
  SafeSet safe_set;

  FilterConfig filter_config() const { return filter_config(data.gamma, data.p); }

  FilterConfig filter_config(double gamma, double p) const {
    return FilterConfig(SontagLaw(sys, clf, gamma, data.b_floor), safe_set, p, ExtendedClassK::linear(data.alpha_W));
  }

  SimConfig sim_config() const {
    SimConfig sim;
    sim.dt = data.dt;
    sim.t_final = data.t_final;
    sim.x0 = to_vec(data.x0);
    return sim;
  }

  /// DOA grid: bounding box of {W <= c_hi}, clipped to the scenario box.
  GridSpec doa_grid(std::optional<int> points_per_axis = {}) const {
    const Eigen::Index n = sys.n();
    const Mat Pinv = clf.P().inverse();
    GridSpec grid;
    grid.lo.resize(n);
    grid.hi.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double half = std::sqrt(data.doa_c_hi * Pinv(i, i));
      grid.lo[i] = eq.x[i] - half;
      grid.hi[i] = eq.x[i] + half;
      if (static_cast<Eigen::Index>(data.doa_box_lo.size()) == n) grid.lo[i] = std::max(grid.lo[i], data.doa_box_lo[static_cast<std::size_t>(i)]);
      if (static_cast<Eigen::Index>(data.doa_box_hi.size()) == n) grid.hi[i] = std::min(grid.hi[i], data.doa_box_hi[static_cast<std::size_t>(i)]);
    }
    grid.counts.assign(static_cast<std::size_t>(n), points_per_axis.value_or(data.doa_points_per_axis));
    return grid;
  }
};

/// Builds the objects without checking module invariants; see scenario_problems.
inline Scenario build_scenario_unchecked(const ScenarioData& s) {
  if (s.n <= 0 || s.m <= 0) throw ConfigError("scenario: dimensions must be positive");
  if (static_cast<int>(s.x_e.size()) != s.n || static_cast<int>(s.u_e.size()) != s.m)
    throw ConfigError("scenario: equilibrium has wrong dimension");
  if (s.barriers.empty()) throw ConfigError("scenario: at least one barrier is required");
  auto sys = make_system(s);
  EquilibriumPair printed{to_vec(s.x_e), to_vec(s.u_e)};
  EquilibriumPair eq = s.polish_equilibrium ? polish_equilibrium(sys, printed) : printed;
  QuadraticClf clf(row_major(s.P, s.n, s.n, "clf.P"), eq);
  std::vector<Barrier> barriers;
  for (const auto& b : s.barriers) barriers.push_back(make_barrier(b, s.n));
  return Scenario{s, std::move(sys), printed, eq, std::move(clf), SafeSet(std::move(barriers))};
}

/// Module invariants a scenario must satisfy before it is used for control.
inline std::vector<std::string> scenario_problems(const Scenario& sc) {
  std::vector<std::string> out;
  if (auto why = sc.clf.invariant_violation()) out.push_back("clf: " + *why);
  const double res = equilibrium_residual(sc.sys, sc.printed_eq);
  if (!(res <= sc.data.eq_tol))
    out.push_back("equilibrium residual " + std::to_string(res) + " exceeds tolerance " + std::to_string(sc.data.eq_tol));
  const Vec h = sc.safe_set.values(sc.eq.x);
  for (Eigen::Index i = 0; i < h.size(); ++i)
    if (!(h[i] > 0.0)) out.push_back("barrier " + sc.safe_set.barriers()[static_cast<std::size_t>(i)].name() + " is not positive at x_e");
  if (!(sc.data.gamma > 0.0)) out.push_back("gamma must be positive");
  if (!(sc.data.p > 0.0)) out.push_back("p must be positive");
  return out;
}

inline Scenario build_scenario(const ScenarioData& s) {
  Scenario sc = build_scenario_unchecked(s);
  const auto problems = scenario_problems(sc);
  if (!problems.empty()) throw ConfigError("scenario '" + s.name + "': " + problems.front());
  return sc;
}

inline Scenario build_scenario(const std::string& name) { return build_scenario(builtin_scenario_data(name)); }

/// A bundled name or a path to a scenario file.
inline ScenarioData resolve_scenario_data(const std::string& name_or_path) {
  for (const auto& n : builtin_scenario_names())
    if (n == name_or_path) return builtin_scenario_data(n);
  if (name_or_path.find('/') != std::string::npos || name_or_path.ends_with(".json"))
    return load_scenario_file(name_or_path);
  throw ConfigError("unknown scenario '" + name_or_path + "' (expected linear2d, tumor3d or a .json file)");
}

}  // namespace safestab
