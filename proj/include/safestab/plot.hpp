#pragma once

#include "safestab/csv.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace safestab {

// Emits standalone matplotlib scripts that read trajectory CSVs at run time.
// Nothing is rendered here.

struct PlotInput {
  std::filesystem::path csv;
  std::string label;
  int n = 0;
  int m = 0;
  int k = 0;
};

/// Reads and schema-checks each CSV; throws ConfigError on an empty or malformed file.
inline std::vector<PlotInput> inspect_plot_inputs(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw ConfigError("plot: no CSV files given");
  std::vector<PlotInput> out;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw ConfigError("plot: cannot open " + path.string());
    const CsvTable table = read_csv(in);
    check_trajectory_schema(table);
    if (table.rows.empty()) throw ConfigError("plot: " + path.string() + " has no data rows");
    out.push_back({path, path.stem().string(), table.count_prefixed("x"), table.count_prefixed("u"),
                   table.count_prefixed("h")});
  }
  return out;
}

namespace detail {

inline std::string python_list(const std::vector<std::string>& items) {
  std::ostringstream s;
  s << '[';
  for (std::size_t i = 0; i < items.size(); ++i) s << (i ? ", " : "") << '"' << items[i] << '"';
  s << ']';
  return s.str();
}

inline std::string script_prelude(const std::vector<PlotInput>& inputs) {
  std::vector<std::string> files, labels;
  for (const auto& in : inputs) {
    files.push_back(std::filesystem::absolute(in.csv).string());
    labels.push_back(in.label);
  }
  std::ostringstream s;
  s << "#!/usr/bin/env python3\n"
    << "import csv\n"
    << "import matplotlib\n"
    << "matplotlib.use('Agg')\n"
    << "import matplotlib.pyplot as plt\n"
    << "from matplotlib import cm\n\n"
    << "FILES = " << python_list(files) << "\n"
    << "LABELS = " << python_list(labels) << "\n\n"
    << "def load(path):\n"
    << "    with open(path) as fh:\n"
    << "        rows = list(csv.reader(fh))\n"
    << "    header, data = rows[0], [[float(v) for v in r] for r in rows[1:] if r]\n"
    << "    return {name: [row[i] for row in data] for i, name in enumerate(header)}\n\n"
    << "runs = [load(f) for f in FILES]\n"
    << "colors = cm.viridis([i / max(1, len(runs) - 1) for i in range(len(runs))])\n";
  return s.str();
}

}  // namespace detail

/// State components and inputs versus time, one color per CSV.
inline std::string time_series_script(const std::vector<PlotInput>& inputs, const std::string& png) {
  const int n = inputs.front().n;
  const int m = inputs.front().m;
  std::ostringstream s;
  s << detail::script_prelude(inputs) << "\nN, M = " << n << ", " << m << "\n"
    << "fig, axes = plt.subplots(N + M, 1, sharex=True, figsize=(7, 2.2 * (N + M)))\n"
    << "for run, color, label in zip(runs, colors, LABELS):\n"
    << "    for i in range(N):\n"
    << "        axes[i].plot(run['t'], run['x_%d' % (i + 1)], color=color, label=label)\n"
    << "        axes[i].set_ylabel('x_%d' % (i + 1))\n"
    << "    for j in range(M):\n"
    << "        axes[N + j].plot(run['t'], run['u_%d' % (j + 1)], color=color, label=label)\n"
    << "        axes[N + j].set_ylabel('u_%d' % (j + 1))\n"
    << "axes[-1].set_xlabel('t')\n"
    << "axes[0].legend(fontsize='small')\n"
    << "fig.tight_layout()\n"
    << "fig.savefig('" << png << "', dpi=150)\n";
  return s.str();
}

/// x_1 against x_2 with the safe-set boundary drawn from the given points.
inline std::string phase_portrait_script(const std::vector<PlotInput>& inputs, const std::vector<Vec>& boundary,
                                         const std::string& png) {
  std::ostringstream s;
  s << detail::script_prelude(inputs) << "\nBOUNDARY = [";
  for (std::size_t i = 0; i < boundary.size(); ++i)
    s << (i ? ", " : "") << '(' << format_double(boundary[i][0]) << ", " << format_double(boundary[i][1]) << ')';
  s << "]\n"
    << "fig, ax = plt.subplots(figsize=(6, 6))\n"
    << "if BOUNDARY:\n"
    << "    bx = [p[0] for p in BOUNDARY] + [BOUNDARY[0][0]]\n"
    << "    by = [p[1] for p in BOUNDARY] + [BOUNDARY[0][1]]\n"
    << "    ax.fill(bx, by, color='0.92', zorder=0)\n"
    << "    ax.plot(bx, by, 'k-', lw=1, label='h = 0')\n"
    << "for run, color, label in zip(runs, colors, LABELS):\n"
    << "    ax.plot(run['x_1'], run['x_2'], color=color, label=label)\n"
    << "    ax.plot(run['x_1'][0], run['x_2'][0], 'o', color=color)\n"
    << "ax.plot(0, 0, 'k+')\n"
    << "ax.set_xlabel('x_1')\n"
    << "ax.set_ylabel('x_2')\n"
    << "ax.set_aspect('equal')\n"
    << "ax.legend(fontsize='small')\n"
    << "fig.tight_layout()\n"
    << "fig.savefig('" << png << "', dpi=150)\n";
  return s.str();
}

}  // namespace safestab
