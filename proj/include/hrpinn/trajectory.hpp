#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hrpinn/errors.hpp"

namespace hrpinn {

// Uniform-grid state series, optionally with an exogenous input series.
struct Trajectory {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<std::vector<double>> states;  // K+1 rows of dimension n
  std::vector<std::vector<double>> inputs;  // empty or K+1 rows of dimension d

  std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
  std::size_t state_dim() const { return states.empty() ? 0 : states.front().size(); }
  std::size_t input_dim() const { return inputs.empty() ? 0 : inputs.front().size(); }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }

  void validate() const {
    if (states.empty()) throw StructuralError("trajectory has no states");
    if (dt <= 0.0 && states.size() > 1) throw StructuralError("trajectory needs dt > 0");
    const std::size_t n = states.front().size();
    for (const auto& row : states) {
      if (row.size() != n) throw StructuralError("ragged trajectory state rows");
      for (double v : row)
        if (!std::isfinite(v)) throw DivergenceError("non-finite trajectory entry");
    }
    if (!inputs.empty() && inputs.size() != states.size())
      throw StructuralError("trajectory inputs do not cover the horizon");
  }
};

namespace detail {
inline void put_g17(std::ostream& os, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}
}  // namespace detail

// CSV with header t,x0,...,x{n-1}[,w0,...], 17 significant digits.
inline void save_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  traj.validate();
  os << 't';
  for (std::size_t i = 0; i < traj.state_dim(); ++i) os << ",x" << i;
  for (std::size_t i = 0; i < traj.input_dim(); ++i) os << ",w" << i;
  os << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    detail::put_g17(os, traj.time(k));
    for (double v : traj.states[k]) {
      os << ',';
      detail::put_g17(os, v);
    }
    if (!traj.inputs.empty())
      for (double v : traj.inputs[k]) {
        os << ',';
        detail::put_g17(os, v);
      }
    os << '\n';
  }
}

inline void save_trajectory_csv_file(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw StructuralError("cannot open trajectory file for writing: " + path);
  save_trajectory_csv(os, traj);
}

inline Trajectory load_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw StructuralError("empty trajectory CSV");
  std::size_t n = 0, d = 0;
  {
    std::stringstream hs(line);
    std::string col;
    bool first = true;
    while (std::getline(hs, col, ',')) {
      if (first) {
        if (col != "t") throw StructuralError("trajectory CSV must start with column 't'");
        first = false;
      } else if (col.rfind("x", 0) == 0)
        ++n;
      else if (col.rfind("w", 0) == 0)
        ++d;
      else
        throw StructuralError("unexpected trajectory CSV column '" + col + "'");
    }
  }
  Trajectory traj;
  std::vector<double> times;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != 1 + n + d) throw StructuralError("trajectory CSV row width mismatch");
    times.push_back(row[0]);
    traj.states.emplace_back(row.begin() + 1, row.begin() + 1 + static_cast<long>(n));
    if (d > 0) traj.inputs.emplace_back(row.begin() + 1 + static_cast<long>(n), row.end());
  }
  if (times.empty()) throw StructuralError("trajectory CSV has no rows");
  traj.t0 = times.front();
  traj.dt = times.size() > 1 ? times[1] - times[0] : 0.0;
  traj.validate();
  return traj;
}

inline Trajectory load_trajectory_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw StructuralError("cannot open trajectory file: " + path);
  return load_trajectory_csv(is);
}

}  // namespace hrpinn
