#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "hrpinn/errors.hpp"
#include "hrpinn/systems.hpp"
#include "hrpinn/trajectory.hpp"

namespace hrpinn {

// Mean absolute error over all steps and dimensions.
inline double mae(const std::vector<std::vector<double>>& pred,
                  const std::vector<std::vector<double>>& truth) {
  if (pred.size() != truth.size())
    throw StructuralError("mae: series lengths differ (" + std::to_string(pred.size()) + " vs " +
                          std::to_string(truth.size()) + ")");
  if (pred.empty()) throw StructuralError("mae of empty series");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (pred[k].size() != truth[k].size()) throw StructuralError("mae: row widths differ");
    for (std::size_t i = 0; i < pred[k].size(); ++i) {
      acc += std::abs(pred[k][i] - truth[k][i]);
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

inline double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size()) throw StructuralError("mae: series lengths differ");
  if (pred.empty()) throw StructuralError("mae of empty series");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
  return acc / static_cast<double>(pred.size());
}

inline double mse(const std::vector<std::vector<double>>& pred,
                  const std::vector<std::vector<double>>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw StructuralError("mse: bad series lengths");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < pred.size(); ++k)
    for (std::size_t i = 0; i < pred[k].size(); ++i) {
      const double d = pred[k][i] - truth[k][i];
      acc += d * d;
      ++count;
    }
  return acc / static_cast<double>(count);
}

// Classic dynamic time warping with Euclidean local cost, symmetric
// {match, insert, delete} steps, no band, no path-length normalization.
inline double dtw(const std::vector<std::vector<double>>& a,
                  const std::vector<std::vector<double>>& b) {
  if (a.empty() || b.empty()) throw StructuralError("dtw of empty series");
  const std::size_t na = a.size(), nb = b.size();
  auto cost = [&](std::size_t i, std::size_t j) {
    if (a[i].size() != b[j].size()) throw StructuralError("dtw: state dimensions differ");
    double s = 0.0;
    for (std::size_t d = 0; d < a[i].size(); ++d) {
      const double diff = a[i][d] - b[j][d];
      s += diff * diff;
    }
    return std::sqrt(s);
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(nb + 1, inf), cur(nb + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= na; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= nb; ++j)
      cur[j] = cost(i - 1, j - 1) + std::min({prev[j - 1], prev[j], cur[j - 1]});
    std::swap(prev, cur);
  }
  return prev[nb];
}

inline double dtw(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<std::vector<double>> aa, bb;
  for (double v : a) aa.push_back({v});
  for (double v : b) bb.push_back({v});
  return dtw(aa, bb);
}

// Mean and max over steps of |g(h_k, t_k)|_inf. Out-of-domain states
// yield NaN entries which propagate into the statistics.
inline std::pair<double, double> violation_stats(const Trajectory& traj, const System& sys) {
  if (traj.states.empty()) throw StructuralError("violation_stats of empty trajectory");
  std::vector<double> g(sys.constraint_dim());
  double acc = 0.0, worst = 0.0;
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    double v;
    try {
      sys.constraint(traj.states[k].data(), traj.time(k), g.data());
      v = 0.0;
      for (double gi : g) v = std::max(v, std::abs(gi));
    } catch (const DomainError&) {
      v = std::numeric_limits<double>::quiet_NaN();
    }
    acc += v;
    if (std::isnan(v))
      worst = v;
    else if (!std::isnan(worst))
      worst = std::max(worst, v);
  }
  return {acc / static_cast<double>(traj.states.size()), worst};
}

}  // namespace hrpinn
