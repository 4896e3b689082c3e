#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "big/error.hpp"

namespace big {

struct Rescaled {
  std::vector<double> table;
  double scale = 1.0;  // a in r -> a r + b
  double shift = 0.0;  // b
};

/// Positive affine map sending min(table) to r_min and max(table) to r_max.
/// A constant table is degenerate: it maps to r_min and a warning is printed.
inline Rescaled rescale(std::span<const double> raw, double r_min, double r_max, bool warn = true) {
  if (!(r_min < r_max)) throw Error(ErrorCode::kInvalidSpec, "r_min must be below r_max");
  if (raw.empty()) throw Error(ErrorCode::kDegenerateRange, "empty reward table");
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it, hi = *hi_it;
  Rescaled out;
  if (!(hi > lo)) {
    if (warn) std::cerr << "warning: DegenerateRange: constant reward table mapped to r_min\n";
    out.table.assign(raw.size(), r_min);
    out.scale = 0.0;
    out.shift = r_min;
    return out;
  }
  out.scale = (r_max - r_min) / (hi - lo);
  out.shift = r_min - out.scale * lo;
  out.table.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    // Pin the extremes so they land on the bounds exactly.
    if (raw[i] == lo)
      out.table[i] = r_min;
    else if (raw[i] == hi)
      out.table[i] = r_max;
    else
      out.table[i] = std::clamp(r_min + (raw[i] - lo) * out.scale, r_min, r_max);
  }
  return out;
}

/// Uniform prior over the exploration scale k on [a, b].
struct UniformKPrior {
  double a = 0.0;
  double b = 0.0;
  double mean() const { return 0.5 * (a + b); }
};

struct CoeSpec {
  /// Cells (s, a) whose reward is replaced by the prior mean.
  std::vector<std::pair<int, int>> cells;
  double k_star = 0.5;
  double r_min = -1.0;
  double r_max = 1.0;
  /// Optional per-cell scale; overrides k_star where present.
  std::vector<double> per_cell_k;
  /// Reward-model variance of the exploration cells; affects the predictive
  /// variance only.
  double sigma_sq = 1.0;

  static CoeSpec from_uniform(std::vector<std::pair<int, int>> cells, UniformKPrior prior, double r_min,
                              double r_max) {
    CoeSpec spec;
    spec.cells = std::move(cells);
    spec.k_star = prior.mean();
    spec.r_min = r_min;
    spec.r_max = r_max;
    if (!(prior.a <= prior.b) || prior.a < r_min / r_max || prior.b > 1.0)
      throw Error(ErrorCode::kInvalidSpec, "k prior support must lie in [r_min/r_max, 1]");
    return spec;
  }

  double cell_value(std::size_t i) const { return r_max * (i < per_cell_k.size() ? per_cell_k[i] : k_star); }

  void check() const {
    if (!(r_min < r_max) || !(r_max > 0.0))
      throw Error(ErrorCode::kInvalidSpec, "need r_min < r_max and r_max > 0");
    const auto in_range = [&](double k) { return k >= r_min / r_max - 1e-12 && k <= 1.0; };
    if (!in_range(k_star))
      throw Error(ErrorCode::kInvalidSpec, "k* = " + std::to_string(k_star) + " outside [r_min/r_max, 1]");
    for (double k : per_cell_k)
      if (!in_range(k)) throw Error(ErrorCode::kInvalidSpec, "per-cell k outside [r_min/r_max, 1]");
  }
};

enum class Provenance { kIrl, kCoe };

inline const char* to_string(Provenance p) { return p == Provenance::kIrl ? "IRL" : "COE"; }

/// Final predictive reward over (s, a), indexed [s * A + a].
struct PredictiveReward {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> table;
  std::vector<Provenance> provenance;

  double at(int s, int a) const { return table[static_cast<std::size_t>(s) * num_actions + a]; }
};

inline PredictiveReward irl_only(std::vector<double> table, int num_states, int num_actions) {
  if (static_cast<int>(table.size()) != num_states * num_actions)
    throw Error(ErrorCode::kDimensionMismatch, "reward table size");
  PredictiveReward out{num_states, num_actions, std::move(table), {}};
  out.provenance.assign(out.table.size(), Provenance::kIrl);
  return out;
}

/// Overwrites the exploration cells with r_max * k and tags them COE.
inline PredictiveReward apply_coe(std::span<const double> scaled, int num_states, int num_actions,
                                  const CoeSpec& spec) {
  PredictiveReward out = irl_only(std::vector<double>(scaled.begin(), scaled.end()), num_states, num_actions);
  if (spec.cells.empty()) return out;
  spec.check();
  for (std::size_t i = 0; i < spec.cells.size(); ++i) {
    const auto [s, a] = spec.cells[i];
    if (s < 0 || s >= num_states || a < 0 || a >= num_actions)
      throw Error(ErrorCode::kCoeCellOutOfRange, "(" + std::to_string(s) + "," + std::to_string(a) + ")");
    const std::size_t idx = static_cast<std::size_t>(s) * num_actions + a;
    out.table[idx] = spec.cell_value(i);
    out.provenance[idx] = Provenance::kCoe;
  }
  return out;
}

enum class Normalization {
  /// Divide by the largest absolute value.
  kMaxAbs,
  /// Subtract the mean and divide by the standard deviation.
  kStandardize,
};

inline std::vector<double> normalize_for_training(std::span<const double> table,
                                                  Normalization mode = Normalization::kMaxAbs) {
  double max_abs = 0.0;
  for (double r : table) max_abs = std::max(max_abs, std::abs(r));
  if (max_abs == 0.0) throw Error(ErrorCode::kAllZero, "reward table is identically zero");
  std::vector<double> out(table.begin(), table.end());
  if (mode == Normalization::kMaxAbs) {
    for (double& r : out) r /= max_abs;
    return out;
  }
  double mean = 0.0;
  for (double r : out) mean += r;
  mean /= static_cast<double>(out.size());
  double var = 0.0;
  for (double r : out) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(out.size()));
  if (sd == 0.0) throw Error(ErrorCode::kDegenerateRange, "cannot standardize a constant table");
  for (double& r : out) r = (r - mean) / sd;
  return out;
}

}  // namespace big
