#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <span>
#include <vector>

#include "big/cmdp.hpp"
#include "big/error.hpp"
#include "big/io.hpp"
#include "big/planning.hpp"

namespace big {

/// Tabular contextual successor features psi[s, a, theta] in R^d with a
/// target copy used for off-policy bootstraps. Rows of terminal states are
/// pinned to their closed form and never updated: nu / (1 - gamma) when
/// terminals absorb, zero otherwise.
struct SuccessorTable {
  int num_states = 0;
  int num_actions = 0;
  int num_contexts = 0;
  int dim = 0;
  double learning_rate = 1e-3;
  int target_sync_period = 50;
  std::vector<double> psi;
  std::vector<double> psi_target;
  std::vector<char> pinned;  // per state

  std::size_t offset(int s, int a, int theta) const {
    return ((static_cast<std::size_t>(theta) * num_states + s) * num_actions + a) * dim;
  }
  std::span<const double> row(int s, int a, int theta) const {
    return {psi.data() + offset(s, a, theta), static_cast<std::size_t>(dim)};
  }
  std::span<double> row(int s, int a, int theta) {
    return {psi.data() + offset(s, a, theta), static_cast<std::size_t>(dim)};
  }
  std::span<const double> target_row(int s, int a, int theta) const {
    return {psi_target.data() + offset(s, a, theta), static_cast<std::size_t>(dim)};
  }

  void check(int s, int a, int theta) const {
    if (s < 0 || s >= num_states || a < 0 || a >= num_actions || theta < 0 || theta >= num_contexts)
      throw Error(ErrorCode::kIndexOutOfRange, "SF index (" + std::to_string(s) + "," +
                                                   std::to_string(a) + "," + std::to_string(theta) + ")");
  }

  /// Q(s, a, theta) = psi^T omega.
  double q(int s, int a, int theta, std::span<const double> omega, bool target = false) const {
    return dot(target ? target_row(s, a, theta) : row(s, a, theta), omega);
  }
};

inline SuccessorTable make_successor_table(const ContextualMdp& mdp, double learning_rate = 1e-3,
                                           int target_sync_period = 50) {
  if (target_sync_period < 1) throw Error(ErrorCode::kInvalidSpec, "target sync period must be >= 1");
  SuccessorTable t;
  t.num_states = mdp.num_states;
  t.num_actions = mdp.num_actions;
  t.num_contexts = mdp.num_contexts;
  t.dim = mdp.feature_dim;
  t.learning_rate = learning_rate;
  t.target_sync_period = target_sync_period;
  t.psi.assign(static_cast<std::size_t>(mdp.num_contexts) * mdp.num_cells() * mdp.feature_dim, 0.0);
  t.pinned.assign(mdp.num_states, 0);
  const double scale = mdp.terminal_mode == TerminalMode::kAbsorbing ? 1.0 / (1.0 - mdp.gamma) : 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    if (!mdp.is_terminal(s)) continue;
    t.pinned[s] = 1;
    for (int theta = 0; theta < mdp.num_contexts; ++theta)
      for (int a = 0; a < mdp.num_actions; ++a) {
        const auto nu = mdp.feature(s, a);
        auto r = t.row(s, a, theta);
        for (int k = 0; k < t.dim; ++k) r[k] = scale * nu[k];
      }
  }
  t.psi_target = t.psi;
  return t;
}

inline void sync_target(SuccessorTable& table) { table.psi_target = table.psi; }

/// Syncs the target copy when `step` (1-based) is a multiple of the period.
inline bool maybe_sync_target(SuccessorTable& table, long long step) {
  if (step % table.target_sync_period != 0) return false;
  sync_target(table);
  return true;
}

namespace detail {

inline void td_step(SuccessorTable& table, const ContextualMdp& mdp, int s, int a, int theta,
                    std::span<const double> bootstrap, double lr) {
  if (table.pinned[s]) return;
  const auto nu = mdp.feature(s, a);
  auto r = table.row(s, a, theta);
  const double g = mdp.gamma;
  for (int k = 0; k < table.dim; ++k) r[k] += lr * (nu[k] + g * bootstrap[k] - r[k]);
}

}  // namespace detail

/// On-policy update from an expert transition (s, a, s', a'):
/// psi[s,a,theta] += lr (nu(s,a) + gamma psi[s',a',theta] - psi[s,a,theta]).
/// When s' is terminal the pinned row supplies the bootstrap and a' may be -1.
inline void expert_td_update(SuccessorTable& table, const ContextualMdp& mdp, int s, int a, int next,
                             int next_action, int theta, double lr_scale = 1.0) {
  if (next_action < 0 && next >= 0 && next < table.num_states && table.pinned[next]) next_action = 0;
  table.check(s, a, theta);
  table.check(next, next_action, theta);
  const std::vector<double> boot(table.row(next, next_action, theta).begin(),
                                 table.row(next, next_action, theta).end());
  detail::td_step(table, mdp, s, a, theta, boot, table.learning_rate * lr_scale);
}

/// Greedy action under Q = psi^T omega, ties to the lowest index.
inline int greedy_sf_action(const SuccessorTable& table, int s, int theta, std::span<const double> omega,
                            bool target = false) {
  int best = 0;
  double best_q = table.q(s, 0, theta, omega, target);
  for (int a = 1; a < table.num_actions; ++a) {
    const double q = table.q(s, a, theta, omega, target);
    if (q > best_q) {
      best_q = q;
      best = a;
    }
  }
  return best;
}

/// Off-policy update from a simulator transition (s, a, s'): a' is greedy
/// under the online table and omega, the bootstrap comes from the target.
inline void simulator_td_update(SuccessorTable& table, const ContextualMdp& mdp, int s, int a, int next,
                                int theta, std::span<const double> omega, double lr_scale = 1.0) {
  table.check(s, a, theta);
  table.check(next, 0, theta);
  if (static_cast<int>(omega.size()) != table.dim)
    throw Error(ErrorCode::kDimensionMismatch, "omega dimension " + std::to_string(omega.size()));
  const int next_action = greedy_sf_action(table, next, theta, omega);
  const std::vector<double> boot(table.target_row(next, next_action, theta).begin(),
                                 table.target_row(next, next_action, theta).end());
  detail::td_step(table, mdp, s, a, theta, boot, table.learning_rate * lr_scale);
}

/// Exact successor features of a stationary policy on the theta-slice:
/// Psi = (I - gamma P_pi)^{-1} nu. Returned as [(s * A + a) * d + k].
inline std::vector<double> solve_sf_exact(const ContextualMdp& mdp, std::span<const double> policy,
                                          int theta) {
  mdp.check_context(theta);
  const int n = mdp.num_cells(), d = mdp.feature_dim;
  Eigen::MatrixXd rhs(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) rhs(i, k) = mdp.features[static_cast<std::size_t>(i) * d + k];
  if (mdp.terminal_mode == TerminalMode::kZeroContinuation)
    for (int s = 0; s < mdp.num_states; ++s)
      if (mdp.is_terminal(s)) rhs.middleRows(s * mdp.num_actions, mdp.num_actions).setZero();
  const Eigen::MatrixXd x = solve_dense(state_action_operator(mdp, theta, policy), rhs);
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) out[static_cast<std::size_t>(i) * d + k] = x(i, k);
  return out;
}

/// Table filled with the exact successor features of one stationary policy
/// per context; the target is synced.
inline SuccessorTable exact_successor_table(const ContextualMdp& mdp,
                                            const std::vector<std::vector<double>>& policy_by_context,
                                            double learning_rate = 1e-3, int target_sync_period = 50) {
  if (static_cast<int>(policy_by_context.size()) != mdp.num_contexts)
    throw Error(ErrorCode::kDimensionMismatch, "need one policy per context");
  SuccessorTable t = make_successor_table(mdp, learning_rate, target_sync_period);
  for (int theta = 0; theta < mdp.num_contexts; ++theta) {
    const auto exact = solve_sf_exact(mdp, policy_by_context[theta], theta);
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a) {
        auto r = t.row(s, a, theta);
        for (int k = 0; k < t.dim; ++k) r[k] = exact[(static_cast<std::size_t>(s) * mdp.num_actions + a) * t.dim + k];
      }
  }
  sync_target(t);
  return t;
}

/// One synchronous sweep of the TD update with the bootstrap averaged over
/// next states and next actions of `policy`: the expected form of
/// expert_td_update, applied to every non-pinned (s, a) of the theta-slice.
inline void expected_td_sweep(SuccessorTable& table, const ContextualMdp& mdp, std::span<const double> policy,
                              int theta, double lr_scale = 1.0) {
  const int A = mdp.num_actions;
  std::vector<double> boot(table.dim);
  const SuccessorTable before = table;
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < A; ++a) {
      std::fill(boot.begin(), boot.end(), 0.0);
      for (int n = 0; n < mdp.num_states; ++n) {
        const double p = mdp.prob(s, a, theta, n);
        if (p == 0.0) continue;
        for (int b = 0; b < A; ++b) {
          const double w = p * policy[n * A + b];
          if (w == 0.0) continue;
          const auto next = before.row(n, b, theta);
          for (int k = 0; k < table.dim; ++k) boot[k] += w * next[k];
        }
      }
      detail::td_step(table, mdp, s, a, theta, boot, table.learning_rate * lr_scale);
    }
}

/// Largest |psi - exact| over the theta-slice.
inline double max_abs_difference(const SuccessorTable& table, std::span<const double> exact, int theta) {
  double worst = 0.0;
  for (int s = 0; s < table.num_states; ++s)
    for (int a = 0; a < table.num_actions; ++a) {
      const auto r = table.row(s, a, theta);
      for (int k = 0; k < table.dim; ++k)
        worst = std::max(worst, std::abs(r[k] - exact[(static_cast<std::size_t>(s) * table.num_actions + a) *
                                                          table.dim + k]));
    }
  return worst;
}

/// Sup-norm Bellman residual of the table for a stationary policy on the
/// theta-slice, in expectation over next states and next actions.
inline double bellman_residual(const SuccessorTable& table, const ContextualMdp& mdp,
                               std::span<const double> policy, int theta) {
  const int A = mdp.num_actions;
  double worst = 0.0;
  std::vector<double> target(table.dim);
  for (int s = 0; s < mdp.num_states; ++s) {
    if (table.pinned[s]) continue;
    for (int a = 0; a < A; ++a) {
      const auto nu = mdp.feature(s, a);
      for (int k = 0; k < table.dim; ++k) target[k] = nu[k];
      for (int n = 0; n < mdp.num_states; ++n) {
        const double p = mdp.prob(s, a, theta, n);
        if (p == 0.0) continue;
        for (int b = 0; b < A; ++b) {
          const double w = p * policy[n * A + b];
          if (w == 0.0) continue;
          const auto next = table.row(n, b, theta);
          for (int k = 0; k < table.dim; ++k) target[k] += mdp.gamma * w * next[k];
        }
      }
      const auto cur = table.row(s, a, theta);
      for (int k = 0; k < table.dim; ++k) worst = std::max(worst, std::abs(target[k] - cur[k]));
    }
  }
  return worst;
}

inline void write_successor_csv(const std::filesystem::path& path, const SuccessorTable& table) {
  CsvWriter out(path, {"s", "a", "theta", "dim", "value"});
  for (int theta = 0; theta < table.num_contexts; ++theta)
    for (int s = 0; s < table.num_states; ++s)
      for (int a = 0; a < table.num_actions; ++a) {
        const auto r = table.row(s, a, theta);
        for (int k = 0; k < table.dim; ++k) out.row(s, a, theta, k, r[k]);
      }
}

/// Loads values into a table of matching shape; the target is synced.
inline void read_successor_csv(const std::filesystem::path& path, SuccessorTable& table) {
  const CsvTable csv = read_csv(path);
  const int cs = csv.column("s"), ca = csv.column("a"), ct = csv.column("theta"), cd = csv.column("dim"),
            cv = csv.column("value");
  for (const auto& r : csv.rows) {
    const int s = static_cast<int>(parse_int(r[cs], "s")), a = static_cast<int>(parse_int(r[ca], "a")),
              theta = static_cast<int>(parse_int(r[ct], "theta")), k = static_cast<int>(parse_int(r[cd], "dim"));
    table.check(s, a, theta);
    if (k < 0 || k >= table.dim) throw Error(ErrorCode::kIndexOutOfRange, "SF dim " + std::to_string(k));
    table.row(s, a, theta)[k] = parse_double(r[cv], "value");
  }
  sync_target(table);
}

}  // namespace big
