#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "big/belief.hpp"
#include "big/cmdp.hpp"
#include "big/error.hpp"

namespace big {

/// Lowest index whose value is within `tie_tol` of the maximum.
inline int argmax_lowest(std::span<const double> values, double tie_tol = 1e-10) {
  double best = values[0];
  for (double v : values) best = std::max(best, v);
  const double slack = tie_tol * std::max(1.0, std::abs(best));
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] >= best - slack) return static_cast<int>(i);
  return 0;
}

/// pi(a | s) uniform over the actions within tie_tol of the best Q-value.
inline std::vector<double> uniform_over_optimal(std::span<const double> q, int num_states, int num_actions,
                                                double tie_tol = 1e-9) {
  std::vector<double> pi(q.size(), 0.0);
  for (int s = 0; s < num_states; ++s) {
    const auto row = q.subspan(static_cast<std::size_t>(s) * num_actions, num_actions);
    const double best = *std::max_element(row.begin(), row.end());
    const double slack = tie_tol * std::max(1.0, std::abs(best));
    int count = 0;
    for (double v : row) count += v >= best - slack;
    for (int a = 0; a < num_actions; ++a)
      if (row[a] >= best - slack) pi[s * num_actions + a] = 1.0 / count;
  }
  return pi;
}

/// Value of continuing from `next` given a state-value vector; terminal
/// states contribute nothing in zero-continuation mode.
inline double continuation(const ContextualMdp& mdp, int next, std::span<const double> value) {
  if (mdp.is_terminal(next) && mdp.terminal_mode == TerminalMode::kZeroContinuation) return 0.0;
  return value[next];
}

struct ValueIterationResult {
  std::vector<double> q;  // [s * A + a]
  std::vector<double> v;
  std::vector<int> greedy;
  int iterations = 0;
};

/// Optimal Q on the theta-slice MDP for a reward table indexed [s * A + a].
inline ValueIterationResult value_iteration(const ContextualMdp& mdp, int theta,
                                            std::span<const double> reward, double tol = 1e-12,
                                            int max_iterations = 1'000'000) {
  mdp.check_context(theta);
  const int S = mdp.num_states, A = mdp.num_actions;
  if (static_cast<int>(reward.size()) != S * A)
    throw Error(ErrorCode::kDimensionMismatch, "reward table size");
  ValueIterationResult out;
  out.q.assign(S * A, 0.0);
  out.v.assign(S, 0.0);
  const bool zero_cont = mdp.terminal_mode == TerminalMode::kZeroContinuation;
  for (int it = 0; it < max_iterations; ++it) {
    double delta = 0.0;
    for (int s = 0; s < S; ++s) {
      if (zero_cont && mdp.is_terminal(s)) continue;
      for (int a = 0; a < A; ++a) {
        double backup = 0.0;
        const auto row = mdp.next_state_dist(s, a, theta);
        for (int n = 0; n < S; ++n)
          if (row[n] != 0.0) backup += row[n] * continuation(mdp, n, out.v);
        const double q = reward[s * A + a] + mdp.gamma * backup;
        delta = std::max(delta, std::abs(q - out.q[s * A + a]));
        out.q[s * A + a] = q;
      }
    }
    for (int s = 0; s < S; ++s)
      out.v[s] = *std::max_element(out.q.begin() + s * A, out.q.begin() + (s + 1) * A);
    out.iterations = it + 1;
    if (delta <= tol) break;
  }
  out.greedy.resize(S);
  for (int s = 0; s < S; ++s)
    out.greedy[s] = argmax_lowest(std::span<const double>(out.q).subspan(s * A, A));
  return out;
}

/// Builds I - gamma * P_pi over state-action pairs of the theta-slice, where
/// policy[s * A + a] = pi(a | s).
inline Eigen::MatrixXd state_action_operator(const ContextualMdp& mdp, int theta,
                                             std::span<const double> policy) {
  const int S = mdp.num_states, A = mdp.num_actions, n = S * A;
  if (static_cast<int>(policy.size()) != n)
    throw Error(ErrorCode::kDimensionMismatch, "policy table size");
  const bool zero_cont = mdp.terminal_mode == TerminalMode::kZeroContinuation;
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
  for (int s = 0; s < S; ++s) {
    if (zero_cont && mdp.is_terminal(s)) continue;
    for (int a = 0; a < A; ++a) {
      const auto row = mdp.next_state_dist(s, a, theta);
      for (int next = 0; next < S; ++next) {
        if (row[next] == 0.0) continue;
        if (zero_cont && mdp.is_terminal(next)) continue;
        for (int b = 0; b < A; ++b)
          m(s * A + a, next * A + b) -= mdp.gamma * row[next] * policy[next * A + b];
      }
    }
  }
  return m;
}

inline Eigen::MatrixXd solve_dense(const Eigen::MatrixXd& m, const Eigen::MatrixXd& rhs) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible()) throw Error(ErrorCode::kSingularSystem, "policy evaluation system");
  Eigen::MatrixXd x = lu.solve(rhs);
  if (!x.allFinite()) throw Error(ErrorCode::kSingularSystem, "non-finite solution");
  return x;
}

/// Deterministic policy as a probability table.
inline std::vector<double> policy_table(const ContextualMdp& mdp, std::span<const int> actions) {
  std::vector<double> table(mdp.num_cells(), 0.0);
  for (int s = 0; s < mdp.num_states; ++s) table[s * mdp.num_actions + actions[s]] = 1.0;
  return table;
}

inline std::vector<double> uniform_policy_table(const ContextualMdp& mdp) {
  return std::vector<double>(mdp.num_cells(), 1.0 / mdp.num_actions);
}

struct PolicyValue {
  std::vector<double> q;  // [s * A + a]
  std::vector<double> v;  // [s]
};

/// Exact evaluation of a stationary stochastic policy on the theta-slice.
inline PolicyValue evaluate_policy_exact(const ContextualMdp& mdp, int theta,
                                         std::span<const double> policy,
                                         std::span<const double> reward) {
  mdp.check_context(theta);
  const int S = mdp.num_states, A = mdp.num_actions;
  Eigen::VectorXd r(S * A);
  for (int i = 0; i < S * A; ++i) r[i] = reward[i];
  if (mdp.terminal_mode == TerminalMode::kZeroContinuation)
    for (int s = 0; s < S; ++s)
      if (mdp.is_terminal(s))
        for (int a = 0; a < A; ++a) r[s * A + a] = 0.0;
  const Eigen::MatrixXd q = solve_dense(state_action_operator(mdp, theta, policy), r);
  PolicyValue out;
  out.q.assign(q.data(), q.data() + S * A);
  out.v.assign(S, 0.0);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) out.v[s] += policy[s * A + a] * out.q[s * A + a];
  return out;
}

/// Expected discounted return from the initial distribution, averaged over
/// the context prior; policy_by_context[theta] is a probability table.
inline double prior_averaged_return(const ContextualMdp& mdp,
                                    const std::vector<std::vector<double>>& policy_by_context,
                                    std::span<const double> reward) {
  double total = 0.0;
  for (int theta = 0; theta < mdp.num_contexts; ++theta) {
    if (mdp.context_prior[theta] == 0.0) continue;
    const auto value = evaluate_policy_exact(mdp, theta, policy_by_context[theta], reward);
    double start = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) start += mdp.initial_dist[s] * value.v[s];
    total += mdp.context_prior[theta] * start;
  }
  return total;
}

/// Discounted visitation of each state from the initial distribution under a
/// stationary policy on the theta-slice.
inline std::vector<double> state_occupancy(const ContextualMdp& mdp, int theta,
                                           std::span<const double> policy) {
  const int S = mdp.num_states, A = mdp.num_actions;
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(S, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      for (int n = 0; n < S; ++n)
        m(n, s) -= mdp.gamma * policy[s * A + a] * mdp.prob(s, a, theta, n);
  Eigen::VectorXd d0(S);
  for (int s = 0; s < S; ++s) d0[s] = mdp.initial_dist[s];
  const Eigen::MatrixXd d = solve_dense(m, d0);
  return {d.data(), d.data() + S};
}

/// Action selection from the current state and belief.
using BeliefPolicy = std::function<int(int state, const BeliefState& belief)>;

/// Reward collected per step once a terminal state is entered.
inline double terminal_reward(const ContextualMdp& mdp, std::span<const double> reward, int s) {
  if (mdp.terminal_mode == TerminalMode::kZeroContinuation) return 0.0;
  return reward[s * mdp.num_actions];
}

/// Discounted sum gamma^t r over t in [from, to).
inline double geometric_tail(double gamma, int from, int to, double r) {
  if (to <= from || r == 0.0) return 0.0;
  return r * (std::pow(gamma, from) - std::pow(gamma, to)) / (1.0 - gamma);
}

namespace detail {

using BeliefNodeKey = std::tuple<int, int, std::vector<std::int64_t>>;

inline double belief_tree_value(const ContextualMdp& mdp, std::span<const double> reward,
                                const BeliefPolicy* policy, int t, int s, const BeliefState& b,
                                int horizon, std::map<BeliefNodeKey, double>& memo) {
  // Value from step t onward, discounted relative to step t.
  if (t >= horizon) return 0.0;
  if (mdp.is_terminal(s)) return geometric_tail(mdp.gamma, 0, horizon - t, terminal_reward(mdp, reward, s));
  BeliefNodeKey key{t, s, b.key()};
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  const auto action_value = [&](int a) {
    double v = reward[s * mdp.num_actions + a];
    for (const auto& o : bayesian_transition(b, s, a, mdp))
      v += mdp.gamma * o.probability *
           belief_tree_value(mdp, reward, policy, t + 1, o.next_state, o.belief, horizon, memo);
    return v;
  };
  double value;
  if (policy) {
    value = action_value((*policy)(s, b));
  } else {
    value = action_value(0);
    for (int a = 1; a < mdp.num_actions; ++a) value = std::max(value, action_value(a));
  }
  memo.emplace(std::move(key), value);
  return value;
}

inline double belief_root_value(const ContextualMdp& mdp, std::span<const double> reward,
                                const BeliefPolicy* policy, int horizon) {
  if (static_cast<int>(reward.size()) != mdp.num_cells())
    throw Error(ErrorCode::kDimensionMismatch, "reward table size");
  std::map<BeliefNodeKey, double> memo;
  const BeliefState prior = BeliefState::from_prior(mdp.context_prior);
  double total = 0.0;
  for (int s = 0; s < mdp.num_states; ++s)
    if (mdp.initial_dist[s] > 0.0)
      total += mdp.initial_dist[s] * belief_tree_value(mdp, reward, policy, 0, s, prior, horizon, memo);
  return total;
}

}  // namespace detail

/// Exact expected discounted return of a belief-conditioned policy over a
/// finite horizon, with the context drawn from the prior. Terminal states
/// keep paying their own reward until the horizon in absorbing mode.
inline double evaluate_belief_policy_exact(const ContextualMdp& mdp, std::span<const double> reward,
                                           const BeliefPolicy& policy, int horizon) {
  return detail::belief_root_value(mdp, reward, &policy, horizon);
}

/// Bayes-optimal finite-horizon value by expectimax over (state, belief).
inline double bayes_optimal_value(const ContextualMdp& mdp, std::span<const double> reward,
                                  int horizon) {
  return detail::belief_root_value(mdp, reward, nullptr, horizon);
}

}  // namespace big
