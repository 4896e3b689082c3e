#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "big/error.hpp"
#include "big/rng.hpp"

namespace big {

/// How successor features and values continue past a terminal state.
enum class TerminalMode {
  /// Terminal states self-loop forever, collecting their own features.
  kAbsorbing,
  /// Nothing is collected after entering a terminal state.
  kZeroContinuation,
};

/// Discrete contextual MDP. The hidden context only changes the dynamics;
/// rewards are linear in the shared feature map nu(s, a).
///
/// Tables are dense and row-major:
///   transition[((theta * S + s) * A + a) * S + s']
///   features[(s * A + a) * d + k]
struct ContextualMdp {
  int num_states = 0;
  int num_actions = 0;
  int num_contexts = 0;
  int feature_dim = 0;
  std::vector<double> transition;
  std::vector<double> context_prior;
  std::vector<double> initial_dist;
  double gamma = 0.99;
  std::vector<double> features;
  std::vector<char> terminal;
  TerminalMode terminal_mode = TerminalMode::kAbsorbing;
  std::vector<std::string> state_names;
  std::vector<std::string> action_names;

  ContextualMdp() = default;
  ContextualMdp(int states, int actions, int contexts, int dim)
      : num_states(states),
        num_actions(actions),
        num_contexts(contexts),
        feature_dim(dim),
        transition(static_cast<std::size_t>(contexts) * states * actions * states, 0.0),
        context_prior(contexts, 1.0 / contexts),
        initial_dist(states, 0.0),
        features(static_cast<std::size_t>(states) * actions * dim, 0.0),
        terminal(states, 0) {}

  std::size_t row_offset(int s, int a, int theta) const {
    return ((static_cast<std::size_t>(theta) * num_states + s) * num_actions + a) * num_states;
  }

  std::span<const double> next_state_dist(int s, int a, int theta) const {
    return {transition.data() + row_offset(s, a, theta), static_cast<std::size_t>(num_states)};
  }
  std::span<double> next_state_dist(int s, int a, int theta) {
    return {transition.data() + row_offset(s, a, theta), static_cast<std::size_t>(num_states)};
  }

  double prob(int s, int a, int theta, int next) const {
    return transition[row_offset(s, a, theta) + next];
  }
  void set_prob(int s, int a, int theta, int next, double p) {
    transition[row_offset(s, a, theta) + next] = p;
  }

  std::span<const double> feature(int s, int a) const {
    return {features.data() + (static_cast<std::size_t>(s) * num_actions + a) * feature_dim,
            static_cast<std::size_t>(feature_dim)};
  }
  std::span<double> feature(int s, int a) {
    return {features.data() + (static_cast<std::size_t>(s) * num_actions + a) * feature_dim,
            static_cast<std::size_t>(feature_dim)};
  }

  bool is_terminal(int s) const { return terminal[s] != 0; }

  int num_cells() const { return num_states * num_actions; }

  /// One-hot state indicator features: nu(s, a) = e_s.
  void set_one_hot_state_features() {
    feature_dim = num_states;
    features.assign(static_cast<std::size_t>(num_states) * num_actions * num_states, 0.0);
    for (int s = 0; s < num_states; ++s)
      for (int a = 0; a < num_actions; ++a) feature(s, a)[s] = 1.0;
  }

  void check_state(int s) const {
    if (s < 0 || s >= num_states)
      throw Error(ErrorCode::kIndexOutOfRange, "state " + std::to_string(s));
  }
  void check_action(int a) const {
    if (a < 0 || a >= num_actions)
      throw Error(ErrorCode::kIndexOutOfRange, "action " + std::to_string(a));
  }
  void check_context(int theta) const {
    if (theta < 0 || theta >= num_contexts)
      throw Error(ErrorCode::kIndexOutOfRange, "context " + std::to_string(theta));
  }

  std::string state_name(int s) const {
    if (s >= 0 && s < static_cast<int>(state_names.size())) return state_names[s];
    return "s" + std::to_string(s);
  }
};

/// A visited sequence s_0, a_0, s_1, ..., a_{H-1}, s_H. `states` has one
/// more entry than `actions`; the last state is where the rollout stopped.
struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;

  int horizon() const { return static_cast<int>(actions.size()); }
  int last_state() const { return states.back(); }

  bool operator==(const Trajectory&) const = default;
};

/// First violated invariant of a ContextualMdp.
struct ValidationIssue {
  ErrorCode code;
  std::string message;
};

inline std::optional<ValidationIssue> validate(const ContextualMdp& mdp, double tol = 1e-12) {
  const auto sum_of = [](std::span<const double> v) {
    double total = 0.0;
    for (double x : v) total += x;
    return total;
  };
  if (mdp.num_states <= 0 || mdp.num_actions <= 0 || mdp.num_contexts <= 0)
    return ValidationIssue{ErrorCode::kInvalidSpec, "empty state, action or context set"};
  if (!(mdp.gamma > 0.0 && mdp.gamma < 1.0)) {
    std::ostringstream os;
    os << "gamma = " << mdp.gamma << " outside (0, 1)";
    return ValidationIssue{ErrorCode::kBadGamma, os.str()};
  }
  const std::size_t expected_features =
      static_cast<std::size_t>(mdp.num_states) * mdp.num_actions * mdp.feature_dim;
  if (mdp.feature_dim <= 0 || mdp.features.size() != expected_features)
    return ValidationIssue{ErrorCode::kRaggedFeatures,
                           "feature table has " + std::to_string(mdp.features.size()) +
                               " entries, expected " + std::to_string(expected_features)};
  if (static_cast<int>(mdp.context_prior.size()) != mdp.num_contexts ||
      std::abs(sum_of(mdp.context_prior) - 1.0) > tol)
    return ValidationIssue{ErrorCode::kBadPrior, "context prior does not sum to 1"};
  if (static_cast<int>(mdp.initial_dist.size()) != mdp.num_states ||
      std::abs(sum_of(mdp.initial_dist) - 1.0) > tol)
    return ValidationIssue{ErrorCode::kBadPrior, "initial distribution does not sum to 1"};
  for (double p : mdp.context_prior)
    if (p < 0.0) return ValidationIssue{ErrorCode::kBadPrior, "negative context prior entry"};
  for (double p : mdp.initial_dist)
    if (p < 0.0) return ValidationIssue{ErrorCode::kBadPrior, "negative initial probability"};
  if (static_cast<int>(mdp.terminal.size()) != mdp.num_states)
    return ValidationIssue{ErrorCode::kInvalidSpec, "terminal flags do not cover every state"};
  for (int theta = 0; theta < mdp.num_contexts; ++theta)
    for (int s = 0; s < mdp.num_states; ++s)
      for (int a = 0; a < mdp.num_actions; ++a) {
        const auto row = mdp.next_state_dist(s, a, theta);
        bool negative = false;
        for (double p : row) negative = negative || p < 0.0;
        if (negative || std::abs(sum_of(row) - 1.0) > tol) {
          std::ostringstream os;
          os << "row (" << s << "," << a << "," << theta << ") sums to " << sum_of(row);
          return ValidationIssue{ErrorCode::kNonStochasticRow, os.str()};
        }
      }
  return std::nullopt;
}

/// Throws the first violated invariant, if any.
inline void require_valid(const ContextualMdp& mdp) {
  if (auto issue = validate(mdp)) throw Error(issue->code, issue->message);
}

/// Action selection from the history so far; the current state is
/// history.states.back().
using Policy = std::function<int(const Trajectory& history, RngStream& rng)>;

/// Deterministic state-to-action map.
inline Policy stationary_policy(std::vector<int> action_by_state) {
  return [table = std::move(action_by_state)](const Trajectory& h, RngStream&) {
    return table[h.states.back()];
  };
}

/// Markov policy sampling a ~ pi(. | s) from a table indexed [s * A + a].
inline Policy tabular_policy(std::vector<double> pi, int num_actions) {
  return [pi = std::move(pi), num_actions](const Trajectory& h, RngStream& rng) {
    const auto row = std::span<const double>(pi).subspan(static_cast<std::size_t>(h.states.back()) * num_actions,
                                                         num_actions);
    return rng.categorical(row);
  };
}

inline Policy uniform_random_policy(int num_actions) {
  return [num_actions](const Trajectory&, RngStream& rng) { return rng.uniform_int(num_actions); };
}

inline int sample_next_state(const ContextualMdp& mdp, int s, int a, int theta, RngStream& rng) {
  return rng.categorical(mdp.next_state_dist(s, a, theta));
}

/// Rolls out `policy` in context `theta` for at most `max_steps` actions,
/// stopping early when a terminal state is entered.
inline Trajectory sample_rollout(const ContextualMdp& mdp, int theta, const Policy& policy,
                                 int max_steps, RngStream& rng) {
  mdp.check_context(theta);
  if (max_steps < 1) throw Error(ErrorCode::kInvalidSpec, "max_steps must be >= 1");
  Trajectory traj;
  traj.states.reserve(max_steps + 1);
  traj.actions.reserve(max_steps);
  traj.states.push_back(rng.categorical(mdp.initial_dist));
  for (int t = 0; t < max_steps; ++t) {
    const int s = traj.states.back();
    if (mdp.is_terminal(s)) break;
    const int a = policy(traj, rng);
    mdp.check_action(a);
    traj.actions.push_back(a);
    traj.states.push_back(sample_next_state(mdp, s, a, theta, rng));
  }
  return traj;
}

inline double dot(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += x[i] * y[i];
  return total;
}

/// r(s, a) = nu(s, a)^T omega.
inline double feature_reward(const ContextualMdp& mdp, std::span<const double> omega, int s, int a) {
  if (static_cast<int>(omega.size()) != mdp.feature_dim)
    throw Error(ErrorCode::kDimensionMismatch, "omega has dimension " +
                                                   std::to_string(omega.size()) + ", features " +
                                                   std::to_string(mdp.feature_dim));
  mdp.check_state(s);
  mdp.check_action(a);
  return dot(mdp.feature(s, a), omega);
}

/// Dense reward table indexed [s * A + a].
inline std::vector<double> reward_table(const ContextualMdp& mdp, std::span<const double> omega) {
  std::vector<double> table(mdp.num_cells());
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      table[s * mdp.num_actions + a] = feature_reward(mdp, omega, s, a);
  return table;
}

}  // namespace big
