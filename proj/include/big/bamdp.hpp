#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "big/belief.hpp"
#include "big/cmdp.hpp"
#include "big/error.hpp"
#include "big/io.hpp"
#include "big/planning.hpp"
#include "big/reward_posterior.hpp"
#include "big/rng.hpp"

namespace big {

struct QConfig {
  int episodes = 20000;
  int horizon = 50;
  double learning_rate = 0.1;
  double eps_start = 1.0;
  double eps_end = 0.05;
  /// Fraction of episodes over which epsilon anneals linearly.
  double eps_fraction = 0.5;
  /// Updates between target syncs; 1 means bootstrap from the online table.
  int target_sync = 1;
  int bins_per_axis = 101;
  double max_log_odds = 60.0;
  /// Reject binnings that merge reachable beliefs differing by more than
  /// collision_tol.
  bool check_binning = true;
  double collision_tol = 1e-6;
  /// Start every Q-value at max(reward) / (1 - gamma) instead of zero.
  bool optimistic_init = true;
  /// With tau > 0 the step on a cell visited n times before is
  /// learning_rate * tau / (tau + n); 0 keeps it constant.
  double lr_decay = 0.0;
};

/// Q-values over (state, belief bin, action).
struct QTable {
  int num_states = 0;
  int num_actions = 0;
  BeliefBinning binning;
  std::vector<double> q;
  std::vector<double> target;

  std::size_t index(int s, int bin, int a) const {
    return (static_cast<std::size_t>(s) * binning.num_bins() + bin) * num_actions + a;
  }
  std::span<const double> values(int s, int bin) const {
    return {q.data() + index(s, bin, 0), static_cast<std::size_t>(num_actions)};
  }
  int greedy(int s, const BeliefState& belief) const {
    const auto v = values(s, binning.bin(belief));
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  }
  BeliefPolicy policy() const {
    return [this](int s, const BeliefState& b) { return greedy(s, b); };
  }
};

inline double epsilon_at(const QConfig& cfg, int episode) {
  const double span = std::max(1.0, cfg.eps_fraction * cfg.episodes);
  const double frac = std::min(1.0, episode / span);
  return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;
}

/// Value of entering a terminal state and staying there.
inline double terminal_continuation(const ContextualMdp& mdp, std::span<const double> reward, int s) {
  return terminal_reward(mdp, reward, s) / (1.0 - mdp.gamma);
}

inline void verify_binning(const ContextualMdp& mdp, const BeliefBinning& binning, int horizon, double tol) {
  const double worst = max_bin_collision(binning, reachable_beliefs(mdp, horizon));
  if (worst > tol)
    throw Error(ErrorCode::kInvalidSpec,
                "belief binning merges reachable beliefs differing by " + std::to_string(worst));
}

/// Called every so often during training with the episode count so far.
using TrainingMonitor = std::function<void(int episode, const QTable& table)>;

/// Q-learning on the belief-augmented MDP under a fixed reward table.
inline QTable train_bayes_policy(const ContextualMdp& mdp, std::span<const double> reward, const QConfig& cfg,
                                 RngStream& rng, const TrainingMonitor& monitor = {}, int monitor_every = 0) {
  if (static_cast<int>(reward.size()) != mdp.num_cells())
    throw Error(ErrorCode::kDimensionMismatch, "reward table does not cover every (s, a)");
  QTable table;
  table.num_states = mdp.num_states;
  table.num_actions = mdp.num_actions;
  table.binning = BeliefBinning(mdp.num_contexts, cfg.bins_per_axis, cfg.max_log_odds);
  if (cfg.check_binning) verify_binning(mdp, table.binning, cfg.horizon, cfg.collision_tol);
  const double init = cfg.optimistic_init
                          ? *std::max_element(reward.begin(), reward.end()) / (1.0 - mdp.gamma)
                          : 0.0;
  table.q.assign(static_cast<std::size_t>(mdp.num_states) * table.binning.num_bins() * mdp.num_actions, init);
  table.target = table.q;
  std::vector<std::uint32_t> visits(cfg.lr_decay > 0.0 ? table.q.size() : 0, 0);
  const bool use_target = cfg.target_sync > 1;
  long long updates = 0;
  const BeliefState prior = BeliefState::from_prior(mdp.context_prior);
  for (int episode = 0; episode < cfg.episodes; ++episode) {
    if (monitor && monitor_every > 0 && episode % monitor_every == 0) monitor(episode, table);
    const double eps = epsilon_at(cfg, episode);
    const int theta = rng.categorical(mdp.context_prior);
    BeliefState belief = prior;
    int s = rng.categorical(mdp.initial_dist);
    for (int t = 0; t < cfg.horizon && !mdp.is_terminal(s); ++t) {
      const int bin = table.binning.bin(belief);
      const int a = rng.bernoulli(eps) ? rng.uniform_int(mdp.num_actions) : table.greedy(s, belief);
      const int next = sample_next_state(mdp, s, a, theta, rng);
      BeliefState next_belief = belief_update(belief, s, a, next, mdp);
      const double r = reward[s * mdp.num_actions + a];
      double boot;
      if (mdp.is_terminal(next)) {
        boot = terminal_continuation(mdp, reward, next);
      } else {
        const std::size_t base = table.index(next, table.binning.bin(next_belief), 0);
        const auto& src = use_target ? table.target : table.q;
        boot = *std::max_element(src.begin() + base, src.begin() + base + mdp.num_actions);
      }
      const std::size_t idx = table.index(s, bin, a);
      double& cell = table.q[idx];
      const double lr =
          visits.empty() ? cfg.learning_rate : cfg.learning_rate * cfg.lr_decay / (cfg.lr_decay + visits[idx]++);
      cell += lr * (r + mdp.gamma * boot - cell);
      if (!std::isfinite(cell))
        throw Error(ErrorCode::kNonFiniteQ, "Q(" + std::to_string(s) + "," + std::to_string(bin) + "," +
                                                std::to_string(a) + ")");
      if (use_target && ++updates % cfg.target_sync == 0) table.target = table.q;
      s = next;
      belief = std::move(next_belief);
    }
  }
  if (monitor && monitor_every > 0) monitor(cfg.episodes, table);
  return table;
}

/// Which states and actions the evaluation metrics look at.
struct EvalSpec {
  int listen_action = -1;
  std::vector<int> success_states;
  std::vector<int> failure_states;
};

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline MeanStderr mean_stderr(std::span<const double> xs) {
  MeanStderr out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.stderr_ = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  return out;
}

struct EvalMetrics {
  MeanStderr discounted_return;
  MeanStderr total_return;
  /// Fraction of episodes whose first success/failure outcome is a success.
  MeanStderr success_rate;
  /// Same, among episodes that reached an outcome at all.
  MeanStderr first_correct_rate;
  MeanStderr explore_steps;
  /// Fraction of episodes that only explored until the horizon.
  double capped_fraction = 0.0;
  int episodes = 0;
  int encounters = 0;

  bool horizon_capped() const { return capped_fraction > 0.5; }
};

/// Monte-Carlo evaluation with theta ~ prior and exact belief tracking.
inline EvalMetrics evaluate_policy(const ContextualMdp& mdp, const BeliefPolicy& policy,
                                   std::span<const double> true_reward, int episodes, int horizon,
                                   const EvalSpec& spec, RngStream& rng) {
  if (static_cast<int>(true_reward.size()) != mdp.num_cells())
    throw Error(ErrorCode::kDimensionMismatch, "reward table size");
  const auto contains = [](const std::vector<int>& v, int s) { return std::find(v.begin(), v.end(), s) != v.end(); };
  std::vector<double> disc, total, success, first, explore;
  int capped = 0;
  const BeliefState prior = BeliefState::from_prior(mdp.context_prior);
  for (int e = 0; e < episodes; ++e) {
    const int theta = rng.categorical(mdp.context_prior);
    BeliefState belief = prior;
    int s = rng.categorical(mdp.initial_dist);
    double g = 0.0, sum = 0.0, discount = 1.0;
    int listens = 0, outcome = -1, steps = 0;
    for (int t = 0; t < horizon; ++t) {
      if (mdp.is_terminal(s)) {
        const double tr = terminal_reward(mdp, true_reward, s);
        g += geometric_tail(mdp.gamma, t, horizon, tr);
        sum += tr * (horizon - t);
        break;
      }
      const int a = policy(s, belief);
      const double r = true_reward[s * mdp.num_actions + a];
      g += discount * r;
      sum += r;
      discount *= mdp.gamma;
      listens += a == spec.listen_action;
      const int next = sample_next_state(mdp, s, a, theta, rng);
      belief = belief_update(belief, s, a, next, mdp);
      if (outcome < 0 && contains(spec.success_states, next)) outcome = 1;
      if (outcome < 0 && contains(spec.failure_states, next)) outcome = 0;
      s = next;
      ++steps;
    }
    disc.push_back(g);
    total.push_back(sum);
    success.push_back(outcome == 1 ? 1.0 : 0.0);
    if (outcome >= 0) first.push_back(outcome);
    explore.push_back(listens);
    capped += outcome < 0 && steps == horizon && listens == horizon;
  }
  EvalMetrics m;
  m.discounted_return = mean_stderr(disc);
  m.total_return = mean_stderr(total);
  m.success_rate = mean_stderr(success);
  m.first_correct_rate = mean_stderr(first);
  m.explore_steps = mean_stderr(explore);
  m.capped_fraction = episodes ? static_cast<double>(capped) / episodes : 0.0;
  m.episodes = episodes;
  m.encounters = static_cast<int>(first.size());
  return m;
}

inline void write_metrics_csv(const std::filesystem::path& path, const EvalMetrics& m) {
  CsvWriter out(path, {"metric", "mean", "stderr"});
  out.row("discounted_return", m.discounted_return.mean, m.discounted_return.stderr_);
  out.row("total_return", m.total_return.mean, m.total_return.stderr_);
  out.row("success_rate", m.success_rate.mean, m.success_rate.stderr_);
  out.row("first_correct_rate", m.first_correct_rate.mean, m.first_correct_rate.stderr_);
  out.row("explore_steps", m.explore_steps.mean, m.explore_steps.stderr_);
  out.row("capped_fraction", m.capped_fraction, 0.0);
}

inline void write_qtable_csv(const std::filesystem::path& path, const QTable& table) {
  CsvWriter out(path, {"s", "bin", "a", "q"});
  for (int s = 0; s < table.num_states; ++s)
    for (int b = 0; b < table.binning.num_bins(); ++b)
      for (int a = 0; a < table.num_actions; ++a)
        if (const double v = table.q[table.index(s, b, a)]; v != 0.0) out.row(s, b, a, v);
}

}  // namespace big
