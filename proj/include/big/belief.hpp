#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <set>
#include <span>
#include <tuple>
#include <vector>

#include "big/cmdp.hpp"
#include "big/error.hpp"
#include "big/rng.hpp"

namespace big {

/// Exact posterior over the hidden context, kept as normalized log-weights.
/// Contexts with zero mass hold -inf and stay there.
class BeliefState {
 public:
  BeliefState() = default;

  static BeliefState from_prior(std::span<const double> prior) {
    BeliefState b;
    b.log_weights_.resize(prior.size());
    for (std::size_t i = 0; i < prior.size(); ++i)
      b.log_weights_[i] = prior[i] > 0.0 ? std::log(prior[i]) : kNegInf;
    b.normalize();
    return b;
  }

  static BeliefState delta(int num_contexts, int theta) {
    BeliefState b;
    b.log_weights_.assign(num_contexts, kNegInf);
    b.log_weights_[theta] = 0.0;
    return b;
  }

  int num_contexts() const { return static_cast<int>(log_weights_.size()); }
  std::span<const double> log_weights() const { return log_weights_; }

  double probability(int theta) const { return std::exp(log_weights_[theta]); }

  std::vector<double> probabilities() const {
    std::vector<double> p(log_weights_.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_weights_[i]);
    return p;
  }

  int most_likely() const {
    return static_cast<int>(std::max_element(log_weights_.begin(), log_weights_.end()) -
                            log_weights_.begin());
  }

  int sample(RngStream& rng) const {
    const auto p = probabilities();
    return rng.categorical(p);
  }

  /// Adds per-context log-likelihoods and renormalizes. Returns false, leaving
  /// the belief untouched, when every context assigns zero likelihood.
  bool absorb(std::span<const double> log_likelihood) {
    std::vector<double> next(log_weights_.size());
    bool any = false;
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] = log_weights_[i] + log_likelihood[i];
      if (std::isnan(next[i])) next[i] = kNegInf;
      any = any || next[i] != kNegInf;
    }
    if (!any) return false;
    log_weights_ = std::move(next);
    normalize();
    return true;
  }

  /// Stable key for memoization: log-weights rounded to 1e-9.
  std::vector<std::int64_t> key() const {
    std::vector<std::int64_t> k(log_weights_.size());
    for (std::size_t i = 0; i < k.size(); ++i)
      k[i] = log_weights_[i] == kNegInf ? std::numeric_limits<std::int64_t>::min()
                                        : std::llround(log_weights_[i] * 1e9);
    return k;
  }

  static constexpr double kNegInf = -std::numeric_limits<double>::infinity();

 private:
  void normalize() {
    double max_lw = kNegInf;
    for (double lw : log_weights_) max_lw = std::max(max_lw, lw);
    if (max_lw == kNegInf) return;
    double total = 0.0;
    for (double lw : log_weights_) total += std::exp(lw - max_lw);
    const double lse = max_lw + std::log(total);
    for (double& lw : log_weights_)
      if (lw != kNegInf) lw -= lse;
  }

  std::vector<double> log_weights_;
};

/// Bayes rule for one observed transition (s, a) -> s'.
inline BeliefState belief_update(const BeliefState& belief, int s, int a, int next,
                                 const ContextualMdp& mdp) {
  mdp.check_state(s);
  mdp.check_action(a);
  mdp.check_state(next);
  std::vector<double> ll(mdp.num_contexts);
  for (int theta = 0; theta < mdp.num_contexts; ++theta) {
    const double p = mdp.prob(s, a, theta, next);
    ll[theta] = p > 0.0 ? std::log(p) : BeliefState::kNegInf;
  }
  BeliefState out = belief;
  if (!out.absorb(ll))
    throw Error(ErrorCode::kImpossibleTransition,
                "transition (" + std::to_string(s) + "," + std::to_string(a) + ")->" +
                    std::to_string(next) + " has zero probability under every context");
  return out;
}

/// Posterior over the context after the first `steps` transitions of a
/// trajectory (all of them by default), starting from the context prior.
inline BeliefState trajectory_posterior(const Trajectory& traj, const ContextualMdp& mdp,
                                        int steps = -1) {
  if (traj.states.empty()) throw Error(ErrorCode::kInvalidSpec, "empty trajectory");
  const int n = steps < 0 ? traj.horizon() : std::min(steps, traj.horizon());
  BeliefState belief = BeliefState::from_prior(mdp.context_prior);
  for (int t = 0; t < n; ++t)
    belief = belief_update(belief, traj.states[t], traj.actions[t], traj.states[t + 1], mdp);
  return belief;
}

struct BayesianOutcome {
  int next_state;
  double probability;
  BeliefState belief;
};

/// Predictive next-state distribution under the current belief, each outcome
/// paired with the belief it produces.
inline std::vector<BayesianOutcome> bayesian_transition(const BeliefState& belief, int s, int a,
                                                        const ContextualMdp& mdp) {
  mdp.check_state(s);
  mdp.check_action(a);
  const auto weights = belief.probabilities();
  std::vector<BayesianOutcome> out;
  for (int next = 0; next < mdp.num_states; ++next) {
    double p = 0.0;
    for (int theta = 0; theta < mdp.num_contexts; ++theta)
      p += weights[theta] * mdp.prob(s, a, theta, next);
    if (p > 0.0) out.push_back({next, p, belief_update(belief, s, a, next, mdp)});
  }
  return out;
}

/// Maps a belief to a bin index. Each axis is the log-odds of context c
/// against context 0, cut into `bins_per_axis` half-open intervals of equal
/// width on [-max_log_odds, max_log_odds); values outside clamp to the end
/// bins. With two contexts this is a single axis on logit(belief(theta=1)).
class BeliefBinning {
 public:
  BeliefBinning() = default;
  BeliefBinning(int num_contexts, int bins_per_axis, double max_log_odds)
      : num_contexts_(num_contexts), bins_per_axis_(bins_per_axis), max_log_odds_(max_log_odds) {
    if (num_contexts < 1 || bins_per_axis < 1 || !(max_log_odds > 0.0))
      throw Error(ErrorCode::kInvalidSpec, "bad belief binning parameters");
    num_bins_ = 1;
    for (int c = 1; c < num_contexts; ++c) num_bins_ *= bins_per_axis;
  }

  int num_bins() const { return num_bins_; }
  int bins_per_axis() const { return bins_per_axis_; }
  double max_log_odds() const { return max_log_odds_; }
  double bin_width() const { return 2.0 * max_log_odds_ / bins_per_axis_; }

  int axis_bin(double log_odds) const {
    if (std::isnan(log_odds)) log_odds = 0.0;
    if (log_odds >= max_log_odds_) return bins_per_axis_ - 1;
    if (log_odds < -max_log_odds_) return 0;
    const int b = static_cast<int>(std::floor((log_odds + max_log_odds_) / bin_width()));
    return std::clamp(b, 0, bins_per_axis_ - 1);
  }

  int bin(const BeliefState& belief) const {
    const auto lw = belief.log_weights();
    int index = 0;
    for (int c = 1; c < num_contexts_; ++c) {
      double odds = lw[c] - lw[0];
      if (lw[c] == BeliefState::kNegInf && lw[0] == BeliefState::kNegInf) odds = 0.0;
      index = index * bins_per_axis_ + axis_bin(odds);
    }
    return index;
  }

 private:
  int num_contexts_ = 1;
  int bins_per_axis_ = 1;
  double max_log_odds_ = 1.0;
  int num_bins_ = 1;
};

/// Every distinct belief reachable from the prior within `horizon` steps
/// under any action sequence (breadth-first over (state, belief) nodes).
inline std::vector<BeliefState> reachable_beliefs(const ContextualMdp& mdp, int horizon,
                                                  std::size_t max_nodes = 2'000'000) {
  using NodeKey = std::pair<int, std::vector<std::int64_t>>;
  std::set<NodeKey> seen_nodes;
  std::set<std::vector<std::int64_t>> seen_beliefs;
  std::vector<BeliefState> beliefs;
  struct Item {
    int state;
    BeliefState belief;
    int depth;
  };
  std::deque<Item> queue;
  const BeliefState prior = BeliefState::from_prior(mdp.context_prior);
  beliefs.push_back(prior);
  seen_beliefs.insert(prior.key());
  for (int s = 0; s < mdp.num_states; ++s)
    if (mdp.initial_dist[s] > 0.0 && seen_nodes.insert({s, prior.key()}).second)
      queue.push_back({s, prior, 0});
  while (!queue.empty() && seen_nodes.size() < max_nodes) {
    Item item = std::move(queue.front());
    queue.pop_front();
    if (item.depth >= horizon || mdp.is_terminal(item.state)) continue;
    for (int a = 0; a < mdp.num_actions; ++a)
      for (auto& outcome : bayesian_transition(item.belief, item.state, a, mdp)) {
        auto key = outcome.belief.key();
        if (seen_beliefs.insert(key).second) beliefs.push_back(outcome.belief);
        if (seen_nodes.insert({outcome.next_state, std::move(key)}).second)
          queue.push_back({outcome.next_state, std::move(outcome.belief), item.depth + 1});
      }
  }
  return beliefs;
}

/// Largest probability gap between two beliefs that share a bin.
inline double max_bin_collision(const BeliefBinning& binning,
                                const std::vector<BeliefState>& beliefs) {
  std::vector<std::pair<int, const BeliefState*>> tagged;
  tagged.reserve(beliefs.size());
  for (const auto& b : beliefs) tagged.emplace_back(binning.bin(b), &b);
  std::sort(tagged.begin(), tagged.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  double worst = 0.0;
  for (std::size_t i = 0; i < tagged.size();) {
    std::size_t j = i;
    while (j < tagged.size() && tagged[j].first == tagged[i].first) ++j;
    for (std::size_t u = i; u < j; ++u)
      for (std::size_t v = u + 1; v < j; ++v) {
        const auto pu = tagged[u].second->probabilities();
        const auto pv = tagged[v].second->probabilities();
        for (std::size_t c = 0; c < pu.size(); ++c) worst = std::max(worst, std::abs(pu[c] - pv[c]));
      }
    i = j;
  }
  return worst;
}

}  // namespace big
