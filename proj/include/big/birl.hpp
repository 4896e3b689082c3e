#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "big/belief.hpp"
#include "big/cmdp.hpp"
#include "big/error.hpp"
#include "big/rng.hpp"
#include "big/successor.hpp"

namespace big {

/// Reward weights and the Gaussian prior / Boltzmann temperature around
/// them. The prior variance is stored as sigma0^2; the tempered variance
/// varsigma0^2 = sigma0^2 / alpha is derived on read.
struct RewardParams {
  std::vector<double> omega;
  std::vector<double> omega0;
  double sigma0_sq = 1.0;
  double alpha = 0.01;
  double sigma_sq = 1.0;
  double eta_omega = 1e-2;

  double varsigma0_sq() const { return sigma0_sq / alpha; }

  /// omega starts at omega0 = 0.
  static RewardParams with_varsigma(int dim, double alpha, double varsigma0_sq, double eta_omega) {
    RewardParams p;
    p.omega.assign(dim, 0.0);
    p.omega0.assign(dim, 0.0);
    p.alpha = alpha;
    p.sigma0_sq = varsigma0_sq * alpha;
    p.eta_omega = eta_omega;
    p.check();
    return p;
  }

  void check() const {
    if (!(alpha > 0.0)) throw Error(ErrorCode::kInvalidSpec, "alpha must be positive");
    if (!(sigma0_sq > 0.0)) throw Error(ErrorCode::kInvalidSpec, "sigma0^2 must be positive");
    if (omega.size() != omega0.size())
      throw Error(ErrorCode::kDimensionMismatch, "omega and omega0 differ in dimension");
  }
};

/// Softmax over a of psi(s,a,theta)^T omega / alpha.
inline std::vector<double> boltzmann_policy(const SuccessorTable& table, int s, int theta,
                                            std::span<const double> omega, double alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::kInvalidSpec, "alpha must be positive");
  std::vector<double> logits(table.num_actions);
  double top = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < table.num_actions; ++a) {
    table.check(s, a, theta);
    logits[a] = table.q(s, a, theta, omega) / alpha;
    if (!std::isfinite(logits[a]))
      throw Error(ErrorCode::kNonFiniteLogit, "logit at (" + std::to_string(s) + "," + std::to_string(a) + ")");
    top = std::max(top, logits[a]);
  }
  double total = 0.0;
  for (double& l : logits) total += (l = std::exp(l - top));
  for (double& l : logits) l /= total;
  return logits;
}

/// log z(s, omega, theta) = log sum_a exp(psi^T omega / alpha).
inline double log_normalizer(const SuccessorTable& table, int s, int theta, std::span<const double> omega,
                             double alpha) {
  double top = -std::numeric_limits<double>::infinity();
  std::vector<double> logits(table.num_actions);
  for (int a = 0; a < table.num_actions; ++a) {
    logits[a] = table.q(s, a, theta, omega) / alpha;
    top = std::max(top, logits[a]);
  }
  double total = 0.0;
  for (double l : logits) total += std::exp(l - top);
  return top + std::log(total);
}

/// E_{a ~ Boltzmann}[psi(s, a, theta)], the gradient of alpha * log z.
inline std::vector<double> expected_sf_under_policy(const SuccessorTable& table, int s, int theta,
                                                    std::span<const double> omega, double alpha) {
  const auto p = boltzmann_policy(table, s, theta, omega, alpha);
  std::vector<double> out(table.dim, 0.0);
  for (int a = 0; a < table.num_actions; ++a) {
    const auto r = table.row(s, a, theta);
    for (int k = 0; k < table.dim; ++k) out[k] += p[a] * r[k];
  }
  return out;
}

/// Weighted (state, action, context) occurrences of expert behaviour. A
/// weight already folds in the context posterior and any minibatch scaling.
struct ExpertCounts {
  struct Entry {
    int s;
    int a;
    int theta;
    double weight;
  };
  std::vector<Entry> entries;

  void add(int s, int a, int theta, double weight) {
    if (weight != 0.0) entries.push_back({s, a, theta, weight});
  }

  /// Merges duplicate cells; the gradient is unchanged but cheaper to evaluate.
  void compact() {
    std::map<std::tuple<int, int, int>, double> merged;
    for (const auto& e : entries) merged[{e.theta, e.s, e.a}] += e.weight;
    entries.clear();
    for (const auto& [key, w] : merged) entries.push_back({std::get<1>(key), std::get<2>(key), std::get<0>(key), w});
  }
};

/// How the learner assigns contexts to demonstrations.
enum class ContextInference {
  /// Exact posterior p(theta | trajectory).
  kPosterior,
  /// No latent inference: every trajectory is attributed to the prior mode.
  kPriorMode,
};

inline std::vector<double> context_weights(const Trajectory& traj, const ContextualMdp& mdp,
                                           ContextInference inference) {
  if (inference == ContextInference::kPriorMode) {
    std::vector<double> w(mdp.num_contexts, 0.0);
    w[std::max_element(mdp.context_prior.begin(), mdp.context_prior.end()) - mdp.context_prior.begin()] = 1.0;
    return w;
  }
  return trajectory_posterior(traj, mdp).probabilities();
}

/// Adds every decision step of a trajectory with weight `scale` spread over
/// the given context weights.
inline void add_trajectory(ExpertCounts& counts, const Trajectory& traj, std::span<const double> weights,
                           double scale) {
  for (int t = 0; t < traj.horizon(); ++t)
    for (std::size_t theta = 0; theta < weights.size(); ++theta)
      counts.add(traj.states[t], traj.actions[t], static_cast<int>(theta), scale * weights[theta]);
}

/// Full-data counts: each trajectory enters once with its context posterior.
inline ExpertCounts full_counts(const std::vector<Trajectory>& data, const ContextualMdp& mdp,
                                ContextInference inference) {
  ExpertCounts counts;
  for (const auto& traj : data) add_trajectory(counts, traj, context_weights(traj, mdp, inference), 1.0);
  counts.compact();
  return counts;
}

namespace detail {

/// Per (s, theta) cache of Boltzmann statistics at a fixed omega.
struct StateStats {
  std::vector<double> mean;  // E[psi]
  double log_z = 0.0;
  bool ready = false;
};

inline StateStats& stats_for(std::vector<StateStats>& cache, const SuccessorTable& table, int s, int theta,
                             std::span<const double> omega, double alpha) {
  StateStats& st = cache[static_cast<std::size_t>(theta) * table.num_states + s];
  if (!st.ready) {
    st.mean = expected_sf_under_policy(table, s, theta, omega, alpha);
    st.log_z = log_normalizer(table, s, theta, omega, alpha);
    st.ready = true;
  }
  return st;
}

}  // namespace detail

/// Ascent direction of the log posterior scaled by alpha:
/// sum_e w_e (psi(s,a,theta) - E_p psi(s,.,theta)) - (omega - omega0) / varsigma0^2.
inline std::vector<double> map_gradient(const RewardParams& params, const ExpertCounts& counts,
                                        const SuccessorTable& table) {
  params.check();
  if (static_cast<int>(params.omega.size()) != table.dim)
    throw Error(ErrorCode::kDimensionMismatch, "omega has dimension " + std::to_string(params.omega.size()) +
                                                   ", table " + std::to_string(table.dim));
  std::vector<detail::StateStats> cache(static_cast<std::size_t>(table.num_states) * table.num_contexts);
  std::vector<double> g(table.dim, 0.0);
  for (const auto& e : counts.entries) {
    const auto& st = detail::stats_for(cache, table, e.s, e.theta, params.omega, params.alpha);
    const auto r = table.row(e.s, e.a, e.theta);
    for (int k = 0; k < table.dim; ++k) g[k] += e.weight * (r[k] - st.mean[k]);
  }
  const double v0 = params.varsigma0_sq();
  for (int k = 0; k < table.dim; ++k) g[k] -= (params.omega[k] - params.omega0[k]) / v0;
  return g;
}

/// omega += eta_omega * map_gradient. Returns the gradient used.
inline std::vector<double> map_gradient_step(RewardParams& params, const ExpertCounts& counts,
                                             const SuccessorTable& table) {
  auto g = map_gradient(params, counts, table);
  for (std::size_t k = 0; k < g.size(); ++k) params.omega[k] += params.eta_omega * g[k];
  return g;
}

/// Log posterior up to a constant: expected Boltzmann log-likelihood of the
/// counts plus the Gaussian prior log-density with variance sigma0^2.
inline double log_posterior(const RewardParams& params, const ExpertCounts& counts, const SuccessorTable& table) {
  std::vector<detail::StateStats> cache(static_cast<std::size_t>(table.num_states) * table.num_contexts);
  double ll = 0.0;
  for (const auto& e : counts.entries) {
    const auto& st = detail::stats_for(cache, table, e.s, e.theta, params.omega, params.alpha);
    ll += e.weight * (table.q(e.s, e.a, e.theta, params.omega) / params.alpha - st.log_z);
  }
  double prior = 0.0;
  for (std::size_t k = 0; k < params.omega.size(); ++k) {
    const double d = params.omega[k] - params.omega0[k];
    prior += d * d;
  }
  return ll - prior / (2.0 * params.sigma0_sq);
}

/// Negative Hessian of log_posterior in omega: sum_e w_e Cov_p[psi] / alpha^2 + I / sigma0^2.
inline Eigen::MatrixXd negative_hessian(const RewardParams& params, const ExpertCounts& counts,
                                        const SuccessorTable& table) {
  const int d = table.dim;
  std::map<std::pair<int, int>, double> mass;  // (theta, s) -> total weight
  for (const auto& e : counts.entries) mass[{e.theta, e.s}] += e.weight;
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(d, d) / params.sigma0_sq;
  for (const auto& [key, w] : mass) {
    const auto [theta, s] = key;
    const auto p = boltzmann_policy(table, s, theta, params.omega, params.alpha);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (int a = 0; a < table.num_actions; ++a)
      mean += p[a] * Eigen::Map<const Eigen::VectorXd>(table.row(s, a, theta).data(), d);
    for (int a = 0; a < table.num_actions; ++a) {
      const Eigen::VectorXd diff = Eigen::Map<const Eigen::VectorXd>(table.row(s, a, theta).data(), d) - mean;
      h += (w * p[a] / (params.alpha * params.alpha)) * diff * diff.transpose();
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Interleaved successor-feature / reward fit

/// How the reward iterate moves along the MAP gradient.
enum class RewardOptimizer {
  /// omega += eta * gradient (optionally clipped), with backtracking.
  kGradient,
  /// Newton step: the gradient preconditioned by the inverse negative
  /// Hessian, with backtracking from a unit step.
  kNewton,
};

struct FitConfig {
  int updates = 5000;
  /// Simulator rollouts collected per update.
  int parallel_envs = 16;
  int rollout_steps = 50;
  double epsilon = 0.5;
  /// Leading fraction of updates that train the table on expert data only.
  double burn_in_fraction = 0.1;
  double beta = 1.0;
  /// After burn-in the table's learning rate is scaled by
  /// tau / (tau + updates since burn-in); 0 keeps it constant.
  double sf_lr_decay = 0.0;
  /// Expert trajectories replayed through the table per update (0 = all).
  int expert_batch = 0;
  /// Trajectories per reward update (0 = exact full-data gradient).
  int reward_batch = 0;
  int replay_capacity = 10000;
  /// Simulator trajectories replayed through the table per update.
  int sim_batch = 16;
  ContextInference inference = ContextInference::kPosterior;
  /// Draw one context per trajectory per update instead of summing over the posterior.
  bool sample_context = false;
  bool train_sf = true;
  /// Halve the reward step until the log posterior does not decrease.
  bool backtracking = true;
  /// Rescale the reward gradient to at most this norm before stepping (0 = off).
  double max_grad_norm = 0.0;
  RewardOptimizer optimizer = RewardOptimizer::kGradient;
  double grad_tol = 1e-3;
  double ema_decay = 0.99;
  double divergence_bound = 1e6;
  bool stop_when_converged = false;
  bool compute_hessian = true;
  int log_every = 1;
};

struct FitLogRow {
  long long step;
  double grad_norm;
  double loglik;
};

struct LaplaceResult {
  std::vector<double> omega_map;
  std::optional<Eigen::MatrixXd> neg_hessian;
  bool converged = false;
  double final_grad_norm = 0.0;
  double grad_norm_ema = 0.0;
  long long steps = 0;
  std::vector<FitLogRow> log;
};

namespace detail {

struct SimTrajectory {
  Trajectory trajectory;
  std::vector<double> context_weights;
};

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// epsilon-greedy rollout in a context drawn from the prior; the acting
/// context estimate is resampled from the running belief at every step.
inline SimTrajectory simulator_rollout(const ContextualMdp& mdp, const SuccessorTable& table,
                                       std::span<const double> omega, const FitConfig& cfg, RngStream& rng) {
  const int true_theta = rng.categorical(mdp.context_prior);
  const int mode = static_cast<int>(std::max_element(mdp.context_prior.begin(), mdp.context_prior.end()) -
                                    mdp.context_prior.begin());
  BeliefState belief = BeliefState::from_prior(mdp.context_prior);
  SimTrajectory out;
  Trajectory& traj = out.trajectory;
  traj.states.push_back(rng.categorical(mdp.initial_dist));
  for (int t = 0; t < cfg.rollout_steps; ++t) {
    const int s = traj.states.back();
    if (mdp.is_terminal(s)) break;
    int a;
    if (rng.bernoulli(cfg.epsilon)) {
      a = rng.uniform_int(mdp.num_actions);
    } else {
      const int guess = cfg.inference == ContextInference::kPriorMode ? mode : belief.sample(rng);
      a = greedy_sf_action(table, s, guess, omega);
    }
    const int next = sample_next_state(mdp, s, a, true_theta, rng);
    belief = belief_update(belief, s, a, next, mdp);
    traj.actions.push_back(a);
    traj.states.push_back(next);
  }
  out.context_weights = cfg.inference == ContextInference::kPriorMode
                            ? context_weights(traj, mdp, cfg.inference)
                            : belief.probabilities();
  return out;
}

inline int draw_context(std::span<const double> weights, RngStream& rng) { return rng.categorical(weights); }

/// Expert transitions (s_t, a_t, s_{t+1}, a_{t+1}); a truncated final step
/// has no next action and is skipped unless it enters a terminal state.
inline void expert_pass(SuccessorTable& table, const ContextualMdp& mdp, const Trajectory& traj, int theta,
                        double lr_scale = 1.0) {
  for (int t = 0; t < traj.horizon(); ++t) {
    const int next = traj.states[t + 1];
    if (t + 1 < traj.horizon())
      expert_td_update(table, mdp, traj.states[t], traj.actions[t], next, traj.actions[t + 1], theta, lr_scale);
    else if (mdp.is_terminal(next))
      expert_td_update(table, mdp, traj.states[t], traj.actions[t], next, -1, theta, lr_scale);
  }
}

}  // namespace detail

/// The interleaved loop: simulator rollouts, successor-feature updates from
/// expert and replayed simulator data, then one reward step. Returns the
/// final reward iterate as the MAP estimate.
inline LaplaceResult fit_map(const ContextualMdp& mdp, const std::vector<Trajectory>& expert,
                             SuccessorTable& table, RewardParams& params, const FitConfig& cfg, RngStream& rng) {
  params.check();
  if (expert.empty()) throw Error(ErrorCode::kInvalidSpec, "no expert trajectories");
  if (static_cast<int>(params.omega.size()) != mdp.feature_dim)
    throw Error(ErrorCode::kDimensionMismatch, "omega dimension does not match the features");
  const int n = static_cast<int>(expert.size());
  std::vector<std::vector<double>> expert_weights;
  expert_weights.reserve(n);
  for (const auto& traj : expert) expert_weights.push_back(context_weights(traj, mdp, cfg.inference));

  ExpertCounts full;
  for (int i = 0; i < n; ++i) add_trajectory(full, expert[i], expert_weights[i], 1.0);
  full.compact();

  const auto batch_counts = [&]() -> ExpertCounts {
    if (cfg.reward_batch <= 0 && !cfg.sample_context) return full;
    ExpertCounts c;
    const bool all = cfg.reward_batch <= 0;
    const int b = all ? n : cfg.reward_batch;
    const double scale = static_cast<double>(n) / b;
    for (int j = 0; j < b; ++j) {
      const int i = all ? j : rng.uniform_int(n);
      if (cfg.sample_context) {
        std::vector<double> one_hot(mdp.num_contexts, 0.0);
        one_hot[detail::draw_context(expert_weights[i], rng)] = 1.0;
        add_trajectory(c, expert[i], one_hot, scale);
      } else {
        add_trajectory(c, expert[i], expert_weights[i], scale);
      }
    }
    c.compact();
    return c;
  };

  std::deque<detail::SimTrajectory> replay;
  LaplaceResult result;
  const long long burn_in = static_cast<long long>(std::floor(cfg.burn_in_fraction * cfg.updates));
  bool ema_started = false;
  for (long long step = 1; step <= cfg.updates; ++step) {
    const bool burning = step <= burn_in;
    const double lr_scale =
        cfg.sf_lr_decay > 0.0 && !burning ? cfg.sf_lr_decay / (cfg.sf_lr_decay + static_cast<double>(step - burn_in))
                                          : 1.0;
    if (cfg.train_sf) {
      if (!burning)
        for (int e = 0; e < cfg.parallel_envs; ++e) {
          replay.push_back(detail::simulator_rollout(mdp, table, params.omega, cfg, rng));
          if (static_cast<int>(replay.size()) > cfg.replay_capacity) replay.pop_front();
        }
      const int eb = cfg.expert_batch <= 0 ? n : cfg.expert_batch;
      for (int j = 0; j < eb; ++j) {
        const int i = cfg.expert_batch <= 0 ? j : rng.uniform_int(n);
        detail::expert_pass(table, mdp, expert[i], detail::draw_context(expert_weights[i], rng), lr_scale);
      }
      if (!burning && !replay.empty())
        for (int j = 0; j < cfg.sim_batch; ++j) {
          const auto& sim = replay[rng.uniform_int(static_cast<int>(replay.size()))];
          const int theta = detail::draw_context(sim.context_weights, rng);
          const Trajectory& tr = sim.trajectory;
          for (int t = 0; t < tr.horizon(); ++t)
            simulator_td_update(table, mdp, tr.states[t], tr.actions[t], tr.states[t + 1], theta, params.omega,
                                cfg.beta * lr_scale);
        }
      maybe_sync_target(table, step);
    }
    if (burning) continue;

    const ExpertCounts counts = batch_counts();
    const auto g = map_gradient(params, counts, table);
    const double gn = detail::norm2(g);
    if (!std::isfinite(gn) || gn > cfg.divergence_bound)
      throw Error(ErrorCode::kDiverged, "gradient norm " + std::to_string(gn) + " at update " + std::to_string(step));
    double loglik = log_posterior(params, counts, table);
    std::vector<double> step_dir = g;
    double first_step = params.eta_omega;
    if (cfg.optimizer == RewardOptimizer::kNewton) {
      // log_posterior's gradient is g / alpha; its negative Hessian is H.
      const Eigen::MatrixXd h = negative_hessian(params, counts, table);
      const Eigen::VectorXd grad = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()) / params.alpha;
      const Eigen::VectorXd d = h.ldlt().solve(grad);
      step_dir.assign(d.data(), d.data() + d.size());
      first_step = 1.0;
      // Trust region: the step never exceeds max_grad_norm in length.
      const double len = d.norm();
      if (cfg.max_grad_norm > 0.0 && len > cfg.max_grad_norm) first_step = cfg.max_grad_norm / len;
    } else if (cfg.max_grad_norm > 0.0 && gn > cfg.max_grad_norm) {
      for (double& x : step_dir) x *= cfg.max_grad_norm / gn;
    }
    if (cfg.backtracking || cfg.optimizer == RewardOptimizer::kNewton) {
      const std::vector<double> start = params.omega;
      double eta = first_step;
      for (int tries = 0; tries < 60; ++tries) {
        for (std::size_t k = 0; k < g.size(); ++k) params.omega[k] = start[k] + eta * step_dir[k];
        const double trial = log_posterior(params, counts, table);
        if (trial >= loglik) {
          loglik = trial;
          break;
        }
        eta *= 0.5;
        if (tries == 59) params.omega = start;
      }
    } else {
      for (std::size_t k = 0; k < g.size(); ++k) params.omega[k] += params.eta_omega * step_dir[k];
      loglik = log_posterior(params, counts, table);
    }
    result.grad_norm_ema = ema_started ? cfg.ema_decay * result.grad_norm_ema + (1.0 - cfg.ema_decay) * gn : gn;
    ema_started = true;
    result.final_grad_norm = gn;
    result.steps = step;
    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.updates))
      result.log.push_back({step, gn, loglik});
    if (cfg.stop_when_converged && result.grad_norm_ema < cfg.grad_tol && gn < cfg.grad_tol) break;
  }
  result.converged = ema_started && result.grad_norm_ema < cfg.grad_tol && result.final_grad_norm <= cfg.grad_tol;
  result.omega_map = params.omega;
  if (cfg.compute_hessian) result.neg_hessian = negative_hessian(params, full, table);
  return result;
}

/// Predictive mean reward table nu(s, a)^T omega_map, indexed [s * A + a].
inline std::vector<double> posterior_predictive_reward_raw(const LaplaceResult& result, const ContextualMdp& mdp) {
  return reward_table(mdp, result.omega_map);
}

}  // namespace big
