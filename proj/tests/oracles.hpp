#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner. Nothing here calls the routine it checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "big/big.hpp"

namespace oracle {

using namespace big;

/// Dense random CMDP with one-hot state features and no terminals.
inline ContextualMdp random_cmdp(RngStream& rng, int states, int actions, int contexts, double gamma,
                                 bool deterministic = false) {
  ContextualMdp m(states, actions, contexts, states);
  m.gamma = gamma;
  m.set_one_hot_state_features();
  double total = 0.0;
  for (auto& p : m.context_prior) total += (p = 0.2 + rng.uniform());
  for (auto& p : m.context_prior) p /= total;
  m.initial_dist.assign(states, 1.0 / states);
  for (int theta = 0; theta < contexts; ++theta)
    for (int s = 0; s < states; ++s)
      for (int a = 0; a < actions; ++a) {
        auto row = m.next_state_dist(s, a, theta);
        if (deterministic) {
          row[rng.uniform_int(states)] = 1.0;
          continue;
        }
        double sum = 0.0;
        for (auto& p : row) sum += (p = rng.uniform() < 0.3 ? 0.0 : rng.uniform());
        if (sum == 0.0) {
          row[rng.uniform_int(states)] = 1.0;
          continue;
        }
        for (auto& p : row) p /= sum;
      }
  return m;
}

inline std::vector<double> random_policy(RngStream& rng, int states, int actions, bool deterministic = false) {
  std::vector<double> pi(static_cast<std::size_t>(states) * actions, 0.0);
  for (int s = 0; s < states; ++s) {
    if (deterministic) {
      pi[s * actions + rng.uniform_int(actions)] = 1.0;
      continue;
    }
    double sum = 0.0;
    for (int a = 0; a < actions; ++a) sum += (pi[s * actions + a] = 0.1 + rng.uniform());
    for (int a = 0; a < actions; ++a) pi[s * actions + a] /= sum;
  }
  return pi;
}

/// Psi = (I - gamma P_pi)^{-1} nu by Gauss-Jordan elimination with partial
/// pivoting, written out without the library's solver. Absorbing terminals
/// only (the random CMDPs have none; the three-state MDP self-loops).
inline std::vector<double> dense_sf(const ContextualMdp& m, const std::vector<double>& pi, int theta) {
  const int S = m.num_states, A = m.num_actions, n = S * A, d = m.feature_dim;
  std::vector<std::vector<double>> aug(n, std::vector<double>(n + d, 0.0));
  for (int i = 0; i < n; ++i) {
    aug[i][i] = 1.0;
    const int s = i / A, a = i % A;
    for (int nx = 0; nx < S; ++nx)
      for (int b = 0; b < A; ++b) aug[i][nx * A + b] -= m.gamma * m.prob(s, a, theta, nx) * pi[nx * A + b];
    for (int k = 0; k < d; ++k) aug[i][n + k] = m.features[static_cast<std::size_t>(i) * d + k];
  }
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(aug[r][c]) > std::abs(aug[piv][c])) piv = r;
    std::swap(aug[c], aug[piv]);
    const double diag = aug[c][c];
    for (auto& x : aug[c]) x /= diag;
    for (int r = 0; r < n; ++r) {
      if (r == c || aug[r][c] == 0.0) continue;
      const double f = aug[r][c];
      for (int k = 0; k < n + d; ++k) aug[r][k] -= f * aug[c][k];
    }
  }
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) out[static_cast<std::size_t>(i) * d + k] = aug[i][n + k];
  return out;
}

/// p(theta | tau) proportional to p(theta) prod_t p(s_{t+1} | s_t, a_t, theta),
/// multiplied out directly in probability space.
inline std::vector<double> brute_force_posterior(const Trajectory& tr, const ContextualMdp& m) {
  std::vector<double> w(m.num_contexts);
  double total = 0.0;
  for (int theta = 0; theta < m.num_contexts; ++theta) {
    double p = m.context_prior[theta];
    for (int t = 0; t < tr.horizon(); ++t) p *= m.prob(tr.states[t], tr.actions[t], theta, tr.states[t + 1]);
    total += (w[theta] = p);
  }
  for (auto& x : w) x /= total;
  return w;
}

/// Explicit log posterior: sum over expert steps and contexts of
/// weight * log softmax(Psi^T omega / alpha)[a], plus the Gaussian log density
/// with variance sigma0^2, up to a constant.
inline double explicit_log_posterior(const SuccessorTable& t, const ExpertCounts& counts, const RewardParams& p,
                                     const std::vector<double>& omega) {
  double total = 0.0;
  for (const auto& e : counts.entries) {
    std::vector<double> logits(t.num_actions);
    for (int a = 0; a < t.num_actions; ++a) {
      double q = 0.0;
      const auto r = t.row(e.s, a, e.theta);
      for (int k = 0; k < t.dim; ++k) q += r[k] * omega[k];
      logits[a] = q / p.alpha;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - top);
    total += e.weight * (logits[e.a] - top - std::log(z));
  }
  for (std::size_t k = 0; k < omega.size(); ++k)
    total -= (omega[k] - p.omega0[k]) * (omega[k] - p.omega0[k]) / (2.0 * p.sigma0_sq);
  return total;
}

/// Central finite-difference gradient of explicit_log_posterior.
inline std::vector<double> fd_gradient(const SuccessorTable& t, const ExpertCounts& counts, const RewardParams& p,
                                       double h = 1e-6) {
  std::vector<double> g(p.omega.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    auto up = p.omega, down = p.omega;
    up[k] += h;
    down[k] -= h;
    g[k] = (explicit_log_posterior(t, counts, p, up) - explicit_log_posterior(t, counts, p, down)) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const std::vector<double>& x, const std::vector<double>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - y[i]) * (x[i] - y[i]);
    den += y[i] * y[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

/// Three-state MDP with the two-dimensional feature nu(s) = (I(s1), I(s2)):
/// omega = (r(s1), r(s2)).
inline ContextualMdp three_state_2d(double gamma = 0.9) {
  ContextualMdp m = build_three_state(gamma).mdp;
  m.feature_dim = 2;
  m.features.assign(static_cast<std::size_t>(m.num_states) * m.num_actions * 2, 0.0);
  for (int a = 0; a < m.num_actions; ++a) {
    m.feature(1, a)[0] = 1.0;
    m.feature(2, a)[1] = 1.0;
  }
  return m;
}

/// Exact successor table of the expert (optimal under omega_true) in every
/// context.
inline SuccessorTable expert_sf_table(const ContextualMdp& m, const std::vector<double>& omega_true) {
  std::vector<std::vector<double>> policies;
  const auto reward = reward_table(m, omega_true);
  for (int theta = 0; theta < m.num_contexts; ++theta) {
    const auto vi = value_iteration(m, theta, reward);
    policies.push_back(uniform_over_optimal(vi.q, m.num_states, m.num_actions));
  }
  return exact_successor_table(m, policies);
}

/// Expert data for the three-state MDP: n_per_context trajectories s0 -> s1
/// from each context.
inline std::vector<Trajectory> three_state_expert(int n_per_context) {
  std::vector<Trajectory> data;
  for (int theta = 0; theta < 2; ++theta)
    for (int i = 0; i < n_per_context; ++i) data.push_back({{0, 1}, {theta}});
  return data;
}

/// Fits omega with a fixed (exact) successor table by Newton steps on the
/// full-data log posterior.
inline LaplaceResult fit_fixed_table(const ContextualMdp& m, const std::vector<Trajectory>& data,
                                     SuccessorTable& table, RewardParams& params, int updates = 400) {
  FitConfig cfg;
  cfg.updates = updates;
  cfg.train_sf = false;
  cfg.burn_in_fraction = 0.0;
  cfg.optimizer = RewardOptimizer::kNewton;
  cfg.max_grad_norm = 1.0;
  cfg.grad_tol = 1e-9;
  cfg.log_every = 0;
  RngStream rng(7);
  return fit_map(m, data, table, params, cfg, rng);
}

/// Brute-force maximizer of explicit_log_posterior over a square grid.
inline std::vector<double> grid_argmax(const SuccessorTable& t, const ExpertCounts& counts, const RewardParams& p,
                                       double lo, double hi, double step) {
  const int n = static_cast<int>(std::lround((hi - lo) / step));
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> arg(2), w(2);
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      w[0] = lo + i * step;
      w[1] = lo + j * step;
      const double v = explicit_log_posterior(t, counts, p, w);
      if (v > best) {
        best = v;
        arg = w;
      }
    }
  return arg;
}

}  // namespace oracle
