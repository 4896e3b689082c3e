// Acceptance runner: one PASS/FAIL line per criterion, with the measured
// numbers next to it. Exits nonzero when any criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "big/big.hpp"
#include "oracles.hpp"

using namespace big;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << x;
  return os.str();
}

std::string ms_str(const MeanStderr& m) { return fmt(m.mean, 4) + "+-" + fmt(m.stderr_, 2); }

double pooled(const MeanStderr& a, const MeanStderr& b) { return std::hypot(a.stderr_, b.stderr_); }

/// Mean and s.e. over seeds, skipping NaN entries (seeds without a value).
MeanStderr finite_aggregate(const RunRecord& rec, const std::string& group, const std::string& metric) {
  std::vector<double> xs;
  for (double v : rec.values(group, metric))
    if (std::isfinite(v)) xs.push_back(v);
  return mean_stderr(xs);
}

ExperimentConfig experiment_config(const std::string& file, const fs::path& out) {
  auto kv = KeyValueConfig::load(fs::path(BIG_CONFIG_DIR) / file);
  kv.set("out_dir", out.string());
  return ExperimentConfig::from(kv);
}

// ---------------------------------------------------------------------------

Outcome ac1() {
  using namespace tiger_treasure;
  const auto env = build_tiger_treasure();
  const double g = env.mdp.gamma;
  const auto reward = env.true_reward();
  // Marginal imitation: the expert's action frequencies pooled over contexts.
  std::vector<double> marginal(env.mdp.num_cells(), 0.0);
  for (int theta = 0; theta < 2; ++theta) {
    const auto pi = expert_policy_table(env, theta);
    for (std::size_t i = 0; i < pi.size(); ++i) marginal[i] += env.mdp.context_prior[theta] * pi[i];
  }
  const double naive = prior_averaged_return(env.mdp, {marginal, marginal}, reward);

  TigerTreasureSpec perfect;
  perfect.listen_success = 1.0;
  const auto env1 = build_tiger_treasure(perfect);
  double worst = 0.0, root = 0.0;
  for (int theta = 0; theta < 2; ++theta) {
    std::vector<int> act(kNumStates, kListen);
    act[kHeard1] = kOpen2;
    act[kHeard2] = kOpen1;
    const auto v = evaluate_policy_exact(env1.mdp, theta, policy_table(env1.mdp, act), env1.true_reward()).v;
    worst = std::max(worst, std::abs(v[theta == 0 ? kHeard1 : kHeard2] - (10.0 * g - 1.0)));
    root += env1.mdp.context_prior[theta] * v[kStart];
  }
  const double err_naive = std::abs(naive - (-45.0 * g));
  Outcome o;
  o.pass = err_naive <= 1e-8 && worst <= 1e-8;
  o.detail = "naive=" + fmt(naive, 12) + " (|err|=" + fmt(err_naive, 2) + "), listen-then-act from revealed state " +
             "|err|=" + fmt(worst, 2) + " vs 10g-1=" + fmt(10.0 * g - 1.0, 12) + "; from S0 " + fmt(root, 12);
  return o;
}

Outcome ac2(const fs::path& out) {
  const auto cfg = experiment_config("tiger_treasure.cfg", out / "fig2");
  const auto rec = run_fig2(cfg, out / "fig2");
  std::vector<double> ks = cfg.k_sweep;
  std::sort(ks.begin(), ks.end());
  // The rise is claimed as k* approaches 1 without reaching it; at k* = 1
  // listening pays as much as gold and no door is ever opened. The full-sweep
  // result is still reported.
  bool monotone = true, monotone_all = true;
  std::string curve;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const auto cur = rec.aggregate(k_label(ks[i]), "success_rate");
    curve += " " + k_label(ks[i]) + ":" + ms_str(cur);
    if (i == 0) continue;
    const auto prev = rec.aggregate(k_label(ks[i - 1]), "success_rate");
    if (cur.mean < prev.mean - pooled(cur, prev)) (ks[i] < 1.0 ? monotone : monotone_all) = false;
  }
  monotone_all = monotone_all && monotone;
  double below_one = -1e300;
  for (double k : ks)
    if (k < 1.0) below_one = std::max(below_one, k);
  const double top = rec.aggregate(k_label(below_one), "success_rate").mean;
  int capped = 0;
  for (double v : rec.values(k_label(1.0), "horizon_capped")) capped += v > 0.5;
  const auto none = rec.aggregate("no_prior", "success_rate");
  Outcome o;
  o.pass = monotone && top >= 0.85 && capped >= 1 && none.mean >= 0.44 && none.mean <= 0.56;
  o.detail = std::string("monotone(k<1)=") + (monotone ? "yes" : "no") + " (with k=1: " +
             (monotone_all ? "yes" : "no") + ") success(" + k_label(below_one) +
             ")=" + fmt(top, 4) + " capped_seeds(k=1)=" + std::to_string(capped) + " no_prior=" + ms_str(none) +
             " |" + curve;
  return o;
}

Outcome ac3(const fs::path& out) {
  const auto cfg = experiment_config("latent_chain.cfg", out / "fig3");
  const auto rec = run_fig3(cfg, out / "fig3");
  const auto gt = rec.aggregate("ground_truth", "total_return");
  const auto lat = rec.aggregate("latent_inference", "total_return");
  const auto nol = rec.aggregate("no_latent_inference", "total_return");
  const auto ordered = [&](const std::string& g) {
    const auto r1 = rec.values(g, "r_s1"), r2 = rec.values(g, "r_s2");
    for (std::size_t i = 0; i < r1.size(); ++i)
      if (!(r1[i] > r2[i])) return false;
    return !r1.empty();
  };
  const bool close = std::abs(lat.mean - gt.mean) <= 0.05 * std::abs(gt.mean);
  const bool lower = lat.mean - nol.mean > 2.0 * pooled(lat, nol);
  const bool lat_ok = ordered("latent_inference"), nol_ok = ordered("no_latent_inference");
  Outcome o;
  o.pass = close && lower && lat_ok && !nol_ok;
  o.detail = "return gt=" + ms_str(gt) + " latent=" + ms_str(lat) + " no_latent=" + ms_str(nol) +
             " | r(s1)>r(s2) every seed: latent=" + (lat_ok ? "yes" : "no") + " no_latent=" + (nol_ok ? "yes" : "no") +
             " | mean r(s1),r(s2) latent=" + fmt(rec.aggregate("latent_inference", "r_s1").mean, 3) + "," +
             fmt(rec.aggregate("latent_inference", "r_s2").mean, 3) + " no_latent=" +
             fmt(rec.aggregate("no_latent_inference", "r_s1").mean, 3) + "," +
             fmt(rec.aggregate("no_latent_inference", "r_s2").mean, 3);
  return o;
}

Outcome ac4(const fs::path& out) {
  const auto cfg = experiment_config("tiger_maze.cfg", out / "fig4");
  const auto rec = run_fig4(cfg, out / "fig4");
  const auto hand = rec.aggregate("handcrafted", "total_return");
  const auto coe = rec.aggregate("irl_coe", "total_return");
  const bool close = std::abs(coe.mean - hand.mean) <= 0.1 * std::abs(hand.mean);

  const auto first = finite_aggregate(rec, "irl_only", "first_correct_rate");
  const auto first_rates = rec.values("irl_only", "first_correct_rate");
  const int seeds_with_door = static_cast<int>(
      std::count_if(first_rates.begin(), first_rates.end(), [](double v) { return std::isfinite(v); }));
  // With fewer than two seeds the s.e. is undefined and the check cannot pass.
  const bool coin = seeds_with_door >= 2 && std::abs(first.mean - 0.5) <= 3.0 * first.stderr_;

  std::vector<double> ks = cfg.k_sweep;
  std::sort(ks.begin(), ks.end());
  std::string sweep;
  std::size_t best = 1;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    sweep += " " + format_double(ks[i]) + ":" + ms_str(rec.aggregate(k_label(ks[i]), "total_return"));
    if (i > 0 && i + 1 < ks.size() &&
        rec.aggregate(k_label(ks[i]), "total_return").mean > rec.aggregate(k_label(ks[best]), "total_return").mean)
      best = i;
  }
  const auto b = rec.aggregate(k_label(ks[best]), "total_return");
  const auto lo = rec.aggregate(k_label(ks.front()), "total_return");
  const auto hi = rec.aggregate(k_label(ks.back()), "total_return");
  const bool interior = ks.size() >= 3 && b.mean - lo.mean > pooled(b, lo) && b.mean - hi.mean > pooled(b, hi);
  Outcome o;
  o.pass = close && coin && interior;
  o.detail = "handcrafted=" + ms_str(hand) + " irl_coe=" + ms_str(coe) + " (within 10%: " + (close ? "yes" : "no") +
             ") | irl_only first-door=" + (seeds_with_door ? ms_str(first) : std::string("none opened")) +
             " over " + std::to_string(seeds_with_door) + " seeds | interior optimum at " + format_double(ks[best]) +
             ": " + (interior ? "yes" : "no") + " |" + sweep;
  return o;
}

Outcome ac5() {
  double worst = 0.0;
  // Three-state MDP: sampled expert transitions in both contexts.
  {
    const auto m = build_three_state(0.9).mdp;
    auto table = make_successor_table(m, 1.0, 1);
    for (int it = 0; it < 50; ++it)
      for (int theta = 0; theta < 2; ++theta) expert_td_update(table, m, 0, theta, 1, -1, theta);
    for (int theta = 0; theta < 2; ++theta) {
      std::vector<int> act(3, 0);
      act[0] = theta;
      const auto exact = oracle::dense_sf(m, policy_table(m, act), theta);
      for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(table.row(0, theta, theta)[k] - exact[(theta)*3 + k]));
    }
  }
  RngStream rng(2024);
  // Stochastic 6-state CMDPs: expected TD sweeps.
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = oracle::random_cmdp(rng, 6, 2, 2, 0.9);
    const auto pi = oracle::random_policy(rng, 6, 2);
    auto table = make_successor_table(m, 1.0, 1);
    for (int theta = 0; theta < 2; ++theta) {
      for (int it = 0; it < 400; ++it) expected_td_sweep(table, m, pi, theta);
      worst = std::max(worst, max_abs_difference(table, oracle::dense_sf(m, pi, theta), theta));
    }
  }
  // Deterministic 6-state CMDPs: sampled transitions with the policy's next action.
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = oracle::random_cmdp(rng, 6, 2, 2, 0.9, true);
    const auto pi = oracle::random_policy(rng, 6, 2, true);
    auto table = make_successor_table(m, 1.0, 1);
    for (int theta = 0; theta < 2; ++theta) {
      for (int it = 0; it < 400; ++it)
        for (int s = 0; s < 6; ++s)
          for (int a = 0; a < 2; ++a) {
            int next = 0;
            while (m.prob(s, a, theta, next) != 1.0) ++next;
            const int b = pi[next * 2] == 1.0 ? 0 : 1;
            expert_td_update(table, m, s, a, next, b, theta);
          }
      worst = std::max(worst, max_abs_difference(table, oracle::dense_sf(m, pi, theta), theta));
    }
  }
  return {worst <= 1e-6, "max |Psi_td - Psi_dense| = " + fmt(worst, 3) + " over 3-state + 20 stochastic + 20 "
                         "deterministic 6-state CMDPs"};
}

struct ThreeState2d {
  ContextualMdp m = oracle::three_state_2d(0.9);
  SuccessorTable table = oracle::expert_sf_table(m, {1.0, -1.0});
  std::vector<Trajectory> data = oracle::three_state_expert(5);
  ExpertCounts counts = full_counts(data, m, ContextInference::kPosterior);
};

Outcome ac6() {
  ThreeState2d f;
  RngStream rng(6);
  double worst = 0.0;
  for (double alpha : {0.05, 0.3, 1.0})
    for (int rep = 0; rep < 5; ++rep) {
      auto p = RewardParams::with_varsigma(2, alpha, 2.0, 0.1);
      p.omega = {0.3 * rng.normal(), 0.3 * rng.normal()};
      auto g = map_gradient(p, f.counts, f.table);
      for (double& x : g) x /= alpha;
      worst = std::max(worst, oracle::relative_error(g, oracle::fd_gradient(f.table, f.counts, p)));
    }
  auto p = RewardParams::with_varsigma(2, 1.0, 1.0, 0.1);
  const auto fit = oracle::fit_fixed_table(f.m, f.data, f.table, p);
  const auto grid = oracle::grid_argmax(f.table, f.counts, p, -3.0, 3.0, 0.01);
  const double gap = std::max(std::abs(fit.omega_map[0] - grid[0]), std::abs(fit.omega_map[1] - grid[1]));
  return {worst <= 1e-4 && gap <= 0.01,
          "max rel err=" + fmt(worst, 3) + " fit_map=(" + fmt(fit.omega_map[0], 5) + "," + fmt(fit.omega_map[1], 5) +
              ") grid=(" + fmt(grid[0], 4) + "," + fmt(grid[1], 4) + ") gap=" + fmt(gap, 3)};
}

Outcome ac7() {
  ThreeState2d f;
  std::string detail = "gap by alpha:";
  bool alpha_ok = true;
  double last = -1e300;
  for (double alpha : {0.001, 0.01, 0.1, 1.0}) {
    auto p = RewardParams::with_varsigma(2, alpha, 1.0, 0.1);
    const auto fit = oracle::fit_fixed_table(f.m, f.data, f.table, p);
    const double gap = fit.omega_map[0] - fit.omega_map[1];
    alpha_ok = alpha_ok && gap >= last;
    last = gap;
    detail += " " + fmt(alpha) + "->" + fmt(gap, 5);
  }
  detail += " | |omega-omega0| by varsigma0^2:";
  bool prior_ok = true;
  double prev = 1e300;
  for (double v : {10.0, 1.0, 0.1, 0.01}) {
    auto p = RewardParams::with_varsigma(2, 0.1, v, 0.1);
    p.omega0 = {0.2, 0.1};
    p.omega = p.omega0;
    const auto fit = oracle::fit_fixed_table(f.m, f.data, f.table, p);
    const double dist = std::hypot(fit.omega_map[0] - 0.2, fit.omega_map[1] - 0.1);
    prior_ok = prior_ok && dist < prev;
    prev = dist;
    detail += " " + fmt(v) + "->" + fmt(dist, 5);
  }
  return {alpha_ok && prior_ok, detail};
}

Outcome ac8() {
  double worst = 0.0;
  RngStream rng(88);
  for (const auto& name : {"tiger_treasure", "latent_chain", "tiger_maze"}) {
    const auto env = make_environment(name);
    for (int i = 0; i < 100; ++i) {
      const int theta = rng.categorical(env.mdp.context_prior);
      const auto tr = sample_rollout(env.mdp, theta, uniform_random_policy(env.mdp.num_actions), 30, rng);
      const auto got = trajectory_posterior(tr, env.mdp).probabilities();
      const auto want = oracle::brute_force_posterior(tr, env.mdp);
      for (std::size_t c = 0; c < got.size(); ++c) worst = std::max(worst, std::abs(got[c] - want[c]));
    }
  }
  using namespace tiger_treasure;
  const auto m = build_tiger_treasure().mdp;
  const double one = belief_update(BeliefState::from_prior(m.context_prior), kStart, kListen, kHeard1, m).probability(0);
  const bool pass = worst <= 1e-12 && std::abs(one - 0.85) <= 1e-15;
  return {pass, "max |posterior - brute force| = " + fmt(worst, 3) + " over 300 trajectories; one listen -> " +
                    fmt(one, 17)};
}

Outcome ac9() {
  const auto env = build_counterexample(0.4);
  bool freq_ok = true, birl_ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RngStream data_rng = RngStream(seed).split(1), fit_rng = RngStream(seed).split(2);
    const auto data = learner_view(generate_expert_dataset(env, 200, env.horizon, data_rng));
    const auto freq = visitation_frequency_reward(env.mdp, data);
    const double f1 = freq[1 * 2], f2 = freq[2 * 2];
    freq_ok = freq_ok && f2 >= f1;

    auto table = make_successor_table(env.mdp, 0.1, 1);
    auto params = RewardParams::with_varsigma(env.mdp.feature_dim, 0.01, 100.0, 0.01);
    FitConfig cfg;
    cfg.updates = 1000;
    cfg.expert_batch = 50;
    cfg.parallel_envs = 16;
    cfg.rollout_steps = env.horizon;
    cfg.sim_batch = 16;
    cfg.max_grad_norm = 0.5;
    cfg.sf_lr_decay = 100;
    cfg.log_every = 0;
    cfg.compute_hessian = false;
    const auto fit = fit_map(env.mdp, data, table, params, cfg, fit_rng);
    const double b1 = fit.omega_map[1], b2 = fit.omega_map[2];
    birl_ok = birl_ok && b1 > b2;
    detail += " seed" + std::to_string(seed) + ": freq(" + fmt(f1, 3) + "," + fmt(f2, 3) + ") birl(" + fmt(b1, 4) +
              "," + fmt(b2, 4) + ")";
  }
  return {freq_ok && birl_ok, std::string("freq r(s2)>=r(s1) all seeds: ") + (freq_ok ? "yes" : "no") +
                                  ", birl r(s1)>r(s2) all seeds: " + (birl_ok ? "yes" : "no") + " |" + detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  fs::path out = "acceptance_out";
  std::string only;
  app.add_option("--out", out, "directory for experiment artifacts");
  app.add_option("--only", only, "comma-separated subset, e.g. 1,5,8");
  CLI11_PARSE(app, argc, argv);

  std::set<int> pick;
  for (const auto& item : detail::split(only, ','))
    if (!detail::trim(item).empty()) pick.insert(static_cast<int>(parse_int(detail::trim(item), "--only")));

  struct Check {
    int id;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Check> checks{
      {1, 1.0, ac1},
      {2, 30 * 60.0, [&] { return ac2(out); }},
      {3, 20 * 60.0, [&] { return ac3(out); }},
      {4, 60 * 60.0, [&] { return ac4(out); }},
      {5, 10.0, ac5},
      {6, 30.0, ac6},
      {7, 60.0, ac7},
      {8, 5.0, ac8},
      {9, 5 * 60.0, ac9},
  };
  fs::create_directories(out);
  int failures = 0;
  for (const auto& c : checks) {
    if (!pick.empty() && !pick.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("AC%d %s  [%.1fs, budget %.0fs%s] %s\n", c.id, pass ? "PASS" : "FAIL", secs, c.budget_s,
                in_time ? "" : ", over budget", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
