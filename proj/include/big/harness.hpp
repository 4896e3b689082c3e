#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "big/bamdp.hpp"
#include "big/birl.hpp"
#include "big/envs.hpp"
#include "big/error.hpp"
#include "big/io.hpp"
#include "big/reward_posterior.hpp"
#include "big/rng.hpp"
#include "big/successor.hpp"

namespace big {

/// Seeds written as "1..10" (inclusive) or "1,2,5".
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const std::string t = detail::trim(text);
  if (const auto dots = t.find(".."); dots != std::string::npos) {
    const long long lo = parse_int(t.substr(0, dots), "seeds");
    const long long hi = parse_int(t.substr(dots + 2), "seeds");
    if (lo < 0 || hi < lo) throw Error(ErrorCode::kConfig, "seeds: bad range '" + t + "'");
    for (long long s = lo; s <= hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
  } else {
    for (const auto& item : detail::split(t, ','))
      if (!detail::trim(item).empty()) {
        const long long s = parse_int(detail::trim(item), "seeds");
        if (s < 0) throw Error(ErrorCode::kConfig, "seeds must be nonnegative");
        seeds.push_back(static_cast<std::uint64_t>(s));
      }
  }
  if (seeds.empty()) throw Error(ErrorCode::kConfig, "seeds: empty list");
  return seeds;
}

inline ContextInference parse_inference(const std::string& v) {
  if (v == "posterior") return ContextInference::kPosterior;
  if (v == "prior_mode") return ContextInference::kPriorMode;
  throw Error(ErrorCode::kConfig, "inference: expected posterior or prior_mode, got '" + v + "'");
}

inline RewardOptimizer parse_optimizer(const std::string& v) {
  if (v == "gradient") return RewardOptimizer::kGradient;
  if (v == "newton") return RewardOptimizer::kNewton;
  throw Error(ErrorCode::kConfig, "optimizer: expected gradient or newton, got '" + v + "'");
}

/// Every knob of one experiment, read from a key = value file.
struct ExperimentConfig {
  KeyValueConfig raw;
  std::string experiment;
  std::string env;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir = "out";

  int expert_trajectories = 500;
  int expert_horizon = 50;

  FitConfig fit;
  double sf_learning_rate = 0.1;
  int target_sync_period = 1;
  double alpha = 0.01;
  double varsigma0_sq = 100.0;
  double reward_learning_rate = 0.01;

  double r_min = -1.0;
  double r_max = 1.0;
  double k_star = 0.0;
  std::vector<double> k_sweep;

  QConfig q;
  int eval_episodes = 1000;
  int eval_horizon = 50;
  /// Points on each learning curve, and episodes per curve point.
  int curve_points = 10;
  int curve_eval_episodes = 200;

  static ExperimentConfig from(const KeyValueConfig& kv) {
    ExperimentConfig c;
    c.raw = kv;
    c.experiment = kv.get("experiment");
    c.env = kv.get("env");
    c.seeds = parse_seed_list(kv.get("seeds"));
    c.out_dir = kv.get_or("out_dir", c.out_dir.string());

    c.expert_trajectories = static_cast<int>(kv.get_int("expert_trajectories"));
    c.expert_horizon = static_cast<int>(kv.get_int("expert_horizon"));

    FitConfig& f = c.fit;
    f.updates = static_cast<int>(kv.get_int("irl_updates"));
    f.parallel_envs = static_cast<int>(kv.get_int("parallel_envs"));
    f.rollout_steps = static_cast<int>(kv.get_int("rollout_steps"));
    f.epsilon = kv.get_double("epsilon");
    f.max_grad_norm = kv.get_double("max_grad_norm");
    f.replay_capacity = static_cast<int>(kv.get_int("replay_capacity"));
    f.expert_batch = static_cast<int>(kv.get_int("expert_batch"));
    f.sim_batch = static_cast<int>(kv.get_int("sim_batch"));
    f.burn_in_fraction = kv.get_double_or("burn_in_fraction", f.burn_in_fraction);
    f.beta = kv.get_double_or("beta", f.beta);
    f.sf_lr_decay = kv.get_double_or("sf_lr_decay", f.sf_lr_decay);
    f.reward_batch = static_cast<int>(kv.get_int_or("reward_batch", f.reward_batch));
    f.optimizer = parse_optimizer(kv.get_or("optimizer", "gradient"));
    f.inference = parse_inference(kv.get_or("inference", "posterior"));
    f.sample_context = kv.get_bool_or("sample_context", f.sample_context);
    f.backtracking = kv.get_bool_or("backtracking", f.backtracking);
    f.grad_tol = kv.get_double_or("grad_tol", f.grad_tol);
    f.log_every = static_cast<int>(kv.get_int_or("log_every", 10));
    f.compute_hessian = kv.get_bool_or("compute_hessian", true);

    c.sf_learning_rate = kv.get_double("sf_learning_rate");
    c.target_sync_period = static_cast<int>(kv.get_int("target_sync_period"));
    c.alpha = kv.get_double("alpha");
    c.varsigma0_sq = kv.get_double("varsigma0_sq");
    c.reward_learning_rate = kv.get_double("reward_learning_rate");

    c.r_min = kv.get_double("r_min");
    c.r_max = kv.get_double("r_max");
    c.k_star = kv.get_double("k_star");
    if (kv.has("k_sweep")) c.k_sweep = kv.get_double_list("k_sweep");

    QConfig& q = c.q;
    q.episodes = static_cast<int>(kv.get_int("q_episodes"));
    q.horizon = static_cast<int>(kv.get_int("q_horizon"));
    q.learning_rate = kv.get_double("q_learning_rate");
    q.eps_start = kv.get_double("eps_start");
    q.eps_end = kv.get_double("eps_end");
    q.eps_fraction = kv.get_double("eps_fraction");
    q.target_sync = static_cast<int>(kv.get_int_or("q_target_sync", q.target_sync));
    q.bins_per_axis = static_cast<int>(kv.get_int_or("belief_bins", q.bins_per_axis));
    q.max_log_odds = kv.get_double_or("max_log_odds", q.max_log_odds);
    q.optimistic_init = kv.get_bool_or("optimistic_init", q.optimistic_init);
    q.lr_decay = kv.get_double_or("q_lr_decay", q.lr_decay);

    c.eval_episodes = static_cast<int>(kv.get_int("eval_episodes"));
    c.eval_horizon = static_cast<int>(kv.get_int("eval_horizon"));
    c.curve_points = static_cast<int>(kv.get_int_or("curve_points", c.curve_points));
    c.curve_eval_episodes = static_cast<int>(kv.get_int_or("curve_eval_episodes", c.curve_eval_episodes));
    c.check();
    return c;
  }

  void check() const {
    const auto need = [](bool ok, const std::string& what) {
      if (!ok) throw Error(ErrorCode::kConfig, what);
    };
    need(experiment == "pipeline" || experiment == "fig2" || experiment == "fig3" || experiment == "fig4",
         "experiment must be pipeline, fig2, fig3 or fig4");
    need(expert_trajectories >= 1 && expert_horizon >= 1, "expert data sizes must be positive");
    need(fit.updates >= 1 && fit.parallel_envs >= 0 && fit.rollout_steps >= 1, "irl schedule must be positive");
    need(fit.epsilon >= 0.0 && fit.epsilon <= 1.0, "epsilon must lie in [0, 1]");
    need(sf_learning_rate > 0.0 && sf_learning_rate <= 1.0, "sf_learning_rate must lie in (0, 1]");
    need(target_sync_period >= 1, "target_sync_period must be >= 1");
    need(alpha > 0.0 && varsigma0_sq > 0.0 && reward_learning_rate > 0.0, "alpha, varsigma0_sq and "
         "reward_learning_rate must be positive");
    need(r_min < r_max && r_max > 0.0, "need r_min < r_max and r_max > 0");
    const auto k_ok = [&](double k) { return k >= r_min / r_max - 1e-12 && k <= 1.0; };
    need(k_ok(k_star), "k_star outside [r_min/r_max, 1]");
    for (double k : k_sweep) need(k_ok(k), "k_sweep value " + format_double(k) + " outside [r_min/r_max, 1]");
    need((experiment != "fig2" && experiment != "fig4") || !k_sweep.empty(), experiment + " needs k_sweep");
    need(q.episodes >= 1 && q.horizon >= 1 && q.learning_rate > 0.0, "Q-learning schedule must be positive");
    need(q.lr_decay >= 0.0, "q_lr_decay must be >= 0");
    need(eval_episodes >= 1 && eval_horizon >= 1, "evaluation sizes must be positive");
    need(curve_points >= 1 && curve_eval_episodes >= 1, "curve sizes must be positive");
  }

  /// FNV-1a over the canonical key = value listing.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : raw.serialize()) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
  }

  EvalSpec eval_spec(const Environment& e) const { return {e.listen_action, e.success_states, e.failure_states}; }
};

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return ExperimentConfig::from(KeyValueConfig::load(path));
}

// ---------------------------------------------------------------------------
// Per-seed records

struct SeedRow {
  std::string group;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

/// Per-seed metrics plus their aggregates; stderr is sample sd / sqrt(n).
struct RunRecord {
  std::string config_hash;
  std::vector<SeedRow> rows;

  void add(const std::string& group, std::uint64_t seed, const std::string& metric, double value) {
    rows.push_back({group, seed, metric, value});
  }

  std::vector<double> values(const std::string& group, const std::string& metric) const {
    std::vector<double> out;
    for (const auto& r : rows)
      if (r.group == group && r.metric == metric) out.push_back(r.value);
    return out;
  }

  MeanStderr aggregate(const std::string& group, const std::string& metric) const {
    const auto v = values(group, metric);
    return mean_stderr(v);
  }

  std::vector<std::pair<std::string, std::string>> keys() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& r : rows)
      if (std::find(out.begin(), out.end(), std::pair{r.group, r.metric}) == out.end())
        out.emplace_back(r.group, r.metric);
    return out;
  }

  void append(const RunRecord& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }

  /// Writes per_seed.csv and summary.csv into `dir`.
  void write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    CsvWriter per(dir / "per_seed.csv", {"config_hash", "group", "seed", "metric", "value"});
    for (const auto& r : rows) per.row(config_hash, r.group, static_cast<unsigned long long>(r.seed), r.metric, r.value);
    CsvWriter sum(dir / "summary.csv", {"config_hash", "group", "metric", "n", "mean", "stderr"});
    for (const auto& [g, m] : keys()) {
      const auto v = values(g, m);
      const auto a = mean_stderr(v);
      sum.row(config_hash, g, m, static_cast<int>(v.size()), a.mean, a.stderr_);
    }
  }
};

// ---------------------------------------------------------------------------
// Stages

/// Runs `fn`, relabelling library errors with the stage name.
template <typename Fn>
auto with_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), stage + ": " + e.detail());
  }
}

inline Environment make_experiment_env(const ExperimentConfig& cfg) {
  return with_stage("env", [&] { return make_environment(cfg.env, cfg.raw); });
}

/// Independent streams per pipeline stage of one seed. Variants within a
/// seed share the evaluation stream so they are compared on the same
/// episodes.
struct SeedStreams {
  RngStream data, fit, q, eval;
  explicit SeedStreams(std::uint64_t seed)
      : data(RngStream(seed).split(1)),
        fit(RngStream(seed).split(2)),
        q(RngStream(seed).split(3)),
        eval(RngStream(seed).split(4)) {}
};

inline std::vector<LabeledTrajectory> stage_expert_data(const ExperimentConfig& cfg, const Environment& env,
                                                        RngStream& rng) {
  return with_stage("expert-data",
                    [&] { return generate_expert_dataset(env, cfg.expert_trajectories, cfg.expert_horizon, rng); });
}

struct IrlOutput {
  LaplaceResult fit;
  std::vector<double> raw_reward;
};

inline IrlOutput stage_irl(const ExperimentConfig& cfg, const Environment& env, const std::vector<Trajectory>& data,
                           RngStream& rng, std::optional<ContextInference> inference = std::nullopt) {
  return with_stage("irl", [&] {
    SuccessorTable table = make_successor_table(env.mdp, cfg.sf_learning_rate, cfg.target_sync_period);
    RewardParams params =
        RewardParams::with_varsigma(env.mdp.feature_dim, cfg.alpha, cfg.varsigma0_sq, cfg.reward_learning_rate);
    FitConfig fit = cfg.fit;
    if (inference) fit.inference = *inference;
    IrlOutput out;
    out.fit = fit_map(env.mdp, data, table, params, fit, rng);
    out.raw_reward = posterior_predictive_reward_raw(out.fit, env.mdp);
    return out;
  });
}

inline Rescaled stage_rescale(const ExperimentConfig& cfg, std::span<const double> raw) {
  return with_stage("rescale", [&] { return rescale(raw, cfg.r_min, cfg.r_max); });
}

/// IRL-only reward when `k` is empty, otherwise COE with scale k.
inline PredictiveReward stage_coe(const ExperimentConfig& cfg, const Environment& env, const Rescaled& scaled,
                                  std::optional<double> k) {
  return with_stage("coe", [&] {
    if (!k) return irl_only(scaled.table, env.mdp.num_states, env.mdp.num_actions);
    CoeSpec spec;
    spec.cells = env.coe_cells;
    spec.k_star = *k;
    spec.r_min = cfg.r_min;
    spec.r_max = cfg.r_max;
    return apply_coe(scaled.table, env.mdp.num_states, env.mdp.num_actions, spec);
  });
}

/// One point of a learning curve: true-reward returns after `episode`
/// training episodes.
struct CurvePoint {
  int episode = 0;
  double total_return = 0.0;
  double discounted_return = 0.0;
};

/// Trains a belief-augmented Q policy on `reward` (normalized first) and
/// evaluates it under the true reward. With curve_points > 0, also records a
/// learning curve.
struct BamdpOutput {
  QTable table;
  EvalMetrics metrics;
  std::vector<CurvePoint> curve;
};

inline BamdpOutput stage_bamdp(const ExperimentConfig& cfg, const Environment& env, std::span<const double> reward,
                               RngStream& q_rng, RngStream& eval_rng, bool record_curve) {
  BamdpOutput out;
  const auto truth = env.true_reward();
  const EvalSpec spec = cfg.eval_spec(env);
  TrainingMonitor monitor;
  int every = 0;
  if (record_curve) {
    every = std::max(1, cfg.q.episodes / cfg.curve_points);
    monitor = [&](int episode, const QTable& t) {
      const auto m = with_stage("eval", [&] {
        return evaluate_policy(env.mdp, t.policy(), truth, cfg.curve_eval_episodes, cfg.eval_horizon, spec, eval_rng);
      });
      out.curve.push_back({episode, m.total_return.mean, m.discounted_return.mean});
    };
  }
  out.table = with_stage("bamdp", [&] {
    const auto normalized = normalize_for_training(reward);
    return train_bayes_policy(env.mdp, normalized, cfg.q, q_rng, monitor, every);
  });
  out.metrics = with_stage("eval", [&] {
    return evaluate_policy(env.mdp, out.table.policy(), truth, cfg.eval_episodes, cfg.eval_horizon, spec, eval_rng);
  });
  return out;
}

// ---------------------------------------------------------------------------
// CSV artifacts

inline void write_expert_data_csv(const std::filesystem::path& path, const std::vector<LabeledTrajectory>& data) {
  CsvWriter out(path, {"traj", "t", "s", "a", "theta"});
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Trajectory& tr = data[i].trajectory;
    for (std::size_t t = 0; t < tr.states.size(); ++t)
      out.row(static_cast<int>(i), static_cast<int>(t), tr.states[t],
              t < tr.actions.size() ? tr.actions[t] : -1, data[i].theta);
  }
}

inline std::vector<LabeledTrajectory> read_expert_data_csv(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  const int ci = csv.column("traj"), ct = csv.column("t"), cs = csv.column("s"), ca = csv.column("a"),
            cth = csv.column("theta");
  std::vector<LabeledTrajectory> out;
  for (const auto& r : csv.rows) {
    const auto i = static_cast<std::size_t>(parse_int(r[ci], "traj"));
    const auto t = static_cast<std::size_t>(parse_int(r[ct], "t"));
    if (i > out.size()) throw Error(ErrorCode::kIo, "expert data rows out of order at traj " + r[ci]);
    if (i == out.size()) out.emplace_back();
    LabeledTrajectory& lt = out[i];
    if (t != lt.trajectory.states.size()) throw Error(ErrorCode::kIo, "expert data rows out of order at t " + r[ct]);
    lt.trajectory.states.push_back(static_cast<int>(parse_int(r[cs], "s")));
    if (const long long a = parse_int(r[ca], "a"); a >= 0) lt.trajectory.actions.push_back(static_cast<int>(a));
    lt.theta = static_cast<int>(parse_int(r[cth], "theta"));
  }
  for (const auto& lt : out)
    if (lt.trajectory.states.size() != lt.trajectory.actions.size() + 1)
      throw Error(ErrorCode::kIo, "expert trajectory needs one more state than actions");
  return out;
}

/// omega as a `dim,value` listing.
inline void write_omega_csv(const std::filesystem::path& path, std::span<const double> omega) {
  CsvWriter out(path, {"dim", "value"});
  for (std::size_t i = 0; i < omega.size(); ++i) out.row(static_cast<int>(i), omega[i]);
}

inline std::vector<double> read_omega_csv(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  const int ci = csv.column("dim"), cv = csv.column("value");
  std::vector<double> out(csv.rows.size());
  for (const auto& r : csv.rows) {
    const long long i = parse_int(r[ci], "dim");
    if (i < 0 || i >= static_cast<long long>(out.size())) throw Error(ErrorCode::kIo, "dim out of range");
    out[i] = parse_double(r[cv], "value");
  }
  return out;
}

inline void write_reward_table_csv(const std::filesystem::path& path, const ContextualMdp& mdp,
                                   std::span<const double> table) {
  CsvWriter out(path, {"s", "a", "mean"});
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a) out.row(s, a, table[s * mdp.num_actions + a]);
}

/// Reads an (s, a) reward listing; `column` is "mean" for raw IRL tables and
/// "value" for final ones.
inline std::vector<double> read_reward_table_csv(const std::filesystem::path& path, const ContextualMdp& mdp,
                                                 const std::string& column = "mean") {
  const CsvTable csv = read_csv(path);
  const int cs = csv.column("s"), ca = csv.column("a"), cr = csv.column(column);
  std::vector<double> table(mdp.num_cells(), std::numeric_limits<double>::quiet_NaN());
  for (const auto& r : csv.rows) {
    const long long s = parse_int(r[cs], "s"), a = parse_int(r[ca], "a");
    if (s < 0 || s >= mdp.num_states || a < 0 || a >= mdp.num_actions)
      throw Error(ErrorCode::kIndexOutOfRange, "reward cell (" + r[cs] + "," + r[ca] + ")");
    table[s * mdp.num_actions + a] = parse_double(r[cr], column);
  }
  for (double v : table)
    if (std::isnan(v)) throw Error(ErrorCode::kIo, path.string() + ": reward table misses a cell");
  return table;
}

inline void write_final_reward_csv(const std::filesystem::path& path, const PredictiveReward& r) {
  CsvWriter out(path, {"s", "a", "value", "provenance"});
  for (int s = 0; s < r.num_states; ++s)
    for (int a = 0; a < r.num_actions; ++a)
      out.row(s, a, r.at(s, a), std::string(to_string(r.provenance[s * r.num_actions + a])));
}

/// Exploration cells as an `s,a` listing.
inline void write_coe_set_csv(const std::filesystem::path& path, const std::vector<std::pair<int, int>>& cells) {
  CsvWriter out(path, {"s", "a"});
  for (const auto& [s, a] : cells) out.row(s, a);
}

inline std::vector<std::pair<int, int>> read_coe_set_csv(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  const int cs = csv.column("s"), ca = csv.column("a");
  std::vector<std::pair<int, int>> cells;
  for (const auto& r : csv.rows)
    cells.emplace_back(static_cast<int>(parse_int(r[cs], "s")), static_cast<int>(parse_int(r[ca], "a")));
  return cells;
}

inline void write_fit_log_csv(const std::filesystem::path& path, const LaplaceResult& fit) {
  CsvWriter out(path, {"step", "grad_norm", "loglik"});
  for (const auto& row : fit.log) out.row(row.step, row.grad_norm, row.loglik);
}

/// Loads Q-values written by write_qtable_csv into a table built for `mdp`.
inline QTable read_qtable_csv(const std::filesystem::path& path, const ContextualMdp& mdp, const QConfig& cfg) {
  QTable t;
  t.num_states = mdp.num_states;
  t.num_actions = mdp.num_actions;
  t.binning = BeliefBinning(mdp.num_contexts, cfg.bins_per_axis, cfg.max_log_odds);
  t.q.assign(static_cast<std::size_t>(mdp.num_states) * t.binning.num_bins() * mdp.num_actions, 0.0);
  const CsvTable csv = read_csv(path);
  const int cs = csv.column("s"), cb = csv.column("bin"), ca = csv.column("a"), cq = csv.column("q");
  for (const auto& r : csv.rows) {
    const long long s = parse_int(r[cs], "s"), b = parse_int(r[cb], "bin"), a = parse_int(r[ca], "a");
    if (s < 0 || s >= t.num_states || b < 0 || b >= t.binning.num_bins() || a < 0 || a >= t.num_actions)
      throw Error(ErrorCode::kIndexOutOfRange, "Q cell (" + r[cs] + "," + r[cb] + "," + r[ca] + ")");
    t.q[t.index(static_cast<int>(s), static_cast<int>(b), static_cast<int>(a))] = parse_double(r[cq], "q");
  }
  t.target = t.q;
  return t;
}

/// Naive baseline: r(s) = fraction of trajectories that visit s, ignoring
/// the context entirely. Indexed [s * A + a].
inline std::vector<double> visitation_frequency_reward(const ContextualMdp& mdp,
                                                       const std::vector<Trajectory>& data) {
  if (data.empty()) throw Error(ErrorCode::kInvalidSpec, "no trajectories");
  std::vector<double> visits(mdp.num_states, 0.0);
  for (const auto& tr : data) {
    std::vector<char> seen(mdp.num_states, 0);
    for (int s : tr.states) {
      mdp.check_state(s);
      seen[s] = 1;
    }
    for (int s = 0; s < mdp.num_states; ++s) visits[s] += seen[s];
  }
  std::vector<double> table(mdp.num_cells());
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      table[s * mdp.num_actions + a] = visits[s] / static_cast<double>(data.size());
  return table;
}

// ---------------------------------------------------------------------------
// Experiments

inline std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

inline void add_metrics(RunRecord& rec, const std::string& group, std::uint64_t seed, const EvalMetrics& m) {
  rec.add(group, seed, "total_return", m.total_return.mean);
  rec.add(group, seed, "discounted_return", m.discounted_return.mean);
  rec.add(group, seed, "success_rate", m.success_rate.mean);
  rec.add(group, seed, "first_correct_rate",
          m.encounters > 0 ? m.first_correct_rate.mean : std::numeric_limits<double>::quiet_NaN());
  rec.add(group, seed, "explore_steps", m.explore_steps.mean);
  rec.add(group, seed, "capped_fraction", m.capped_fraction);
  rec.add(group, seed, "horizon_capped", m.horizon_capped() ? 1.0 : 0.0);
}

/// Algorithm 1 end to end for one seed with k = k_star; every intermediate
/// artifact lands in `dir`.
inline RunRecord run_pipeline(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  RunRecord rec;
  rec.config_hash = cfg.hash();
  const Environment env = make_experiment_env(cfg);
  SeedStreams rng(seed);
  const auto data = stage_expert_data(cfg, env, rng.data);
  write_expert_data_csv(dir / "expert_data.csv", data);
  const auto irl = stage_irl(cfg, env, learner_view(data), rng.fit);
  write_omega_csv(dir / "omega_map.csv", irl.fit.omega_map);
  write_fit_log_csv(dir / "fit_log.csv", irl.fit);
  write_reward_table_csv(dir / "reward_table.csv", env.mdp, irl.raw_reward);
  const auto scaled = stage_rescale(cfg, irl.raw_reward);
  const auto final_reward = stage_coe(cfg, env, scaled, cfg.k_star);
  write_final_reward_csv(dir / "reward_final.csv", final_reward);
  const auto out = stage_bamdp(cfg, env, final_reward.table, rng.q, rng.eval, false);
  write_qtable_csv(dir / "qtable.csv", out.table);
  write_metrics_csv(dir / "metrics.csv", out.metrics);
  add_metrics(rec, "pipeline", seed, out.metrics);
  rec.add("pipeline", seed, "irl_converged", irl.fit.converged ? 1.0 : 0.0);
  rec.add("pipeline", seed, "irl_final_grad_norm", irl.fit.final_grad_norm);
  return rec;
}

/// Label used for a k value in tables.
inline std::string k_label(double k) { return "k=" + format_double(k); }

/// Tiger-Treasure sweep: IRL-only ("no_prior") and IRL+COE for each k in
/// k_sweep. Emits fig2.csv.
inline RunRecord run_fig2(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  RunRecord rec;
  rec.config_hash = cfg.hash();
  const Environment env = make_experiment_env(cfg);
  CsvWriter csv(dir / "fig2.csv", {"kstar", "seed", "success_rate", "explore_steps"});
  for (const std::uint64_t seed : cfg.seeds) {
    SeedStreams rng(seed);
    const auto data = stage_expert_data(cfg, env, rng.data);
    const auto irl = stage_irl(cfg, env, learner_view(data), rng.fit);
    const auto scaled = stage_rescale(cfg, irl.raw_reward);
    const auto sdir = dir / seed_dir_name(seed);
    std::filesystem::create_directories(sdir);
    write_omega_csv(sdir / "omega_map.csv", irl.fit.omega_map);
    write_reward_table_csv(sdir / "reward_table.csv", env.mdp, scaled.table);
    std::vector<std::optional<double>> variants{std::nullopt};
    for (double k : cfg.k_sweep) variants.emplace_back(k);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const std::string group = variants[v] ? k_label(*variants[v]) : "no_prior";
      const auto reward = stage_coe(cfg, env, scaled, variants[v]);
      RngStream q_rng = rng.q.split(v), eval_rng = rng.eval;
      const auto out = stage_bamdp(cfg, env, reward.table, q_rng, eval_rng, false);
      add_metrics(rec, group, seed, out.metrics);
      csv.row(variants[v] ? format_double(*variants[v]) : std::string("no_prior"),
              static_cast<unsigned long long>(seed), out.metrics.success_rate.mean, out.metrics.explore_steps.mean);
    }
  }
  rec.write(dir);
  return rec;
}

/// Latent chain: policies trained on the true reward, on IRL with context
/// inference, and on IRL with every trajectory assigned the prior mode.
/// Emits fig3.csv (learning curves) and fig3_rewards.csv.
inline RunRecord run_fig3(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  RunRecord rec;
  rec.config_hash = cfg.hash();
  const Environment env = make_experiment_env(cfg);
  CsvWriter curves(dir / "fig3.csv", {"policy", "seed", "episode", "total_return", "discounted_return"});
  CsvWriter rewards(dir / "fig3_rewards.csv", {"policy", "seed", "s", "a", "reward"});
  const int A = env.mdp.num_actions;
  for (const std::uint64_t seed : cfg.seeds) {
    SeedStreams rng(seed);
    const auto data = stage_expert_data(cfg, env, rng.data);
    const auto view = learner_view(data);
    struct Variant {
      std::string name;
      std::vector<double> reward;
    };
    std::vector<Variant> variants{{"ground_truth", env.true_reward()}};
    const std::pair<const char*, ContextInference> modes[] = {{"latent_inference", ContextInference::kPosterior},
                                                              {"no_latent_inference", ContextInference::kPriorMode}};
    for (std::size_t i = 0; i < 2; ++i) {
      RngStream fit_rng = rng.fit.split(i);
      const auto irl = stage_irl(cfg, env, view, fit_rng, modes[i].second);
      const auto scaled = stage_rescale(cfg, irl.raw_reward);
      const auto reward = stage_coe(cfg, env, scaled, std::nullopt);
      rec.add(modes[i].first, seed, "r_s1", reward.at(1, 0));
      rec.add(modes[i].first, seed, "r_s2", reward.at(2, 0));
      rec.add(modes[i].first, seed, "irl_final_grad_norm", irl.fit.final_grad_norm);
      variants.push_back({modes[i].first, reward.table});
    }
    for (std::size_t v = 0; v < variants.size(); ++v) {
      for (int s = 0; s < env.mdp.num_states; ++s)
        for (int a = 0; a < A; ++a)
          rewards.row(variants[v].name, static_cast<unsigned long long>(seed), s, a, variants[v].reward[s * A + a]);
      RngStream q_rng = rng.q.split(v), eval_rng = rng.eval;
      const auto out = stage_bamdp(cfg, env, variants[v].reward, q_rng, eval_rng, true);
      for (const auto& p : out.curve)
        curves.row(variants[v].name, static_cast<unsigned long long>(seed), p.episode, p.total_return,
                   p.discounted_return);
      add_metrics(rec, variants[v].name, seed, out.metrics);
    }
  }
  rec.write(dir);
  return rec;
}

/// Tiger maze: curves for the handcrafted (ground-truth) reward, IRL-only and
/// IRL+COE at k_star, then final returns across k_sweep. Emits
/// fig4_curves.csv, fig4_sweep.csv and fig4_reward.csv.
inline RunRecord run_fig4(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  RunRecord rec;
  rec.config_hash = cfg.hash();
  const Environment env = make_experiment_env(cfg);
  CsvWriter curves(dir / "fig4_curves.csv", {"policy", "seed", "episode", "total_return", "discounted_return"});
  CsvWriter sweep(dir / "fig4_sweep.csv",
                  {"kstar", "seed", "total_return", "first_correct_rate", "explore_steps"});
  CsvWriter heat(dir / "fig4_reward.csv", {"seed", "s", "state", "raw", "rescaled"});
  const int A = env.mdp.num_actions;
  for (const std::uint64_t seed : cfg.seeds) {
    SeedStreams rng(seed);
    const auto data = stage_expert_data(cfg, env, rng.data);
    const auto irl = stage_irl(cfg, env, learner_view(data), rng.fit);
    const auto scaled = stage_rescale(cfg, irl.raw_reward);
    for (int s = 0; s < env.mdp.num_states; ++s)
      heat.row(static_cast<unsigned long long>(seed), s, env.mdp.state_names[s], irl.raw_reward[s * A],
               scaled.table[s * A]);

    const auto record_sweep = [&](const std::string& label, const EvalMetrics& m) {
      sweep.row(label, static_cast<unsigned long long>(seed), m.total_return.mean,
                m.encounters > 0 ? m.first_correct_rate.mean : std::numeric_limits<double>::quiet_NaN(),
                m.explore_steps.mean);
    };
    struct Variant {
      std::string name;
      std::vector<double> reward;
    };
    const std::vector<Variant> curve_variants{
        {"handcrafted", env.true_reward()},
        {"irl_only", stage_coe(cfg, env, scaled, std::nullopt).table},
        {"irl_coe", stage_coe(cfg, env, scaled, cfg.k_star).table}};
    for (std::size_t v = 0; v < curve_variants.size(); ++v) {
      RngStream q_rng = rng.q.split(v), eval_rng = rng.eval;
      const auto out = stage_bamdp(cfg, env, curve_variants[v].reward, q_rng, eval_rng, true);
      for (const auto& p : out.curve)
        curves.row(curve_variants[v].name, static_cast<unsigned long long>(seed), p.episode, p.total_return,
                   p.discounted_return);
      add_metrics(rec, curve_variants[v].name, seed, out.metrics);
      if (v < 2) record_sweep(curve_variants[v].name, out.metrics);
    }
    for (std::size_t i = 0; i < cfg.k_sweep.size(); ++i) {
      const double k = cfg.k_sweep[i];
      const auto reward = stage_coe(cfg, env, scaled, k);
      RngStream q_rng = rng.q.split(100 + i), eval_rng = rng.eval;
      const auto out = stage_bamdp(cfg, env, reward.table, q_rng, eval_rng, false);
      add_metrics(rec, k_label(k), seed, out.metrics);
      record_sweep(format_double(k), out.metrics);
    }
  }
  rec.write(dir);
  return rec;
}

/// Dispatches on cfg.experiment; "pipeline" runs every seed into its own
/// subdirectory.
inline RunRecord run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  if (cfg.experiment == "fig2") return run_fig2(cfg, dir);
  if (cfg.experiment == "fig3") return run_fig3(cfg, dir);
  if (cfg.experiment == "fig4") return run_fig4(cfg, dir);
  RunRecord rec;
  rec.config_hash = cfg.hash();
  for (const std::uint64_t seed : cfg.seeds) rec.append(run_pipeline(cfg, seed, dir / seed_dir_name(seed)));
  rec.write(dir);
  return rec;
}

}  // namespace big
