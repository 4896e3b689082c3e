// Command-line front end for the BIG pipeline.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "big/big.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalFlags {
  std::string config;
  std::string env;
  std::uint64_t seed = 1;
  std::string seeds;
  std::string out = ".";
};

int exit_code_for(const big::Error& e) {
  switch (e.code()) {
    case big::ErrorCode::kDiverged:
    case big::ErrorCode::kNonFiniteQ:
    case big::ErrorCode::kNonFiniteLogit:
      return 2;
    default:
      return 1;
  }
}

big::KeyValueConfig load_raw(const GlobalFlags& g) {
  big::KeyValueConfig kv;
  if (!g.config.empty()) kv = big::KeyValueConfig::load(g.config);
  if (!g.env.empty()) kv.set("env", g.env);
  if (!g.seeds.empty()) kv.set("seeds", g.seeds);
  return kv;
}

big::ExperimentConfig load_experiment(const GlobalFlags& g) {
  if (g.config.empty()) throw big::Error(big::ErrorCode::kConfig, "--config is required");
  return big::ExperimentConfig::from(load_raw(g));
}

big::Environment load_env(const GlobalFlags& g) {
  const auto kv = load_raw(g);
  return big::with_stage("env", [&] { return big::make_environment(kv.get("env"), kv); });
}

void print_summary(const big::RunRecord& rec) {
  for (const auto& [group, metric] : rec.keys()) {
    if (metric != "total_return" && metric != "success_rate" && metric != "discounted_return") continue;
    const auto a = rec.aggregate(group, metric);
    std::cout << group << " " << metric << " " << big::format_double(a.mean) << " +- "
              << big::format_double(a.stderr_) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian IRL with a cost-of-exploration reward prior"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags g;
  app.add_option("--config", g.config, "key = value experiment file");
  app.add_option("--env", g.env, "environment name (overrides the config)");
  app.add_option("--seed", g.seed, "seed for single-run verbs");
  app.add_option("--seeds", g.seeds, "seed range n..m or list (overrides the config)");
  app.add_option("--out", g.out, "output directory");

  auto* validate = app.add_subcommand("validate", "check a config and its environment");

  auto* expert = app.add_subcommand("expert-data", "sample expert trajectories");

  auto* irl = app.add_subcommand("irl", "fit the MAP reward");
  std::string data_path;
  irl->add_option("--data", data_path, "expert_data.csv (default: sample from --seed)");

  auto* coe = app.add_subcommand("coe", "rescale and apply the exploration prior");
  std::string coe_in, coe_set;
  std::optional<double> kstar, rmin, rmax;
  bool no_prior = false;
  coe->add_option("--in", coe_in, "reward_table.csv")->required();
  coe->add_option("--kstar", kstar, "exploration scale k*");
  coe->add_option("--rmin", rmin);
  coe->add_option("--rmax", rmax);
  coe->add_option("--coe-set", coe_set, "s,a listing of exploration cells (default: the environment's)");
  coe->add_flag("--no-prior", no_prior, "rescale only");

  auto* bamdp = app.add_subcommand("bamdp", "train and evaluate a belief-augmented policy");
  std::string reward_path;
  bamdp->add_option("--reward", reward_path, "reward_final.csv")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a saved Q table under the true reward");
  std::string qtable_path;
  eval->add_option("--qtable", qtable_path, "qtable.csv")->required();

  auto* experiment = app.add_subcommand("experiment", "run a full figure experiment");
  std::string which;
  experiment->add_option("name", which, "fig2, fig3 or fig4")->required()->check(
      CLI::IsMember({"fig2", "fig3", "fig4", "pipeline"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const fs::path out = g.out;
    fs::create_directories(out);

    if (*validate) {
      const auto cfg = load_experiment(g);
      const auto env = big::make_experiment_env(cfg);
      big::require_valid(env.mdp);
      std::cout << "ok " << cfg.env << " hash " << cfg.hash() << " states " << env.mdp.num_states
                << " actions " << env.mdp.num_actions << " contexts " << env.mdp.num_contexts << "\n";
    } else if (*expert) {
      const auto cfg = load_experiment(g);
      const auto env = big::make_experiment_env(cfg);
      big::SeedStreams rng(g.seed);
      const auto data = big::stage_expert_data(cfg, env, rng.data);
      big::write_expert_data_csv(out / "expert_data.csv", data);
    } else if (*irl) {
      const auto cfg = load_experiment(g);
      const auto env = big::make_experiment_env(cfg);
      big::SeedStreams rng(g.seed);
      const auto data = data_path.empty() ? big::stage_expert_data(cfg, env, rng.data)
                                          : big::read_expert_data_csv(data_path);
      const auto fit = big::stage_irl(cfg, env, big::learner_view(data), rng.fit);
      big::write_omega_csv(out / "omega_map.csv", fit.fit.omega_map);
      big::write_reward_table_csv(out / "reward_table.csv", env.mdp, fit.raw_reward);
      big::write_fit_log_csv(out / "fit_log.csv", fit.fit);
    } else if (*coe) {
      const auto kv = load_raw(g);
      const auto env = load_env(g);
      const auto raw = big::read_reward_table_csv(coe_in, env.mdp, "mean");
      const double lo = rmin ? *rmin : kv.get_double_or("r_min", env.r_min);
      const double hi = rmax ? *rmax : kv.get_double_or("r_max", env.r_max);
      const auto scaled = big::with_stage("rescale", [&] { return big::rescale(raw, lo, hi); });
      big::PredictiveReward final_reward;
      if (no_prior) {
        final_reward = big::irl_only(scaled.table, env.mdp.num_states, env.mdp.num_actions);
      } else {
        big::CoeSpec spec;
        spec.cells = coe_set.empty() ? env.coe_cells : big::read_coe_set_csv(coe_set);
        spec.k_star = kstar ? *kstar : kv.get_double("k_star");
        spec.r_min = lo;
        spec.r_max = hi;
        final_reward = big::with_stage("coe", [&] {
          return big::apply_coe(scaled.table, env.mdp.num_states, env.mdp.num_actions, spec);
        });
      }
      big::write_final_reward_csv(out / "reward_final.csv", final_reward);
    } else if (*bamdp) {
      const auto cfg = load_experiment(g);
      const auto env = big::make_experiment_env(cfg);
      const auto reward = big::read_reward_table_csv(reward_path, env.mdp, "value");
      big::SeedStreams rng(g.seed);
      const auto result = big::stage_bamdp(cfg, env, reward, rng.q, rng.eval, false);
      big::write_qtable_csv(out / "qtable.csv", result.table);
      big::write_metrics_csv(out / "metrics.csv", result.metrics);
    } else if (*eval) {
      const auto cfg = load_experiment(g);
      const auto env = big::make_experiment_env(cfg);
      const auto table = big::read_qtable_csv(qtable_path, env.mdp, cfg.q);
      big::SeedStreams rng(g.seed);
      const auto m = big::with_stage("eval", [&] {
        return big::evaluate_policy(env.mdp, table.policy(), env.true_reward(), cfg.eval_episodes,
                                    cfg.eval_horizon, cfg.eval_spec(env), rng.eval);
      });
      big::write_metrics_csv(out / "metrics.csv", m);
    } else if (*experiment) {
      auto kv = load_raw(g);
      kv.set("experiment", which);
      const auto cfg = big::ExperimentConfig::from(kv);
      print_summary(big::run_experiment(cfg, out));
    }
  } catch (const big::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
