#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "big/cmdp.hpp"
#include "big/error.hpp"
#include "big/io.hpp"
#include "big/planning.hpp"
#include "big/rng.hpp"

namespace big {

/// A contextual MDP bundled with its ground-truth reward and the bookkeeping
/// the experiments need (rollout length, exploration cells, reward bounds).
struct Environment {
  std::string name;
  ContextualMdp mdp;
  std::vector<double> true_omega;
  int horizon = 50;
  /// Action counted as exploration in the metrics; -1 if none.
  int listen_action = -1;
  std::vector<int> success_states;
  std::vector<int> failure_states;
  /// Default cost-of-exploration cells (s, a).
  std::vector<std::pair<int, int>> coe_cells;
  double r_min = -1.0;
  double r_max = 1.0;

  std::vector<double> true_reward() const { return reward_table(mdp, true_omega); }
};

// ---------------------------------------------------------------------------
// Tiger-Treasure

struct TigerTreasureSpec {
  double listen_success = 0.85;
  double gamma = 0.99;
  int horizon = 50;
  static constexpr double kGold = 10.0;
  static constexpr double kTiger = -100.0;
  static constexpr double kListen = -1.0;
};

namespace tiger_treasure {
enum State : int { kStart = 0, kHeard1, kHeard2, kTiger, kGold, kEnd };
enum Action : int { kOpen1 = 0, kOpen2, kListen };
inline constexpr int kNumStates = 6;
inline constexpr int kNumActions = 3;
}  // namespace tiger_treasure

/// Context 0: tiger behind door 1. Context 1: tiger behind door 2.
inline Environment build_tiger_treasure(const TigerTreasureSpec& spec = {}) {
  using namespace tiger_treasure;
  if (!(spec.listen_success > 0.5 && spec.listen_success <= 1.0))
    throw Error(ErrorCode::kInvalidSpec, "listen_success must lie in (0.5, 1]");
  Environment env;
  env.name = "tiger_treasure";
  ContextualMdp& m = env.mdp;
  m = ContextualMdp(kNumStates, kNumActions, 2, kNumStates);
  m.gamma = spec.gamma;
  m.initial_dist[kStart] = 1.0;
  m.terminal[kEnd] = 1;
  m.set_one_hot_state_features();
  m.state_names = {"S0", "T1", "T2", "Tiger", "Gold", "ST"};
  m.action_names = {"open1", "open2", "listen"};
  const double p = spec.listen_success;
  for (int theta = 0; theta < 2; ++theta) {
    const int tiger_door = theta;  // kOpen1 == 0, kOpen2 == 1
    for (int s : {kStart, kHeard1, kHeard2}) {
      for (int door : {kOpen1, kOpen2}) m.set_prob(s, door, theta, door == tiger_door ? kTiger : kGold, 1.0);
      const int right = theta == 0 ? kHeard1 : kHeard2;
      const int wrong = theta == 0 ? kHeard2 : kHeard1;
      m.set_prob(s, kListen, theta, right, p);
      if (p < 1.0) m.set_prob(s, kListen, theta, wrong, 1.0 - p);
    }
    for (int a = 0; a < kNumActions; ++a) {
      m.set_prob(kTiger, a, theta, kEnd, 1.0);
      m.set_prob(kGold, a, theta, kEnd, 1.0);
      m.set_prob(kEnd, a, theta, kEnd, 1.0);
    }
  }
  env.true_omega = {0.0, spec.kListen, spec.kListen, spec.kTiger, spec.kGold, 0.0};
  env.horizon = spec.horizon;
  env.listen_action = kListen;
  env.success_states = {kGold};
  env.failure_states = {kTiger};
  for (int s : {kHeard1, kHeard2})
    for (int a = 0; a < kNumActions; ++a) env.coe_cells.emplace_back(s, a);
  env.r_min = -100.0;
  env.r_max = 10.0;
  require_valid(m);
  return env;
}

// ---------------------------------------------------------------------------
// Latent chain
//
// s0 --a0--> s1, s0 --a1--> s2 in both contexts.
// Context 0 blocks s1 (s1 -> s0); context 1 opens it (s1 -> s3).
// s2 -> s3 always. s3 -> s4 under context 0 and s3 -> s5 under context 1,
// then s4, s5 -> s0. Reward +2 in s3, -1 in s2.

struct LatentChainSpec {
  double p0 = 0.9;
  double gamma = 0.99;
  int horizon = 100;
};

inline Environment build_latent_chain(const LatentChainSpec& spec = {}) {
  if (!(spec.p0 > 0.0 && spec.p0 < 1.0)) throw Error(ErrorCode::kInvalidSpec, "p0 must lie in (0, 1)");
  Environment env;
  env.name = "latent_chain";
  ContextualMdp& m = env.mdp;
  m = ContextualMdp(6, 2, 2, 6);
  m.gamma = spec.gamma;
  m.context_prior = {spec.p0, 1.0 - spec.p0};
  m.initial_dist[0] = 1.0;
  m.set_one_hot_state_features();
  for (int theta = 0; theta < 2; ++theta)
    for (int a = 0; a < 2; ++a) {
      m.set_prob(0, a, theta, a == 0 ? 1 : 2, 1.0);
      m.set_prob(1, a, theta, theta == 0 ? 0 : 3, 1.0);
      m.set_prob(2, a, theta, 3, 1.0);
      m.set_prob(3, a, theta, theta == 0 ? 4 : 5, 1.0);
      m.set_prob(4, a, theta, 0, 1.0);
      m.set_prob(5, a, theta, 0, 1.0);
    }
  env.true_omega = {0.0, 0.0, -1.0, 2.0, 0.0, 0.0};
  env.horizon = spec.horizon;
  env.r_min = -1.0;
  env.r_max = 2.0;
  require_valid(m);
  return env;
}

// ---------------------------------------------------------------------------
// Tiger maze
//
// Grid cells (x, y) with y = 0 the top row. Each cell exists in three
// indicator layers: none, "gold behind the left door" and "gold behind the
// right door". Doors sit in the top wall above (door_x[i], 0) and are entered
// by moving up. Context 0 puts the gold behind the left door.

struct TigerMazeSpec {
  int width = 5;
  int height = 5;
  int left_door_x = 1;
  int right_door_x = 3;
  int respawn_x = 2;
  int respawn_y = 4;
  double listen_success = 1.0;
  double gamma = 0.99;
  int horizon = 40;
};

namespace maze {
enum Action : int { kUp = 0, kDown, kLeft, kRight, kListen, kNumActions };
}

struct MazeLayout {
  TigerMazeSpec spec;

  int num_cells() const { return spec.width * spec.height; }
  int cell_state(int x, int y, int indicator) const {
    return (indicator * spec.height + y) * spec.width + x;
  }
  int tiger_state() const { return 3 * num_cells(); }
  int gold_state() const { return 3 * num_cells() + 1; }
  int num_states() const { return 3 * num_cells() + 2; }
  bool is_cell(int s) const { return s < 3 * num_cells(); }
  int x_of(int s) const { return s % spec.width; }
  int y_of(int s) const { return (s / spec.width) % spec.height; }
  int indicator_of(int s) const { return s / num_cells(); }
  int respawn_state() const { return cell_state(spec.respawn_x, spec.respawn_y, 0); }

  /// Coordinate encoding one-hot(X) + one-hot(Y) + one-hot(indicator) of a
  /// grid state, or the zero vector plus a tail flag for Tiger / Gold.
  std::vector<double> encoding(int s) const {
    std::vector<double> v(spec.width + spec.height + 3 + 2, 0.0);
    if (is_cell(s)) {
      v[x_of(s)] = 1.0;
      v[spec.width + y_of(s)] = 1.0;
      v[spec.width + spec.height + indicator_of(s)] = 1.0;
    } else {
      v[spec.width + spec.height + 3 + (s == gold_state())] = 1.0;
    }
    return v;
  }
};

inline Environment build_tiger_maze(const TigerMazeSpec& spec = {}) {
  using namespace maze;
  const auto inside = [&](int x, int y) { return x >= 0 && x < spec.width && y >= 0 && y < spec.height; };
  if (spec.width < 1 || spec.height < 1 || !inside(spec.left_door_x, 0) ||
      !inside(spec.right_door_x, 0) || spec.left_door_x == spec.right_door_x ||
      !inside(spec.respawn_x, spec.respawn_y))
    throw Error(ErrorCode::kInvalidSpec, "maze doors and respawn cell must lie inside the grid");
  if (!(spec.listen_success > 0.5 && spec.listen_success <= 1.0))
    throw Error(ErrorCode::kInvalidSpec, "listen_success must lie in (0.5, 1]");
  const MazeLayout layout{spec};
  Environment env;
  env.name = "tiger_maze";
  ContextualMdp& m = env.mdp;
  m = ContextualMdp(layout.num_states(), kNumActions, 2, layout.num_states());
  m.gamma = spec.gamma;
  m.initial_dist[layout.respawn_state()] = 1.0;
  m.set_one_hot_state_features();
  m.action_names = {"up", "down", "left", "right", "listen"};
  m.state_names.resize(layout.num_states());
  for (int s = 0; s < 3 * layout.num_cells(); ++s)
    m.state_names[s] = "x" + std::to_string(layout.x_of(s)) + "y" + std::to_string(layout.y_of(s)) + "i" +
                       std::to_string(layout.indicator_of(s));
  m.state_names[layout.tiger_state()] = "Tiger";
  m.state_names[layout.gold_state()] = "Gold";

  const double p = spec.listen_success;
  for (int theta = 0; theta < 2; ++theta) {
    const int gold_door_x = theta == 0 ? spec.left_door_x : spec.right_door_x;
    for (int ind = 0; ind < 3; ++ind)
      for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
          const int s = layout.cell_state(x, y, ind);
          const int dx[] = {0, 0, -1, 1}, dy[] = {-1, 1, 0, 0};
          for (int a = 0; a < 4; ++a) {
            int next;
            if (a == kUp && y == 0 && (x == spec.left_door_x || x == spec.right_door_x))
              next = x == gold_door_x ? layout.gold_state() : layout.tiger_state();
            else if (inside(x + dx[a], y + dy[a]))
              next = layout.cell_state(x + dx[a], y + dy[a], ind);
            else
              next = s;
            m.set_prob(s, a, theta, next, 1.0);
          }
          m.set_prob(s, kListen, theta, layout.cell_state(x, y, 1 + theta), p);
          if (p < 1.0) m.set_prob(s, kListen, theta, layout.cell_state(x, y, 2 - theta), 1.0 - p);
        }
    for (int a = 0; a < kNumActions; ++a) {
      m.set_prob(layout.tiger_state(), a, theta, layout.respawn_state(), 1.0);
      m.set_prob(layout.gold_state(), a, theta, layout.respawn_state(), 1.0);
    }
  }
  env.true_omega.assign(layout.num_states(), 0.0);
  env.true_omega[layout.gold_state()] = 1.0;
  env.true_omega[layout.tiger_state()] = -1.0;
  env.horizon = spec.horizon;
  env.listen_action = kListen;
  env.success_states = {layout.gold_state()};
  env.failure_states = {layout.tiger_state()};
  for (int ind = 1; ind < 3; ++ind)
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x)
        for (int a = 0; a < kNumActions; ++a) env.coe_cells.emplace_back(layout.cell_state(x, y, ind), a);
  env.r_min = -0.05;
  env.r_max = 1.0;
  require_valid(m);
  return env;
}

/// Breadth-first distance in moves from `from` to the first step that enters
/// `target` (Tiger or Gold) in context `theta`, ignoring listening.
inline int maze_shortest_path(const Environment& env, int from, int target, int theta) {
  const ContextualMdp& m = env.mdp;
  std::vector<int> dist(m.num_states, -1);
  std::deque<int> queue{from};
  dist[from] = 0;
  while (!queue.empty()) {
    const int s = queue.front();
    queue.pop_front();
    if (s == target) return dist[s];
    for (int a = 0; a < maze::kListen; ++a)
      for (int n = 0; n < m.num_states; ++n)
        if (m.prob(s, a, theta, n) > 0.0 && dist[n] < 0) {
          dist[n] = dist[s] + 1;
          queue.push_back(n);
        }
  }
  return -1;
}

// ---------------------------------------------------------------------------
// Two small analytic examples.

/// Three states, two actions. Context 0: a0 -> s1, a1 -> s2; context 1
/// reverses them. s1 and s2 are absorbing terminals. Reward (0, 1, -1).
inline Environment build_three_state(double gamma = 0.99) {
  Environment env;
  env.name = "three_state";
  ContextualMdp& m = env.mdp;
  m = ContextualMdp(3, 2, 2, 3);
  m.gamma = gamma;
  m.initial_dist[0] = 1.0;
  m.terminal[1] = m.terminal[2] = 1;
  m.set_one_hot_state_features();
  for (int theta = 0; theta < 2; ++theta)
    for (int a = 0; a < 2; ++a) {
      m.set_prob(0, a, theta, (a == theta) ? 1 : 2, 1.0);
      m.set_prob(1, a, theta, 1, 1.0);
      m.set_prob(2, a, theta, 2, 1.0);
    }
  env.true_omega = {0.0, 1.0, -1.0};
  env.horizon = 2;
  env.r_min = -1.0;
  env.r_max = 1.0;
  require_valid(m);
  return env;
}

/// Four states, actions left / right from s0 to s1 / s2. Context 0 (prior
/// eta): s1 -> s3, s2 -> s3, s3 -> s0. Context 1: s1 -> s0, s2 -> s3 and s3
/// absorbing. Rewards favour s1 over s2, and s3 over both.
inline Environment build_counterexample(double eta = 0.4, double gamma = 0.9) {
  if (!(eta > 0.0 && eta < 1.0)) throw Error(ErrorCode::kInvalidSpec, "eta must lie in (0, 1)");
  Environment env;
  env.name = "counterexample";
  ContextualMdp& m = env.mdp;
  m = ContextualMdp(4, 2, 2, 4);
  m.gamma = gamma;
  m.context_prior = {eta, 1.0 - eta};
  m.initial_dist[0] = 1.0;
  m.set_one_hot_state_features();
  for (int a = 0; a < 2; ++a) {
    for (int theta = 0; theta < 2; ++theta) {
      m.set_prob(0, a, theta, a == 0 ? 1 : 2, 1.0);
      m.set_prob(2, a, theta, 3, 1.0);
    }
    m.set_prob(1, a, 0, 3, 1.0);
    m.set_prob(3, a, 0, 0, 1.0);
    m.set_prob(1, a, 1, 0, 1.0);
    m.set_prob(3, a, 1, 3, 1.0);
  }
  env.true_omega = {0.0, 1.0, -1.0, 2.0};
  env.horizon = 12;
  env.r_min = -1.0;
  env.r_max = 2.0;
  require_valid(m);
  return env;
}

// ---------------------------------------------------------------------------
// Experts and demonstrations

/// Optimal deterministic policy of the theta-slice under the true reward.
inline std::vector<int> expert_policy(const Environment& env, int theta) {
  env.mdp.check_context(theta);
  return value_iteration(env.mdp, theta, env.true_reward()).greedy;
}

/// The expert's stochastic policy: uniform over optimal actions, so that
/// actions with identical consequences carry no preference.
inline std::vector<double> expert_policy_table(const Environment& env, int theta) {
  env.mdp.check_context(theta);
  const auto vi = value_iteration(env.mdp, theta, env.true_reward(), 1e-12);
  return uniform_over_optimal(vi.q, env.mdp.num_states, env.mdp.num_actions);
}

struct LabeledTrajectory {
  Trajectory trajectory;
  /// Hidden context; for evaluation only.
  int theta = 0;
};

inline std::vector<LabeledTrajectory> generate_expert_dataset(const Environment& env, int n,
                                                              int horizon, RngStream& rng) {
  if (n < 1) throw Error(ErrorCode::kInvalidSpec, "need at least one trajectory");
  std::vector<Policy> experts;
  for (int theta = 0; theta < env.mdp.num_contexts; ++theta)
    experts.push_back(tabular_policy(expert_policy_table(env, theta), env.mdp.num_actions));
  std::vector<LabeledTrajectory> data;
  data.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int theta = rng.categorical(env.mdp.context_prior);
    data.push_back({sample_rollout(env.mdp, theta, experts[theta], horizon, rng), theta});
  }
  return data;
}

/// What a learner is allowed to see: trajectories without their contexts.
inline std::vector<Trajectory> learner_view(const std::vector<LabeledTrajectory>& data) {
  std::vector<Trajectory> out;
  out.reserve(data.size());
  for (const auto& d : data) out.push_back(d.trajectory);
  return out;
}

// ---------------------------------------------------------------------------
// Registry

inline const std::vector<std::string>& environment_names() {
  static const std::vector<std::string> names = {"tiger_treasure", "latent_chain", "tiger_maze",
                                                 "three_state", "counterexample"};
  return names;
}

/// Builds an environment by name, reading optional overrides from `config`.
inline Environment make_environment(const std::string& name, const KeyValueConfig& config = {}) {
  if (name == "tiger_treasure") {
    TigerTreasureSpec spec;
    spec.listen_success = config.get_double_or("listen_success", spec.listen_success);
    spec.gamma = config.get_double_or("gamma", spec.gamma);
    spec.horizon = static_cast<int>(config.get_int_or("horizon", spec.horizon));
    return build_tiger_treasure(spec);
  }
  if (name == "latent_chain") {
    LatentChainSpec spec;
    spec.p0 = config.get_double_or("p0", spec.p0);
    spec.gamma = config.get_double_or("gamma", spec.gamma);
    spec.horizon = static_cast<int>(config.get_int_or("horizon", spec.horizon));
    return build_latent_chain(spec);
  }
  if (name == "tiger_maze") {
    TigerMazeSpec spec;
    spec.width = static_cast<int>(config.get_int_or("maze_width", spec.width));
    spec.height = static_cast<int>(config.get_int_or("maze_height", spec.height));
    spec.left_door_x = static_cast<int>(config.get_int_or("left_door_x", spec.left_door_x));
    spec.right_door_x = static_cast<int>(config.get_int_or("right_door_x", spec.right_door_x));
    spec.respawn_x = static_cast<int>(config.get_int_or("respawn_x", spec.respawn_x));
    spec.respawn_y = static_cast<int>(config.get_int_or("respawn_y", spec.respawn_y));
    spec.listen_success = config.get_double_or("listen_success", spec.listen_success);
    spec.gamma = config.get_double_or("gamma", spec.gamma);
    spec.horizon = static_cast<int>(config.get_int_or("horizon", spec.horizon));
    return build_tiger_maze(spec);
  }
  if (name == "three_state") return build_three_state(config.get_double_or("gamma", 0.99));
  if (name == "counterexample")
    return build_counterexample(config.get_double_or("eta", 0.4), config.get_double_or("gamma", 0.9));
  throw Error(ErrorCode::kConfig, "unknown environment '" + name + "'");
}

}  // namespace big
