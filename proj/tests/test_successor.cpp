#include <gtest/gtest.h>

#include <cmath>

#include "big/big.hpp"
#include "oracles.hpp"

using namespace big;

namespace {

// Expert of the three-state MDP in context 0 takes a0 to s1; in context 1 a1.
std::vector<double> three_state_expert_policy(const ContextualMdp& m, int theta) {
  std::vector<int> act(m.num_states, 0);
  act[0] = theta;
  return policy_table(m, act);
}

}  // namespace

TEST(Successor, ExpertFixedPointOnThreeStateMdp) {
  const auto m = build_three_state(0.9).mdp;
  auto table = make_successor_table(m, 0.5, 1);
  for (int it = 0; it < 200; ++it)
    for (int theta = 0; theta < 2; ++theta) expert_td_update(table, m, 0, theta, 1, -1, theta);
  const double g = m.gamma;
  for (int theta = 0; theta < 2; ++theta) {
    const auto row = table.row(0, theta, theta);
    EXPECT_NEAR(row[0], 1.0, 1e-12);
    EXPECT_NEAR(row[1], g / (1.0 - g), 1e-12);
    EXPECT_NEAR(row[2], 0.0, 1e-12);
  }
}

TEST(Successor, AbsorbingTerminalRowIsGeometric) {
  const auto m = build_three_state(0.9).mdp;
  const auto table = make_successor_table(m);
  for (int a = 0; a < 2; ++a) EXPECT_NEAR(table.row(2, a, 0)[2], 10.0, 1e-12);
  auto zero = m;
  zero.terminal_mode = TerminalMode::kZeroContinuation;
  EXPECT_EQ(make_successor_table(zero).row(2, 0, 0)[2], 0.0);
}

TEST(Successor, ZeroStepLeavesTableUnchanged) {
  const auto m = build_three_state(0.9).mdp;
  auto table = make_successor_table(m, 0.0, 1);
  const auto before = table.psi;
  expert_td_update(table, m, 0, 0, 1, -1, 0);
  simulator_td_update(table, m, 0, 1, 2, 0, std::vector<double>{0, 1, -1});
  EXPECT_EQ(table.psi, before);
}

TEST(Successor, SimulatorUpdateConvergesToOptimalPolicySf) {
  const auto m = build_three_state(0.9).mdp;
  const std::vector<double> omega{0.0, 1.0, -1.0};
  auto table = make_successor_table(m, 0.5, 1);
  long long step = 0;
  for (int it = 0; it < 300; ++it)
    for (int theta = 0; theta < 2; ++theta)
      for (int a = 0; a < 2; ++a) {
        const int next = m.prob(0, a, theta, 1) == 1.0 ? 1 : 2;
        simulator_td_update(table, m, 0, a, next, theta, omega);
        maybe_sync_target(table, ++step);
      }
  for (int theta = 0; theta < 2; ++theta) {
    const auto exact = oracle::dense_sf(m, three_state_expert_policy(m, theta), theta);
    EXPECT_LT(max_abs_difference(table, exact, theta), 1e-10);
  }
}

TEST(Successor, GreedyTieGoesToLowestAction) {
  const auto m = build_three_state(0.9).mdp;
  const auto table = make_successor_table(m);
  EXPECT_EQ(greedy_sf_action(table, 0, 0, std::vector<double>{1, 1, 1}), 0);
}

// Syncing after every step makes the target equal the online table at the
// time of each update, so the result matches TD bootstrapped from itself.
TEST(Successor, SyncEveryStepIsPlainTd) {
  RngStream rng(15);
  const auto m = oracle::random_cmdp(rng, 5, 2, 1, 0.9);
  std::vector<double> omega(5);
  for (auto& w : omega) w = rng.normal();
  auto table = make_successor_table(m, 0.3, 1);
  auto plain = table;
  for (long long step = 1; step <= 500; ++step) {
    const int s = static_cast<int>(rng.uniform_int(5)), a = static_cast<int>(rng.uniform_int(2));
    const int next = static_cast<int>(rng.uniform_int(5));
    simulator_td_update(table, m, s, a, next, 0, omega);
    EXPECT_TRUE(maybe_sync_target(table, step));
    if (plain.pinned[s]) continue;
    const int b = greedy_sf_action(plain, next, 0, omega);
    const std::vector<double> boot(plain.row(next, b, 0).begin(), plain.row(next, b, 0).end());
    const auto nu = m.feature(s, a);
    auto r = plain.row(s, a, 0);
    for (int k = 0; k < 5; ++k) r[k] += 0.3 * (nu[k] + m.gamma * boot[k] - r[k]);
  }
  for (std::size_t i = 0; i < plain.psi.size(); ++i) EXPECT_NEAR(table.psi[i], plain.psi[i], 1e-12);
}

TEST(Successor, UnsyncedTargetStaysPut) {
  const auto m = build_three_state(0.9).mdp;
  auto table = make_successor_table(m, 0.5, 10);
  const auto target = table.psi_target;
  for (long long step = 1; step < 10; ++step) {
    simulator_td_update(table, m, 0, 0, 1, 0, std::vector<double>{0, 1, -1});
    maybe_sync_target(table, step);
  }
  EXPECT_EQ(table.psi_target, target);
  EXPECT_NE(table.psi, target);
}

TEST(Successor, DenseSolveMatchesAnalyticValues) {
  const auto m = build_three_state(0.9).mdp;
  for (int theta = 0; theta < 2; ++theta) {
    const auto pi = three_state_expert_policy(m, theta);
    const auto psi = solve_sf_exact(m, pi, theta);
    const auto oracle_psi = oracle::dense_sf(m, pi, theta);
    for (std::size_t i = 0; i < psi.size(); ++i) EXPECT_NEAR(psi[i], oracle_psi[i], 1e-12);
    EXPECT_NEAR(psi[(0 * 2 + theta) * 3 + 1], 9.0, 1e-12);
  }
}

TEST(Successor, UniformPolicyRowsSumToEffectiveHorizon) {
  RngStream rng(4);
  const auto m = oracle::random_cmdp(rng, 6, 3, 2, 0.8);
  for (int theta = 0; theta < 2; ++theta) {
    const auto psi = solve_sf_exact(m, uniform_policy_table(m), theta);
    for (int i = 0; i < m.num_cells(); ++i) {
      double total = 0.0;
      for (int k = 0; k < 6; ++k) {
        EXPECT_GE(psi[i * 6 + k], -1e-12);
        total += psi[i * 6 + k];
      }
      EXPECT_NEAR(total, 5.0, 1e-9);
    }
  }
}

TEST(Successor, ExpectedTdConvergesToDenseSolve) {
  RngStream rng(6);
  const auto m = oracle::random_cmdp(rng, 6, 2, 2, 0.9);
  const auto pi = oracle::random_policy(rng, 6, 2);
  auto table = make_successor_table(m, 1.0, 1);
  for (int it = 0; it < 400; ++it)
    for (int theta = 0; theta < 2; ++theta) expected_td_sweep(table, m, pi, theta);
  for (int theta = 0; theta < 2; ++theta) {
    EXPECT_LT(max_abs_difference(table, oracle::dense_sf(m, pi, theta), theta), 1e-6);
    EXPECT_LT(bellman_residual(table, m, pi, theta), 1e-6);
  }
}

TEST(Successor, QIsLinearInOmegaAndSatisfiesBellman) {
  RngStream rng(9);
  const auto m = oracle::random_cmdp(rng, 5, 2, 1, 0.9);
  const auto pi = oracle::random_policy(rng, 5, 2);
  const auto table = exact_successor_table(m, {pi});
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<double> omega(5);
    for (auto& w : omega) w = rng.normal();
    const auto reward = reward_table(m, omega);
    const auto q = evaluate_policy_exact(m, 0, pi, reward).q;
    for (int s = 0; s < 5; ++s)
      for (int a = 0; a < 2; ++a) EXPECT_NEAR(table.q(s, a, 0, omega), q[s * 2 + a], 1e-9);
  }
}

TEST(Successor, CsvRoundTrip) {
  RngStream rng(2);
  const auto m = oracle::random_cmdp(rng, 4, 2, 2, 0.9);
  auto table = exact_successor_table(m, {uniform_policy_table(m), uniform_policy_table(m)});
  const auto path = std::filesystem::temp_directory_path() / "big_sf.csv";
  write_successor_csv(path, table);
  auto copy = make_successor_table(m);
  read_successor_csv(path, copy);
  EXPECT_EQ(copy.psi, table.psi);
}

TEST(Successor, IndexChecks) {
  const auto m = build_three_state(0.9).mdp;
  auto table = make_successor_table(m);
  try {
    expert_td_update(table, m, 5, 0, 1, 0, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIndexOutOfRange);
  }
  try {
    simulator_td_update(table, m, 0, 0, 1, 0, std::vector<double>{1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}
