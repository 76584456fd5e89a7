#include <gtest/gtest.h>

#include "optprof/gridworld.hpp"

using namespace optprof;

TEST(Gridworld, RowMajorIndexing) {
  GridworldSpec spec;
  spec.width = 4;
  spec.height = 3;
  EXPECT_EQ(spec.state_of({0, 0}), 0);
  EXPECT_EQ(spec.state_of({3, 0}), 3);
  EXPECT_EQ(spec.state_of({1, 2}), 9);
  EXPECT_EQ(spec.cell_of(9), (Cell{1, 2}));
}

TEST(Gridworld, WallsKeepTheAgentInPlace) {
  GridworldSpec spec;
  spec.width = 3;
  spec.height = 2;
  EXPECT_EQ(apply_move(spec, {0, 0}, kUp), (Cell{0, 0}));
  EXPECT_EQ(apply_move(spec, {0, 0}, kLeft), (Cell{0, 0}));
  EXPECT_EQ(apply_move(spec, {0, 0}, kDown), (Cell{0, 1}));
  EXPECT_EQ(apply_move(spec, {2, 1}, kRight), (Cell{2, 1}));
}

TEST(Gridworld, SlipSpreadsMassOverAllMoves) {
  GridworldSpec spec;
  spec.width = 3;
  spec.height = 3;
  spec.slip_prob = 0.2;
  spec.start_cells = {{1, 1}};
  const auto mdp = build_gridworld(spec);
  const StateId c = spec.state_of({1, 1});
  EXPECT_NEAR(mdp.transition(c, kRight, spec.state_of({2, 1})), 0.8 + 0.05, 1e-15);
  EXPECT_NEAR(mdp.transition(c, kRight, spec.state_of({0, 1})), 0.05, 1e-15);
  EXPECT_NEAR(mdp.transition(c, kRight, spec.state_of({1, 0})), 0.05, 1e-15);
  // In a corner two of the moves bump into walls.
  const StateId corner = spec.state_of({0, 0});
  EXPECT_NEAR(mdp.transition(corner, kUp, corner), 0.8 + 0.1, 1e-15);
}

TEST(Gridworld, CorridorHasTwoAbsorbingTerminals) {
  const auto spec = envs::figure1_corridor();
  const auto mdp = build_gridworld(spec);
  EXPECT_EQ(mdp.terminals().size(), 2u);
  EXPECT_EQ(mdp.gt_reward().front(), -10.0);
  EXPECT_EQ(mdp.gt_reward().back(), 10.0);
  for (ActionId a = 0; a < 4; ++a) EXPECT_EQ(mdp.transition(0, a, 0), 1.0);
  for (std::size_t s = 1; s + 1 < mdp.gt_reward().size(); ++s) EXPECT_EQ(mdp.gt_reward()[s], 0.0);
}

TEST(Gridworld, SingleCellWithoutTerminalsRunsFullHorizon) {
  GridworldSpec spec;
  spec.start_cells = {{0, 0}};
  spec.horizon = 7;
  const auto trajs = enumerate_trajectories(build_gridworld(spec), TabularPolicy::uniform(1, 4));
  ASSERT_EQ(trajs.size(), 1u);
  EXPECT_EQ(trajs[0].traj.length(), 8u);
}

TEST(Gridworld, FeaturesAreNormalizedCoordinatesAndTerminalFlags) {
  const auto spec = envs::grid10();
  const auto f = gridworld_features(spec);
  ASSERT_EQ(f.size(), 100u);
  ASSERT_EQ(f[0].size(), 4u);
  EXPECT_EQ(f[0], (std::vector<double>{0, 0, 0, 0}));
  EXPECT_EQ(f[99], (std::vector<double>{1, 1, 1, 0}));
  EXPECT_EQ(f[static_cast<std::size_t>(spec.state_of({5, 5}))], (std::vector<double>{5.0 / 9, 5.0 / 9, 0, 1}));
}

TEST(Gridworld, MultipleStartsShareInitialMass) {
  GridworldSpec spec;
  spec.width = 3;
  spec.start_cells = {{0, 0}, {2, 0}, {0, 0}};
  const auto mdp = build_gridworld(spec);
  EXPECT_EQ(mdp.initial_dist(), (std::vector<double>{0.5, 0.0, 0.5}));
}

TEST(Gridworld, InvalidSpecsAreRejected) {
  GridworldSpec spec;
  EXPECT_THROW(build_gridworld(spec), ConfigError);  // no start
  spec.start_cells = {{0, 0}};
  spec.width = 0;
  EXPECT_THROW(build_gridworld(spec), ConfigError);
  spec.width = 2;
  spec.goal_cells = {{{1, 0}, 1.0}};
  spec.fail_cells = {{{1, 0}, -1.0}};
  EXPECT_THROW(build_gridworld(spec), ConfigError);
  spec.fail_cells = {{{3, 0}, -1.0}};
  EXPECT_THROW(build_gridworld(spec), ConfigError);
  spec.fail_cells.clear();
  spec.slip_prob = 1.5;
  EXPECT_THROW(build_gridworld(spec), ConfigError);
  spec.slip_prob = 0.0;
  spec.horizon = 0;
  EXPECT_THROW(build_gridworld(spec), ConfigError);
  EXPECT_THROW(envs::by_name("maze"), ConfigError);
  EXPECT_THROW(envs::figure1_corridor(2), ConfigError);
}
