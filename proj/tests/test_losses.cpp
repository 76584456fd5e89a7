#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "optprof/losses.hpp"
#include "oracles.hpp"

using namespace optprof;

namespace {

// Three single-state "trajectories", so suffix returns equal the rewards.
AugmentedDataset singletons(int n) {
  std::vector<Trajectory> d;
  for (StateId s = 0; s < n; ++s) d.push_back({{s}, {}});
  return augment(d);
}

}  // namespace

TEST(Softplus, StableAtExtremes) {
  EXPECT_DOUBLE_EQ(softplus(0.0), std::log(2.0));
  EXPECT_NEAR(softplus(-40.0), std::exp(-40.0), 1e-30);
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
  EXPECT_NEAR(sigmoid(0.0), 0.5, 0.0);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
}

TEST(PairwiseLoss, HandValues) {
  const auto aug = singletons(2);
  const std::vector<std::pair<std::size_t, std::size_t>> pair{{0, 1}};
  const std::vector<std::pair<std::size_t, std::size_t>> three{{0, 1}, {0, 1}, {1, 0}};
  EXPECT_DOUBLE_EQ(pw_loss(RewardModel::tabular_from({1.0, 1.0}), aug, three, 0.9), 3.0 * std::log(2.0));
  EXPECT_LT(pw_loss(RewardModel::tabular_from({0.0, 20.0}), aug, pair, 0.9), 1e-8);
  EXPECT_NEAR(pw_loss(RewardModel::tabular_from({1.0, 0.0}), aug, pair, 0.9), 1.3132616875182228, 1e-12);
}

TEST(FixedPointLoss, EuclideanNormOfResiduals) {
  const auto aug = singletons(2);
  const std::vector<FixedPoint> fixed{{0, 0.0}, {1, 0.0}};
  EXPECT_DOUBLE_EQ(fix_loss(RewardModel::tabular_from({3.0, -4.0}), aug, fixed, 0.5), 5.0);
  EXPECT_EQ(fix_loss(RewardModel::tabular_from({3.0, -4.0}), aug, std::vector<FixedPoint>{{0, 3.0}}, 0.5), 0.0);
}

TEST(Objective, ValidationNeedsAnActiveTerm) {
  SupervisionSets none, some;
  some.pairs.push_back({0, 1});
  EXPECT_NO_THROW(validate_objective({1.0, 0.0, 0.0}, none));
  EXPECT_NO_THROW(validate_objective({0.0, 1.0, 0.0}, some));
  EXPECT_THROW(validate_objective({0.0, 1.0, 1.0}, none), ConfigError);
  EXPECT_THROW(validate_objective({0.0, 0.0, 0.0}, some), ConfigError);
  EXPECT_THROW(validate_objective({-1.0, 1.0, 1.0}, some), ConfigError);
}

TEST(Objective, SupervisionIndicesAreChecked) {
  SupervisionSets s;
  s.pairs.push_back({0, 5});
  EXPECT_THROW(s.validate(5), ConfigError);
  s.pairs = {{2, 2}};
  EXPECT_THROW(s.validate(5), ConfigError);
  s.pairs = {{1, 2}};
  s.fixed.push_back({1, NAN});
  EXPECT_THROW(s.validate(5), ConfigError);
}

TEST(Objective, GradientPushesPairsApart) {
  const auto aug = singletons(2);
  SupervisionSets sup;
  sup.pairs.push_back({0, 1});
  const auto m = RewardModel::tabular_from({0.0, 0.0});
  const auto r = total_loss_and_grad_frozen(m, aug, {}, {}, sup, {0.0, 1.0, 0.0}, 0.9, 2.0);
  EXPECT_GT(r.grad[0], 0.0);  // descending lowers the dispreferred entry
  EXPECT_LT(r.grad[1], 0.0);
  EXPECT_DOUBLE_EQ(r.grad[0], 0.5);
}

TEST(Objective, GradientMatchesFiniteDifferencesOnSuffixes) {
  Rng rng = make_rng(88);
  for (int k = 0; k < 10; ++k) {
    const int n_states = 6;
    std::vector<Trajectory> data;
    for (int t = 0; t < 4; ++t) {
      Trajectory tr;
      const std::size_t len = 1 + uniform_index(rng, 5);
      for (std::size_t i = 0; i < len; ++i) tr.states.push_back(static_cast<StateId>(uniform_index(rng, n_states)));
      data.push_back(tr);
    }
    const auto aug = augment(data);
    SupervisionSets sup;
    sup.pairs = {{0, aug.size() - 1}, {1, 2}};
    sup.fixed = {{0, 1.5}, {aug.size() - 1, -0.5}};
    std::vector<std::size_t> batch;
    std::vector<double> targets;
    for (std::size_t j = 0; j < aug.size(); ++j) {
      batch.push_back(j);
      targets.push_back(3.0 * standard_normal(rng));
    }
    const double p = k % 2 == 0 ? 2.0 : 3.0;
    const double gamma = 0.8;
    const LossWeights w{0.7, 1.3, 2.0};
    RewardModel model = RewardModel::tabular(n_states, static_cast<std::uint64_t>(k));
    if (k >= 5) {
      std::vector<std::vector<double>> f(n_states, std::vector<double>(2));
      for (auto& row : f)
        for (double& x : row) x = 2.0 * uniform01(rng) - 1.0;
      model = RewardModel::mlp(f, 4, static_cast<std::uint64_t>(k));
    }
    const auto r = total_loss_and_grad_frozen(model, aug, batch, targets, sup, w, gamma, p);
    const auto f = [&](const std::vector<double>& theta) {
      RewardModel copy = model;
      copy.params() = theta;
      return total_loss_and_grad_frozen(copy, aug, batch, targets, sup, w, gamma, p).l_tot;
    };
    const auto fd = oracle::central_differences(f, model.params(), 1e-5);
    EXPECT_LT(oracle::max_relative_error(r.grad, fd, 1e-3), 1e-5) << "instance " << k;
    EXPECT_NEAR(r.l_tot, w.c_ot * r.l_ot + w.c_pw * r.l_pw + w.c_fix * r.l_fix, 1e-12);
  }
}

TEST(Objective, FrozenTransportTermHandValue) {
  const auto aug = singletons(2);
  const std::vector<std::size_t> batch{0, 1};
  const std::vector<double> targets{0.0, 0.0};
  const auto t = ot_term_frozen(std::vector<double>{3.0, 4.0}, aug, batch, targets, 0.9, 2.0);
  EXPECT_DOUBLE_EQ(t.value, 5.0);
  EXPECT_THROW(ot_term_frozen(std::vector<double>{3.0, 4.0}, aug, batch, std::vector<double>{0.0}, 0.9, 2.0),
               ConfigError);
}
