#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <vector>

#include "optprof/io.hpp"
#include "optprof/run_config.hpp"

using namespace optprof;
using io::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("optprof_io_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Io, GridworldAndMdpRoundTrip) {
  auto spec = envs::grid10(0.1);
  spec.start_cells.push_back({3, 4});
  const json j = io::to_json(spec);
  EXPECT_EQ(io::to_json(io::gridworld_from_json(j)), j);
  const auto mdp = build_gridworld(envs::two_corridor());
  const json m = io::to_json(mdp);
  const auto back = io::mdp_from_json(m);
  EXPECT_EQ(io::to_json(back), m);
  EXPECT_EQ(back.gt_reward(), mdp.gt_reward());
  EXPECT_EQ(back.horizon(), mdp.horizon());
}

TEST(Io, ProfileJsonAndCsvRoundTrip) {
  const OptimalityProfile p({{-1.25, 0.125}, {0.1, 0.375}, {7.0, 0.5}});
  const auto back = io::profile_from_json(io::to_json(p));
  EXPECT_EQ(back.atoms().size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.atoms()[i].location, p.atoms()[i].location);
  std::stringstream ss;
  io::write_profile_csv(ss, p);
  const auto csv = io::read_profile_csv(ss);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(csv.atoms()[i].location, p.atoms()[i].location);
    EXPECT_EQ(csv.atoms()[i].weight, p.atoms()[i].weight);
  }
}

TEST(Io, ProfileCsvErrors) {
  std::istringstream empty("");
  EXPECT_THROW(io::read_profile_csv(empty), IoError);
  std::istringstream header_only("location,weight\n");
  EXPECT_THROW(io::read_profile_csv(header_only), IoError);
  std::istringstream junk("location,weight\n1.0,abc\n");
  EXPECT_THROW(io::read_profile_csv(junk), IoError);
  std::istringstream no_comma("location,weight\n1.0\n");
  EXPECT_THROW(io::read_profile_csv(no_comma), IoError);
  std::istringstream crlf("location,weight\r\n2,1\r\n\r\n");
  EXPECT_EQ(io::read_profile_csv(crlf).atoms()[0].location, 2.0);
}

TEST(Io, TrajectoriesRoundTripThroughJsonl) {
  const std::vector<Trajectory> t{{{0, 1, 2}, {3, 3}}, {{5}, {}}};
  std::stringstream ss;
  io::write_jsonl(ss, t);
  EXPECT_EQ(io::read_jsonl(ss), t);
  std::istringstream bad("{\"states\":[0,1],\"actions\":[]}\n");
  EXPECT_THROW(io::read_jsonl(bad), IoError);
  std::istringstream broken("{\"states\":[0\n");
  EXPECT_THROW(io::read_jsonl(broken), IoError);
}

TEST(Io, SupervisionRoundTrip) {
  SupervisionSets s;
  s.pairs = {{0, 3}, {2, 1}};
  s.fixed = {{4, -2.5}};
  const auto back = io::supervision_from_json(io::to_json(s));
  EXPECT_EQ(back.pairs, s.pairs);
  ASSERT_EQ(back.fixed.size(), 1u);
  EXPECT_EQ(back.fixed[0].index, 4u);
  EXPECT_EQ(back.fixed[0].label, -2.5);
  json j = io::to_json(s);
  j["pairs"] = json::array({json::array({-1, 2})});
  EXPECT_THROW(io::supervision_from_json(j), IoError);
}

TEST(Io, ModelAndCheckpointRoundTripBitExactly) {
  auto m = RewardModel::mlp({{0.25, -1.0}, {1.0 / 3.0, 2.0}}, 3, 8);
  m.set_standardization({0.1, -0.7});
  const auto back = io::model_from_json(io::to_json(m));
  EXPECT_EQ(back.params(), m.params());
  EXPECT_EQ(back.features(), m.features());
  EXPECT_EQ(back.standardization().shift, -0.7);

  TrainState st{m, std::vector<double>(m.n_params(), 1e-300), std::vector<double>(m.n_params(), 0.1), 3, 2, {}};
  st.log = {{0, 1.0, 2.0, 3.0, 6.0, 0.01, 0.0, 0.5}, {1, 0.1, 0.2, 0.3, 0.6, 0.00999, 0.0, 0.25}};
  const json j = io::to_json(st);
  const auto rt = io::checkpoint_from_json(json::parse(j.dump()));
  EXPECT_EQ(rt.model.params(), st.model.params());
  EXPECT_EQ(rt.moment1, st.moment1);
  EXPECT_EQ(rt.log, st.log);
  EXPECT_EQ(rt.step, 3);

  json truncated = j;
  truncated["epoch"] = 5;
  EXPECT_THROW(io::checkpoint_from_json(truncated), IoError);
  json wrong_params = io::to_json(m);
  wrong_params["params"] = json::array({1.0});
  EXPECT_THROW(io::model_from_json(wrong_params), IoError);
}

TEST(Io, ReportRoundTripKeepsUndefinedCorrelations) {
  EvalReport r;
  r.pearson_returns = 0.75;
  r.per_trajectory = {{1.0, 2.0}};
  const auto back = io::report_from_json(io::to_json(r));
  EXPECT_EQ(back.pearson_returns, 0.75);
  EXPECT_FALSE(back.pearson_states.has_value());
  EXPECT_EQ(back.per_trajectory.size(), 1u);
  std::ostringstream os;
  io::write_returns_csv(os, r);
  EXPECT_EQ(os.str(), "trajectory,gt_return,learned_return\n0,1,2\n");
}

TEST(Io, SchemaTagsAndVersionsAreChecked) {
  json j = io::to_json(OptimalityProfile::point_mass(1.0));
  EXPECT_THROW(io::supervision_from_json(j), IoError);
  j["schema_version"] = io::kSchemaVersion + 1;
  EXPECT_THROW(io::profile_from_json(j), IoError);
  j.erase("schema_version");
  EXPECT_THROW(io::profile_from_json(j), IoError);
  EXPECT_THROW(io::check_schema(json::array(), "profile"), IoError);
  EXPECT_THROW(io::parse_json("{", "inline"), IoError);
}

TEST(Io, FilesAreWrittenAtomically) {
  const auto dir = scratch_dir("files");
  const auto path = dir / "nested" / "profile.json";
  io::write_json(path, io::to_json(OptimalityProfile::point_mass(2.0)));
  EXPECT_TRUE(std::filesystem::exists(path));
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  EXPECT_EQ(io::profile_from_json(io::read_json(path)).mean(), 2.0);
  EXPECT_THROW(io::read_text(dir / "missing.json"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Config, OverridesAndUnknownKeys) {
  const RunConfig base;
  const auto c = io::config_from_json(json{{"n_epochs", 7}, {"model", "tabular"}}, base);
  EXPECT_EQ(c.n_epochs, 7);
  EXPECT_EQ(c.model, "tabular");
  EXPECT_EQ(c.c_fix, base.c_fix);
  EXPECT_THROW(io::config_from_json(json{{"n_epoch", 7}}), ConfigError);
  EXPECT_THROW(io::config_from_json(json{{"n_epochs", "many"}}), IoError);
  const json full = io::to_json(c);
  EXPECT_EQ(io::to_json(io::config_from_json(full)), full);
}

TEST(Config, InlineEnvironmentSpec) {
  RunConfig c;
  c.env_spec = envs::figure1_corridor(5, 0.0);
  const auto back = io::config_from_json(io::to_json(c));
  ASSERT_TRUE(back.env_spec.has_value());
  EXPECT_EQ(back.spec().width, 5);
}

TEST(Config, ValidationCatchesBadValues) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  c.n_demos = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.optimizer = "lbfgs";
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.env = "maze";
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.c_ot = c.c_pw = c.c_fix = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}
