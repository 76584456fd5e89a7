#pragma once

// Flat run configuration shared by config.json and the command line. Every
// key maps one-to-one onto a kebab-case flag (`lr_initial` -> `--lr-initial`).

#include <cstdint>
#include <optional>
#include <set>
#include <type_traits>
#include <string>

#include <nlohmann/json.hpp>

#include "optprof/error.hpp"
#include "optprof/eval.hpp"
#include "optprof/gridworld.hpp"
#include "optprof/io.hpp"
#include "optprof/trainer.hpp"

namespace optprof {

struct RunConfig {
  // environment and data
  std::string env = "grid10";
  std::optional<GridworldSpec> env_spec;  // overrides `env` when present
  int n_demos = 100;
  int n_heldout = 200;
  int bins = 30;  // target profile histogram bins (0 = exact atoms)
  int pairs = 20;
  int fixed = 4;
  double noise_sigma = 0.0;
  // model
  std::string model = "mlp";
  int hidden = 16;
  // training
  double gamma = 0.9;
  double p = 2.0;
  double lambda_initial = 0.0;
  double lambda_decay = 1.0;
  double lambda_floor = 0.0;
  double lambda_exact_below = 1e-3;
  double lr_initial = 1e-2;
  double lr_decay = 0.998;
  double lr_floor = 1e-4;
  std::string optimizer = "adam";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double rms_decay = 0.9;
  int batch_size = 1 << 16;
  int n_epochs = 1000;
  double c_ot = 1.0;
  double c_pw = 1.0;
  double c_fix = 10.0;
  int n_bins = 0;  // batch profile bins
  std::uint64_t seed = 0;
  double clip_norm = 10.0;
  int checkpoint_every = 100;
  std::string standardize = "scale";
  // evaluation
  double gamma_policy = 0.99;
  int reopt_episodes = 200;
  double eval_gamma = 1.0;
  int n_seeds = 10;

  /// Calls f(key, member&, help) for every scalar key, in file order.
  template <class Self, class F>
  static void visit(Self& c, F&& f) {
    f("env", c.env, "named environment: figure1, two-corridor, grid10");
    f("n_demos", c.n_demos, "number of demonstrations");
    f("n_heldout", c.n_heldout, "number of held-out evaluation trajectories");
    f("bins", c.bins, "histogram bins of the target profile (0 = exact atoms)");
    f("pairs", c.pairs, "number of pairwise comparisons");
    f("fixed", c.fixed, "number of fixed points");
    f("noise_sigma", c.noise_sigma, "multiplicative N(1, sigma) noise on profile returns");
    f("model", c.model, "reward model: tabular or mlp");
    f("hidden", c.hidden, "hidden width of the mlp");
    f("gamma", c.gamma, "discount of the optimality profile");
    f("p", c.p, "transport exponent");
    f("lambda_initial", c.lambda_initial, "initial entropy constant (fraction of the target spread)");
    f("lambda_decay", c.lambda_decay, "entropy constant decay per epoch");
    f("lambda_floor", c.lambda_floor, "entropy constant floor (0 = exact plan)");
    f("lambda_exact_below", c.lambda_exact_below, "entropy constants below this snap to the floor");
    f("lr_initial", c.lr_initial, "initial learning rate");
    f("lr_decay", c.lr_decay, "learning-rate decay per epoch");
    f("lr_floor", c.lr_floor, "learning-rate floor");
    f("optimizer", c.optimizer, "sgd, rmsprop or adam");
    f("beta1", c.beta1, "adam first-moment decay");
    f("beta2", c.beta2, "adam second-moment decay");
    f("epsilon", c.epsilon, "optimizer denominator offset");
    f("rms_decay", c.rms_decay, "rmsprop mean-square decay");
    f("batch_size", c.batch_size, "suffixes per epoch (larger than the dataset = full batch)");
    f("n_epochs", c.n_epochs, "training epochs");
    f("c_ot", c.c_ot, "weight of the transport loss");
    f("c_pw", c.c_pw, "weight of the pairwise loss");
    f("c_fix", c.c_fix, "weight of the fixed-point loss");
    f("n_bins", c.n_bins, "histogram bins of the batch profile (0 = exact atoms)");
    f("seed", c.seed, "master seed");
    f("clip_norm", c.clip_norm, "gradient-norm clipping threshold (0 = off)");
    f("checkpoint_every", c.checkpoint_every, "epochs between checkpoints (0 = off)");
    f("standardize", c.standardize, "none, scale or affine");
    f("gamma_policy", c.gamma_policy, "discount of value-iteration re-optimization");
    f("reopt_episodes", c.reopt_episodes, "rollouts when scoring a re-optimized policy");
    f("eval_gamma", c.eval_gamma, "discount of the held-out return correlation");
    f("n_seeds", c.n_seeds, "seeds per sweep cell");
  }

  GridworldSpec spec() const { return env_spec ? *env_spec : envs::by_name(env); }

  TrainConfig train_config() const {
    TrainConfig t;
    t.gamma = gamma;
    t.p = p;
    t.lambda_schedule = {lambda_initial, lambda_decay, lambda_floor};
    t.lambda_exact_below = lambda_exact_below;
    t.lr_schedule = {lr_initial, lr_decay, lr_floor};
    t.optimizer = {parse_optimizer(optimizer), beta1, beta2, epsilon, rms_decay};
    t.batch_size = batch_size;
    t.n_epochs = n_epochs;
    t.weights = {c_ot, c_pw, c_fix};
    t.n_bins = n_bins;
    t.seed = seed;
    t.clip_norm = clip_norm;
    t.checkpoint_every = checkpoint_every;
    t.standardize = parse_standardize(standardize);
    return t;
  }

  void validate() const {
    optprof::validate(spec());
    if (n_demos < 1) throw ConfigError("n_demos: empty dataset (need at least one demonstration)");
    if (n_heldout < 1) throw ConfigError("n_heldout must be at least 1");
    if (bins < 0) throw ConfigError("bins must be non-negative");
    if (pairs < 0 || fixed < 0) throw ConfigError("pairs and fixed must be non-negative");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
    parse_model_kind(model);
    if (hidden < 1) throw ConfigError("hidden must be positive");
    if (!(gamma_policy >= 0.0 && gamma_policy < 1.0)) throw ConfigError("gamma_policy must lie in [0,1)");
    if (reopt_episodes < 1) throw ConfigError("reopt_episodes must be positive");
    if (!(eval_gamma >= 0.0 && eval_gamma <= 1.0)) throw ConfigError("eval_gamma must lie in [0,1]");
    if (n_seeds < 1) throw ConfigError("n_seeds must be positive");
    train_config().validate();
  }
};

namespace io {

inline json to_json(const RunConfig& c) {
  json j = stamped("config");
  RunConfig::visit(c, [&](const char* key, const auto& v, const char*) { j[key] = v; });
  if (c.env_spec) j["env_spec"] = to_json(*c.env_spec);
  return j;
}

/// Applies the keys present in `j` on top of `base`; unknown keys are errors.
/// Hand-written override files may omit the schema tag.
inline RunConfig config_from_json(const json& j, RunConfig base = {}) {
  if (!j.is_object()) throw IoError("config: expected a JSON object");
  if (j.contains("schema") || j.contains("schema_version")) check_schema(j, "config");
  std::set<std::string> known{"schema", "schema_version", "env_spec"};
  RunConfig::visit(base, [&](const char* key, auto& v, const char*) {
    known.insert(key);
    if (j.contains(key)) v = get<std::remove_reference_t<decltype(v)>>(j, key, "config");
  });
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");
  if (j.contains("env_spec")) {
    if (j["env_spec"].is_null())
      base.env_spec.reset();
    else
      base.env_spec = gridworld_from_json(j["env_spec"]);
  }
  return base;
}

}  // namespace io

}  // namespace optprof
