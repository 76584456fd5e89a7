// optprof: demonstration generation, reward fitting, evaluation and sweeps
// over a single run directory.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "optprof/io.hpp"
#include "optprof/optprof.hpp"
#include "optprof/run_config.hpp"

namespace fs = std::filesystem;
using namespace optprof;
using io::json;

namespace {

namespace files {
constexpr const char* kConfig = "config.json";
constexpr const char* kDemos = "demos.jsonl";
constexpr const char* kHeldout = "heldout.jsonl";
constexpr const char* kProfile = "profile.json";
constexpr const char* kSupervision = "supervision.json";
constexpr const char* kCheckpoints = "checkpoints";
constexpr const char* kLastCheckpoint = "last.json";
constexpr const char* kModel = "model.json";
constexpr const char* kLog = "log.csv";
constexpr const char* kReport = "report.json";
constexpr const char* kReturns = "returns.csv";
}  // namespace files

std::string kebab(std::string key) {
  for (char& c : key)
    if (c == '_') c = '-';
  return "--" + key;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError(std::string(what) + ": cannot parse '" + item + "' as a number");
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%06d.json", epoch);
  return buf;
}

void write_csv(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ostringstream ss;
  body(ss);
  io::write_text(path, ss.str());
}

/// Config-key flags: registered on the top-level app, parsed into a scratch
/// config, and applied on top of whatever the run directory and --config
/// provide.
class ConfigFlags {
 public:
  void add_to(CLI::App& app) {
    RunConfig::visit(scratch_, [&](const char* key, auto& member, const char* help) {
      std::string names = kebab(key);
      if (std::string(key) == "n_demos") names += ",--n";
      options_.push_back({key, app.add_option(names, member, help)});
    });
  }

  RunConfig apply(RunConfig base) const {
    const json all = io::to_json(scratch_);
    json given = json::object();
    for (const auto& [key, opt] : options_)
      if (opt->count() > 0) given[key] = all[key];
    return io::config_from_json(given, std::move(base));
  }

 private:
  RunConfig scratch_;
  std::vector<std::pair<std::string, CLI::Option*>> options_;
};

struct Context {
  fs::path run_dir = ".";
  std::string config_file;
  ConfigFlags flags;

  fs::path at(const char* name) const { return run_dir / name; }

  /// Defaults, then run-dir config.json, then --config, then flags.
  RunConfig config() const {
    RunConfig cfg;
    if (fs::exists(at(files::kConfig))) cfg = io::config_from_json(io::read_json(at(files::kConfig)), cfg);
    if (!config_file.empty()) cfg = io::config_from_json(io::read_json(config_file), cfg);
    cfg = flags.apply(cfg);
    cfg.validate();
    return cfg;
  }

  std::vector<Trajectory> demos(const TabularMdp& mdp, const char* name = files::kDemos) const {
    auto trajs = io::read_trajectories(at(name));
    if (trajs.empty()) throw ConfigError(std::string(name) + ": empty dataset");
    for (const auto& t : trajs) check_trajectory(mdp, t);
    return trajs;
  }
};

Experiment experiment_from(const RunConfig& cfg, std::vector<Trajectory> demos, std::vector<Trajectory> heldout) {
  Experiment ex;
  ex.spec = cfg.spec();
  ex.demos = std::move(demos);
  ex.heldout = std::move(heldout);
  ex.config = cfg.train_config();
  ex.model_kind = parse_model_kind(cfg.model);
  ex.hidden = cfg.hidden;
  ex.target_bins = cfg.bins;
  ex.n_pairs = cfg.pairs;
  ex.n_fixed = cfg.fixed;
  ex.eval_gamma = cfg.eval_gamma;
  ex.gamma_policy = cfg.gamma_policy;
  ex.reopt_episodes = cfg.reopt_episodes;
  return ex;
}

void print_table(const char* title, const SweepTable& t) {
  std::cout << title << '\n';
  for (const auto& r : t)
    std::cout << "  " << std::left << std::setw(24) << r.setting << " mean " << std::setprecision(4) << r.mean_pearson
              << "  sd " << r.std_pearson << "  reopt " << r.mean_reopt_return << '\n';
}

// ---------------------------------------------------------------------------
// Commands

struct GenDemosOpts {
  bool profile = true;
  std::string profile_csv;
};

int cmd_gen_demos(const Context& ctx, const GenDemosOpts& o) {
  const RunConfig cfg = ctx.config();
  const GridworldSpec spec = cfg.spec();
  const TabularMdp mdp = build_gridworld(spec);
  const Experiment ex = make_experiment(spec, cfg.n_demos, cfg.n_heldout, cfg.seed);
  io::write_json(ctx.at(files::kConfig), io::to_json(cfg));
  io::write_trajectories(ctx.at(files::kDemos), ex.demos);
  io::write_trajectories(ctx.at(files::kHeldout), ex.heldout);
  std::cout << "wrote " << ex.demos.size() << " demonstrations and " << ex.heldout.size() << " held-out trajectories\n";
  if (o.profile || !o.profile_csv.empty()) {
    TrainingData data = make_training_data(ex.demos, mdp.gt_reward(), cfg.gamma, cfg.bins, cfg.noise_sigma, cfg.pairs,
                                           cfg.fixed, cfg.seed);
    if (!o.profile_csv.empty()) {
      std::istringstream in(io::read_text(o.profile_csv));
      data.target = io::read_profile_csv(in, o.profile_csv);
    }
    io::write_json(ctx.at(files::kProfile), io::to_json(data.target));
    io::write_json(ctx.at(files::kSupervision), io::to_json(data.supervision));
    std::cout << "wrote profile (" << data.target.size() << " atoms), " << data.supervision.pairs.size()
              << " pairs, " << data.supervision.fixed.size() << " fixed points\n";
  }
  return exit_code::kOk;
}

struct FitOpts {
  bool resume = false;
  std::string profile_file;
  std::string supervision_file;
};

int cmd_fit(const Context& ctx, const FitOpts& o) {
  const RunConfig cfg = ctx.config();
  const TrainConfig tc = cfg.train_config();
  const GridworldSpec spec = cfg.spec();
  const TabularMdp mdp = build_gridworld(spec);
  const auto demos = ctx.demos(mdp);

  const fs::path profile_path = o.profile_file.empty() ? ctx.at(files::kProfile) : fs::path(o.profile_file);
  const fs::path sup_path = o.supervision_file.empty() ? ctx.at(files::kSupervision) : fs::path(o.supervision_file);
  TrainingData data{augment(demos), OptimalityProfile::point_mass(0.0), {}};
  if (fs::exists(profile_path))
    data.target = io::profile_from_json(io::read_json(profile_path));
  else if (tc.weights.c_ot > 0.0)
    throw IoError("missing target profile '" + profile_path.string() + "' (needed while c_ot > 0)");
  if (fs::exists(sup_path)) data.supervision = io::supervision_from_json(io::read_json(sup_path));
  validate_objective(tc.weights, data.supervision);
  data.supervision.validate(data.aug.size());

  const fs::path ckpt_dir = ctx.at(files::kCheckpoints);
  TrainState state = initial_state(make_model(spec, parse_model_kind(cfg.model), cfg.hidden, cfg.seed), data.target, tc);
  if (o.resume) {
    if (!fs::exists(ckpt_dir / files::kLastCheckpoint))
      throw IoError("--resume: no checkpoint at '" + (ckpt_dir / files::kLastCheckpoint).string() + "'");
    state = io::checkpoint_from_json(io::read_json(ckpt_dir / files::kLastCheckpoint));
    if (state.model.n_states() != mdp.n_states())
      throw ConfigError("--resume: checkpoint model does not match the environment");
  }
  io::write_json(ctx.at(files::kConfig), io::to_json(cfg));

  const auto save = [&](const TrainState& st) {
    const json j = io::to_json(st);
    io::write_json(ckpt_dir / checkpoint_name(st.epoch), j);
    io::write_json(ckpt_dir / files::kLastCheckpoint, j);
  };
  state = resume(std::move(state), data, tc, save);
  save(state);
  io::write_json(ctx.at(files::kModel), io::to_json(state.model));
  write_csv(ctx.at(files::kLog), [&](std::ostream& os) { write_log_csv(os, state.log); });
  if (!state.log.empty()) {
    const auto& last = state.log.back();
    std::cout << "epoch " << last.epoch + 1 << ": l_ot " << last.l_ot << "  l_pw " << last.l_pw << "  l_fix "
              << last.l_fix << "  l_tot " << last.l_tot << '\n';
  }
  std::cout << "wrote " << ctx.at(files::kModel).string() << '\n';
  return exit_code::kOk;
}

struct SweepOpts {
  std::string kind;
  std::string values;
  int jobs = 1;
};

SweepTable run_named_sweep(const Experiment& ex, const std::string& kind, const std::string& values, int n_seeds,
                           int fixed, int jobs) {
  if (jobs < 1) throw ConfigError("--jobs must be at least 1");
  if (kind == "ablate") {
    std::vector<int> budgets;
    for (double v : parse_list(values.empty() ? "20" : values, "ablate")) {
      if (v != static_cast<int>(v)) throw ConfigError("ablate: pair budgets must be integers");
      budgets.push_back(static_cast<int>(v));
    }
    return ablate_ot(ex, budgets, fixed, n_seeds, jobs);
  }
  if (kind == "noise") return noise_sweep(ex, parse_list(values.empty() ? "0.1,0.5,1" : values, "noise"), n_seeds, jobs);
  if (kind == "gamma")
    return gamma_sweep(ex, parse_list(values.empty() ? "0,0.5,0.7,0.9" : values, "gamma"), n_seeds, jobs);
  throw ConfigError("unknown sweep kind '" + kind + "' (expected ablate, noise or gamma)");
}

void write_sweep(const Context& ctx, const std::string& kind, const SweepTable& t) {
  write_csv(ctx.at((kind + ".csv").c_str()), [&](std::ostream& os) { write_sweep_csv(os, t); });
  print_table(kind.c_str(), t);
}

int cmd_sweep(const Context& ctx, const SweepOpts& o) {
  const RunConfig cfg = ctx.config();
  const TabularMdp mdp = build_gridworld(cfg.spec());
  auto demos = ctx.demos(mdp);
  auto heldout = fs::exists(ctx.at(files::kHeldout)) ? ctx.demos(mdp, files::kHeldout) : demos;
  const Experiment ex = experiment_from(cfg, std::move(demos), std::move(heldout));
  write_sweep(ctx, o.kind, run_named_sweep(ex, o.kind, o.values, cfg.n_seeds, cfg.fixed, o.jobs));
  return exit_code::kOk;
}

struct EvalOpts {
  bool correlate = false;
  bool reoptimize = false;
  std::string ablate, noise, gammas;
  std::string plan_csv;
  std::string model_file;
  int jobs = 1;
};

int cmd_eval(const Context& ctx, const EvalOpts& o) {
  const RunConfig cfg = ctx.config();
  const GridworldSpec spec = cfg.spec();
  const TabularMdp mdp = build_gridworld(spec);
  const fs::path model_path = o.model_file.empty() ? ctx.at(files::kModel) : fs::path(o.model_file);
  if (!fs::exists(model_path)) throw IoError("missing model '" + model_path.string() + "' (run fit first)");
  const RewardModel model = io::model_from_json(io::read_json(model_path));
  if (model.n_states() != mdp.n_states()) throw ConfigError("model does not match the environment");
  auto demos = ctx.demos(mdp);
  auto heldout = fs::exists(ctx.at(files::kHeldout)) ? ctx.demos(mdp, files::kHeldout) : demos;

  const bool any_sweep = !o.ablate.empty() || !o.noise.empty() || !o.gammas.empty();
  const bool do_corr = o.correlate || (!o.reoptimize && !any_sweep);
  const bool do_reopt = o.reoptimize || (!o.correlate && !any_sweep);

  EvalReport rep;
  if (do_corr) {
    rep = correlate(model, heldout, mdp.gt_reward(), cfg.eval_gamma);
    std::cout << "pearson_returns " << (rep.pearson_returns ? std::to_string(*rep.pearson_returns) : "undefined")
              << "  pearson_states " << (rep.pearson_states ? std::to_string(*rep.pearson_states) : "undefined")
              << '\n';
    write_csv(ctx.at(files::kReturns), [&](std::ostream& os) { io::write_returns_csv(os, rep); });
  }
  if (do_reopt) {
    rep.gt_return_of_reoptimized_policy =
        reoptimize_and_score(mdp, model, cfg.gamma_policy, cfg.reopt_episodes, cfg.seed).mean_gt_return;
    rep.gt_return_of_best_demo = best_demo_return(demos, mdp.gt_reward());
    std::cout << "reoptimized_return " << *rep.gt_return_of_reoptimized_policy << "  best_demo_return "
              << *rep.gt_return_of_best_demo << '\n';
  }
  if (do_corr || do_reopt) io::write_json(ctx.at(files::kReport), io::to_json(rep));

  if (!o.plan_csv.empty()) {
    const OptimalityProfile raw_target = io::profile_from_json(io::read_json(ctx.at(files::kProfile)));
    const auto& stdz = model.standardization();
    const auto rewards = model.state_rewards();
    const auto aug = augment(demos);
    const auto learned = histogram_profile(augmented_returns(rewards, aug, cfg.gamma), cfg.bins);
    const auto pr = exact_plan(learned, raw_target.affine(stdz.scale, stdz.shift), cfg.p);
    write_csv(o.plan_csv, [&](std::ostream& os) { write_plan_csv(os, pr.plan); });
    std::cout << "transport cost " << pr.cost << " (plan written to " << o.plan_csv << ")\n";
  }

  if (any_sweep) {
    const Experiment ex = experiment_from(cfg, demos, heldout);
    if (!o.ablate.empty()) write_sweep(ctx, "ablate", run_named_sweep(ex, "ablate", o.ablate, cfg.n_seeds, cfg.fixed, o.jobs));
    if (!o.noise.empty()) write_sweep(ctx, "noise", run_named_sweep(ex, "noise", o.noise, cfg.n_seeds, cfg.fixed, o.jobs));
    if (!o.gammas.empty()) write_sweep(ctx, "gamma", run_named_sweep(ex, "gamma", o.gammas, cfg.n_seeds, cfg.fixed, o.jobs));
  }
  return exit_code::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward learning by matching optimality profiles on gridworlds"};
  app.require_subcommand(1);
  Context ctx;
  app.add_option("--run-dir", ctx.run_dir, "run directory")->capture_default_str();
  app.add_option("--config", ctx.config_file, "JSON file of config keys applied over the run-dir config");
  ctx.flags.add_to(app);

  GenDemosOpts gen;
  auto* gen_cmd = app.add_subcommand("gen-demos", "sample demonstrations, the target profile and supervision");
  gen_cmd->add_flag("--profile,!--no-profile", gen.profile, "write profile.json and supervision.json (default on)");
  gen_cmd->add_option("--profile-csv", gen.profile_csv, "import the target profile from a location,weight CSV");

  FitOpts fit_o;
  auto* fit_cmd = app.add_subcommand("fit", "train a reward model on the run directory");
  fit_cmd->add_flag("--resume", fit_o.resume, "continue from checkpoints/last.json");
  fit_cmd->add_option("--profile-file", fit_o.profile_file, "target profile (default: run-dir/profile.json)");
  fit_cmd->add_option("--supervision-file", fit_o.supervision_file,
                      "pairs and fixed points (default: run-dir/supervision.json; absent = none)");

  EvalOpts ev;
  auto* eval_cmd = app.add_subcommand("eval", "score a trained model");
  eval_cmd->add_flag("--correlate", ev.correlate, "held-out return correlation");
  eval_cmd->add_flag("--reoptimize", ev.reoptimize, "value iteration on the learned reward, scored by ground truth");
  eval_cmd->add_option("--ablate", ev.ablate, "pair budgets for the with/without transport-loss ablation, e.g. 20,50");
  eval_cmd->add_option("--noise", ev.noise, "profile noise levels, e.g. 0.1,0.5,1");
  eval_cmd->add_option("--gammas", ev.gammas, "profile discounts, e.g. 0,0.5,0.7,0.9");
  eval_cmd->add_option("--plan-csv", ev.plan_csv, "export the transport plan between learned and target profiles");
  eval_cmd->add_option("--model-file", ev.model_file, "model to evaluate (default: run-dir/model.json)");
  eval_cmd->add_option("--jobs", ev.jobs, "parallel sweep cells")->capture_default_str();

  SweepOpts sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "seed-averaged ablation, noise or discount sweep");
  sweep_cmd->add_option("--kind", sw.kind, "ablate, noise or gamma")->required();
  sweep_cmd->add_option("--values", sw.values, "comma-separated settings (defaults per kind)");
  sweep_cmd->add_option("--jobs", sw.jobs, "parallel sweep cells")->capture_default_str();

  for (auto* sub : {gen_cmd, fit_cmd, eval_cmd, sweep_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_code::kOk : exit_code::kConfig;
  }

  try {
    if (*gen_cmd) return cmd_gen_demos(ctx, gen);
    if (*fit_cmd) return cmd_fit(ctx, fit_o);
    if (*eval_cmd) return cmd_eval(ctx, ev);
    if (*sweep_cmd) return cmd_sweep(ctx, sw);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return exit_code::kConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return exit_code::kNumerical;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return exit_code::kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return exit_code::kIo;
  }
  return exit_code::kConfig;
}
