#pragma once

// Evaluation protocols at gridworld scale: return correlation, policy
// re-optimization under a learned reward, and the seed-averaged sweeps
// (with/without the transport loss, profile noise, discount factor).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <limits>
#include <numeric>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "optprof/distributions.hpp"
#include "optprof/error.hpp"
#include "optprof/gridworld.hpp"
#include "optprof/losses.hpp"
#include "optprof/mdp.hpp"
#include "optprof/random.hpp"
#include "optprof/reward_model.hpp"
#include "optprof/trainer.hpp"

namespace optprof {

/// Pearson correlation with optional weights; empty when either side has
/// zero variance.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y,
                                     std::span<const double> weights = {}) {
  if (x.size() != y.size()) throw ConfigError("pearson: size mismatch");
  if (!weights.empty() && weights.size() != x.size()) throw ConfigError("pearson: weight size mismatch");
  if (x.empty()) return std::nullopt;
  auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
  double sw = 0.0, mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w(i);
    mx += w(i) * x[i];
    my += w(i) * y[i];
  }
  if (!(sw > 0.0)) return std::nullopt;
  mx /= sw;
  my /= sw;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += w(i) * dx * dx;
    syy += w(i) * dy * dy;
    sxy += w(i) * dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct ReturnPair {
  double gt;
  double learned;
};

struct EvalReport {
  std::optional<double> pearson_returns;
  std::optional<double> pearson_states;
  std::optional<double> gt_return_of_reoptimized_policy;
  std::optional<double> gt_return_of_best_demo;
  std::vector<ReturnPair> per_trajectory;
};

/// Trajectory-return correlation between the ground truth and the model, plus
/// the occupancy-weighted per-state reward correlation.
inline EvalReport correlate(const RewardModel& model, std::span<const Trajectory> dataset,
                            std::span<const double> gt_reward, double gamma) {
  if (dataset.empty()) throw ConfigError("correlate: empty dataset");
  if (gt_reward.size() != static_cast<std::size_t>(model.n_states()))
    throw ConfigError("correlate: reward size does not match the model");
  const auto learned = model.state_rewards();
  EvalReport rep;
  std::vector<double> gt_ret, lr_ret;
  for (const auto& t : dataset) {
    gt_ret.push_back(traj_return(gt_reward, t, gamma));
    lr_ret.push_back(traj_return(learned, t, gamma));
    rep.per_trajectory.push_back({gt_ret.back(), lr_ret.back()});
  }
  rep.pearson_returns = pearson(gt_ret, lr_ret);
  const auto occ = empirical_occupancy(dataset, model.n_states());
  rep.pearson_states = pearson(gt_reward, learned, occ);
  return rep;
}

/// Undiscounted ground-truth return of the best trajectory.
inline double best_demo_return(std::span<const Trajectory> dataset, std::span<const double> gt_reward) {
  if (dataset.empty()) throw ConfigError("best_demo_return: empty dataset");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& t : dataset) best = std::max(best, traj_return(gt_reward, t, 1.0));
  return best;
}

struct ReoptimizeResult {
  TabularPolicy policy;
  double mean_gt_return;
};

/// Value iteration on the learned state rewards, then the mean undiscounted
/// ground-truth return over `n_episodes` rollouts.
inline ReoptimizeResult reoptimize_and_score(const TabularMdp& mdp, std::span<const double> learned_reward,
                                             double gamma_policy, int n_episodes, std::uint64_t seed) {
  if (n_episodes <= 0) throw ConfigError("reoptimize_and_score: n_episodes must be positive");
  const std::vector<double> reward(learned_reward.begin(), learned_reward.end());
  auto vi = value_iteration(mdp, reward, gamma_policy);
  Rng rng = make_rng(seed, 0x5c0e);
  double total = 0.0;
  for (int e = 0; e < n_episodes; ++e) total += traj_return(mdp.gt_reward(), sample_trajectory(mdp, vi.policy, rng), 1.0);
  return {std::move(vi.policy), total / n_episodes};
}

inline ReoptimizeResult reoptimize_and_score(const TabularMdp& mdp, const RewardModel& model, double gamma_policy,
                                             int n_episodes, std::uint64_t seed) {
  return reoptimize_and_score(mdp, model.state_rewards(), gamma_policy, n_episodes, seed);
}

// ---------------------------------------------------------------------------
// Demonstrations and supervision

inline const std::vector<double>& default_epsilons() {
  static const std::vector<double> eps{0.0, 0.1, 0.3, 0.5, 1.0};
  return eps;
}

/// epsilon-greedy perturbations of the ground-truth optimal policy.
inline std::vector<TabularPolicy> policy_pool(const TabularMdp& mdp, std::span<const double> epsilons,
                                              double gamma_policy = 0.99) {
  const auto greedy = value_iteration(mdp, mdp.gt_reward(), gamma_policy).policy.argmax_actions();
  std::vector<TabularPolicy> pool;
  for (double eps : epsilons) pool.push_back(TabularPolicy::epsilon_greedy(greedy, mdp.n_actions(), eps));
  return pool;
}

/// `n` trajectories, each from a uniformly chosen policy of the pool.
inline std::vector<Trajectory> sample_from_pool(const TabularMdp& mdp, std::span<const TabularPolicy> pool, int n,
                                                Rng& rng) {
  if (n <= 0) throw ConfigError("sample_from_pool: need at least one trajectory");
  if (pool.empty()) throw ConfigError("sample_from_pool: empty policy pool");
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(sample_trajectory(mdp, pool[uniform_index(rng, pool.size())], rng));
  return out;
}

inline std::vector<Trajectory> mixed_quality_demos(const TabularMdp& mdp, int n, std::uint64_t seed,
                                                   std::span<const double> epsilons = default_epsilons()) {
  const auto pool = policy_pool(mdp, epsilons);
  Rng rng = make_rng(seed, 0xde30);
  return sample_from_pool(mdp, pool, n, rng);
}

/// Ground-truth return profile of the augmented dataset.
inline OptimalityProfile gt_profile(const AugmentedDataset& aug, std::span<const double> gt_reward, double gamma,
                                    int n_bins) {
  return empirical_return_distribution(gt_reward, aug, gamma, n_bins);
}

/// Profile of suffix returns each multiplied by an independent N(1, sigma) factor.
inline OptimalityProfile noisy_profile(const AugmentedDataset& aug, std::span<const double> gt_reward, double gamma,
                                       int n_bins, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("noisy_profile: sigma must be non-negative");
  auto returns = augmented_returns(gt_reward, aug, gamma);
  if (sigma > 0.0)
    for (double& y : returns) y *= 1.0 + sigma * standard_normal(rng);
  return histogram_profile(returns, n_bins);
}

/// Random ordered pairs of augmented entries (ties skipped when possible) and
/// fixed labels on entries with extreme returns, alternating between the
/// top and the bottom of the distinct return values.
inline SupervisionSets make_supervision(const AugmentedDataset& aug, std::span<const double> gt_reward, double gamma,
                                        int n_pairs, int n_fixed, Rng& rng) {
  if (n_pairs < 0 || n_fixed < 0) throw ConfigError("make_supervision: negative budget");
  const std::size_t n = aug.size();
  const std::vector<double> ret = augmented_returns(gt_reward, aug, gamma);

  SupervisionSets sup;
  if (n_pairs > 0) {
    if (n < 2) throw ConfigError("make_supervision: pairs need at least two entries");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    int attempts = 0;
    const int max_attempts = 200 * n_pairs + 1000;
    while (static_cast<int>(sup.pairs.size()) < n_pairs) {
      const std::size_t a = uniform_index(rng, n);
      std::size_t b = uniform_index(rng, n - 1);
      if (b >= a) ++b;
      const bool relax = ++attempts > max_attempts;
      if (!relax && same_location(ret[a], ret[b])) continue;
      const auto lo = ret[a] <= ret[b] ? a : b;
      const auto hi = lo == a ? b : a;
      if (!relax && seen.count({lo, hi})) continue;
      seen.insert({lo, hi});
      sup.pairs.push_back({lo, hi});
    }
  }
  if (n_fixed > 0) {
    if (static_cast<std::size_t>(n_fixed) > n) throw ConfigError("make_supervision: more fixed points than entries");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ret[a] < ret[b]; });
    // One representative (first in dataset order) per distinct return.
    std::vector<std::size_t> distinct;
    for (std::size_t k : order)
      if (distinct.empty() || !same_location(ret[distinct.back()], ret[k])) distinct.push_back(k);
    std::vector<bool> taken(n, false);
    std::size_t lo = 0, hi = distinct.size() - 1;
    for (int k = 0; k < n_fixed; ++k) {
      std::size_t pick;
      if (lo <= hi && hi < distinct.size()) {
        pick = (k % 2 == 0) ? distinct[hi--] : distinct[lo++];
      } else {  // fewer distinct values than requested labels
        pick = *std::find_if(order.begin(), order.end(), [&](std::size_t e) { return !taken[e]; });
      }
      taken[pick] = true;
      sup.fixed.push_back({pick, ret[pick]});
    }
  }
  return sup;
}

// ---------------------------------------------------------------------------
// Sweeps

/// Training settings used by the benchmark sweeps: full-batch exact-plan
/// matching (the datasets hold a few thousand suffixes), scale-only
/// standardization and a heavier fixed-point weight.
inline TrainConfig benchmark_config() {
  TrainConfig c;
  c.n_epochs = 1000;
  c.batch_size = 1 << 16;
  c.lambda_schedule = {0.0, 1.0, 0.0};
  c.lr_schedule = {1e-2, 0.998, 1e-4};
  c.weights = {1.0, 1.0, 10.0};
  c.standardize = StandardizeMode::kScale;
  return c;
}

/// A fixed benchmark: environment, demonstrations, held-out trajectories and
/// the training configuration shared by every cell of a sweep.
struct Experiment {
  GridworldSpec spec;
  std::vector<Trajectory> demos;
  std::vector<Trajectory> heldout;
  TrainConfig config = benchmark_config();
  ModelKind model_kind = ModelKind::kMlp;
  int hidden = 16;
  int target_bins = 30;
  int n_pairs = 20;
  int n_fixed = 4;
  double eval_gamma = 1.0;  // discount for held-out return correlation
  double gamma_policy = 0.99;
  int reopt_episodes = 200;
};

/// Builds the standard benchmark: mixed-quality demonstrations and an
/// independent held-out set from the same pool.
inline Experiment make_experiment(const GridworldSpec& spec, int n_demos, int n_heldout, std::uint64_t seed) {
  const TabularMdp mdp = build_gridworld(spec);
  const auto pool = policy_pool(mdp, default_epsilons());
  Experiment ex;
  ex.spec = spec;
  Rng demo_rng = make_rng(seed, 0xde30);
  ex.demos = sample_from_pool(mdp, pool, n_demos, demo_rng);
  Rng held_rng = make_rng(seed, 0x4e1d);
  ex.heldout = sample_from_pool(mdp, pool, n_heldout, held_rng);
  ex.config.seed = seed;
  return ex;
}

struct CellResult {
  std::optional<double> pearson_returns;
  std::optional<double> pearson_states;
  double reopt_return = 0.0;
  double best_demo_return = 0.0;
  double seconds = 0.0;
};

/// Per-cell overrides of the experiment.
struct CellSettings {
  double gamma = 0.9;           // profile / training discount
  double noise_sigma = 0.0;     // multiplicative profile noise
  std::optional<double> c_ot;   // override of the transport weight
  std::optional<int> n_pairs;
  std::optional<int> n_fixed;
};

inline RewardModel make_model(const GridworldSpec& spec, ModelKind kind, int hidden, std::uint64_t seed) {
  return kind == ModelKind::kTabular ? RewardModel::tabular(spec.width * spec.height, seed)
                                     : RewardModel::mlp(gridworld_features(spec), hidden, seed);
}

inline RewardModel make_model(const Experiment& ex, std::uint64_t seed) {
  return make_model(ex.spec, ex.model_kind, ex.hidden, seed);
}

/// Target profile (optionally noisy) and supervision for `demos`, all drawn
/// from streams of `seed`.
inline TrainingData make_training_data(std::span<const Trajectory> demos, std::span<const double> gt_reward,
                                       double gamma, int target_bins, double noise_sigma, int n_pairs, int n_fixed,
                                       std::uint64_t seed) {
  if (demos.empty()) throw ConfigError("make_training_data: empty dataset");
  TrainingData data{augment(demos), {}, {}};
  Rng noise_rng = make_rng(seed, 0x9015e);
  data.target = noise_sigma > 0.0 ? noisy_profile(data.aug, gt_reward, gamma, target_bins, noise_sigma, noise_rng)
                                  : gt_profile(data.aug, gt_reward, gamma, target_bins);
  Rng sup_rng = make_rng(seed, 0x5a9);
  data.supervision = make_supervision(data.aug, gt_reward, gamma, n_pairs, n_fixed, sup_rng);
  return data;
}

/// One training run: profile and supervision drawn from `seed`, model trained
/// with `seed`, evaluated on the held-out set and by re-optimization.
inline CellResult run_cell(const Experiment& ex, const CellSettings& cell, std::uint64_t seed,
                           FitResult* fit_out = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  const TabularMdp mdp = build_gridworld(ex.spec);
  const auto& gt = mdp.gt_reward();
  const TrainingData data = make_training_data(ex.demos, gt, cell.gamma, ex.target_bins, cell.noise_sigma,
                                               cell.n_pairs.value_or(ex.n_pairs), cell.n_fixed.value_or(ex.n_fixed),
                                               seed);
  TrainConfig cfg = ex.config;
  cfg.gamma = cell.gamma;
  cfg.seed = seed;
  if (cell.c_ot) cfg.weights.c_ot = *cell.c_ot;
  FitResult fr = fit(data, make_model(ex, seed), cfg);

  CellResult res;
  const auto rep = correlate(fr.model, ex.heldout, gt, ex.eval_gamma);
  res.pearson_returns = rep.pearson_returns;
  res.pearson_states = rep.pearson_states;
  res.reopt_return = reoptimize_and_score(mdp, fr.model, ex.gamma_policy, ex.reopt_episodes, seed).mean_gt_return;
  res.best_demo_return = best_demo_return(ex.demos, gt);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (fit_out) *fit_out = std::move(fr);
  return res;
}

struct SweepRow {
  std::string setting;
  double param = 0.0;
  int n_seeds = 0;
  int n_defined = 0;  // seeds with a defined correlation
  double mean_pearson = 0.0;
  double std_pearson = 0.0;
  double mean_reopt_return = 0.0;
  std::vector<CellResult> cells;
};

using SweepTable = std::vector<SweepRow>;

/// Runs `fn(job)` for job in [0, n) on up to `jobs` threads.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (int t = 0; t < std::min<int>(jobs, static_cast<int>(n)); ++t)
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

inline void summarize(SweepRow& row) {
  row.n_seeds = static_cast<int>(row.cells.size());
  std::vector<double> vals;
  double reopt = 0.0;
  for (const auto& c : row.cells) {
    if (c.pearson_returns) vals.push_back(*c.pearson_returns);
    reopt += c.reopt_return;
  }
  row.n_defined = static_cast<int>(vals.size());
  row.mean_reopt_return = row.cells.empty() ? 0.0 : reopt / static_cast<double>(row.cells.size());
  if (vals.empty()) {
    row.mean_pearson = std::numeric_limits<double>::quiet_NaN();
    row.std_pearson = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double m = 0.0;
  for (double v : vals) m += v;
  m /= static_cast<double>(vals.size());
  double var = 0.0;
  for (double v : vals) var += (v - m) * (v - m);
  row.mean_pearson = m;
  row.std_pearson = vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size() - 1)) : 0.0;
}

/// Compact decimal form for row labels ("0.5", not "0.500000").
inline std::string format_number(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

struct LabeledCell {
  std::string setting;
  double param;
  CellSettings cell;
};

/// Every (setting, seed) pair is an independent job; rows keep input order.
inline SweepTable run_sweep(const Experiment& ex, const std::vector<LabeledCell>& settings, int n_seeds, int jobs = 1) {
  if (n_seeds <= 0) throw ConfigError("sweep: n_seeds must be positive");
  SweepTable table(settings.size());
  for (std::size_t r = 0; r < settings.size(); ++r) {
    table[r].setting = settings[r].setting;
    table[r].param = settings[r].param;
    table[r].cells.resize(static_cast<std::size_t>(n_seeds));
  }
  const std::size_t total = settings.size() * static_cast<std::size_t>(n_seeds);
  parallel_for(total, jobs, [&](std::size_t job) {
    const std::size_t r = job / static_cast<std::size_t>(n_seeds);
    const std::size_t s = job % static_cast<std::size_t>(n_seeds);
    table[r].cells[s] = run_cell(ex, settings[r].cell, ex.config.seed + s);
  });
  for (auto& row : table) summarize(row);
  return table;
}

/// With vs without the transport loss for each pair budget.
inline SweepTable ablate_ot(const Experiment& ex, std::span<const int> pair_budgets, int fixed_budget, int n_seeds,
                            int jobs = 1) {
  std::vector<LabeledCell> settings;
  for (int b : pair_budgets) {
    if (b < 0) throw ConfigError("ablate_ot: negative pair budget");
    if (b == 0 && fixed_budget == 0) throw ConfigError("ablate_ot: without pairs and fixed points the ablation has no supervision");
    for (bool with_ot : {true, false}) {
      CellSettings c;
      c.gamma = ex.config.gamma;
      c.c_ot = with_ot ? ex.config.weights.c_ot : 0.0;
      c.n_pairs = b;
      c.n_fixed = fixed_budget;
      LossWeights w = ex.config.weights;
      w.c_ot = *c.c_ot;
      validate_objective(w, SupervisionSets{std::vector<std::pair<std::size_t, std::size_t>>(static_cast<std::size_t>(b)),
                                            std::vector<FixedPoint>(static_cast<std::size_t>(fixed_budget))});
      settings.push_back({(with_ot ? "w/ ot, pairs=" : "w/o ot, pairs=") + std::to_string(b), static_cast<double>(b), c});
    }
  }
  return run_sweep(ex, settings, n_seeds, jobs);
}

inline SweepTable noise_sweep(const Experiment& ex, std::span<const double> sigmas, int n_seeds, int jobs = 1) {
  std::vector<LabeledCell> settings;
  for (double s : sigmas) {
    if (!(s >= 0.0)) throw ConfigError("noise_sweep: sigma must be non-negative");
    CellSettings c;
    c.gamma = ex.config.gamma;
    c.noise_sigma = s;
    settings.push_back({"sigma=" + format_number(s), s, c});
  }
  return run_sweep(ex, settings, n_seeds, jobs);
}

inline SweepTable gamma_sweep(const Experiment& ex, std::span<const double> gammas, int n_seeds, int jobs = 1) {
  std::vector<LabeledCell> settings;
  for (double g : gammas) {
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("gamma_sweep: gamma outside [0,1]");
    CellSettings c;
    c.gamma = g;
    settings.push_back({"gamma=" + format_number(g), g, c});
  }
  return run_sweep(ex, settings, n_seeds, jobs);
}

inline void write_sweep_csv(std::ostream& os, const SweepTable& table) {
  os.precision(17);
  os << "setting,param,n_seeds,n_defined,mean_pearson,std_pearson,mean_reopt_return\n";
  for (const auto& r : table)
    os << '"' << r.setting << '"' << ',' << r.param << ',' << r.n_seeds << ',' << r.n_defined << ',' << r.mean_pearson
       << ',' << r.std_pearson << ',' << r.mean_reopt_return << '\n';
}

}  // namespace optprof
