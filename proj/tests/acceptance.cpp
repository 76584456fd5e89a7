// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Thresholds are fixed; nothing here is tuned per run.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "optprof/optprof.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace optprof;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 ---------------------------------------------------------------------------
Outcome ot_exactness() {
  Rng rng = make_rng(101);
  const double ps[] = {1.0, 2.0, 3.0};
  double worst = 0.0;
  const auto t0 = Clock::now();
  double solver_seconds = 0.0;
  for (int k = 0; k < 200; ++k) {
    const bool lattice = k % 2 == 0;
    const auto a = oracle::random_profile(rng, 6, lattice);
    const auto b = oracle::random_profile(rng, 6, lattice);
    const double p = ps[k % 3];
    const auto ts = Clock::now();
    const PlanResult pr = exact_plan(a, b, p);
    solver_seconds += seconds_since(ts);
    double objective = 0.0;
    for (std::size_t i = 0; i < pr.plan.rows(); ++i)
      for (std::size_t j = 0; j < pr.plan.cols(); ++j)
        objective += pr.plan.at(i, j) * std::pow(std::abs(a.atoms()[i].location - b.atoms()[j].location), p);
    const double lp = oracle::transport_lp(a.atoms(), b.atoms(), p);
    worst = std::max(worst, std::abs(objective - lp));
  }
  const double total = seconds_since(t0);
  return {worst < 1e-9 && total < 10.0,
          fmt("200 instances, max |exact - LP| = %.3g (< 1e-9), %.3f s incl. LP oracle (exact solver %.4f s, < 10 s)",
              worst, total, solver_seconds)};
}

// 2 ---------------------------------------------------------------------------
Outcome sinkhorn_contract() {
  Rng rng = make_rng(202);
  double worst_violation = 0.0, worst_rel = 0.0, worst_increase = -1.0;
  int non_monotone = 0;
  for (int k = 0; k < 100; ++k) {
    const auto a = oracle::random_profile(rng, 8, false);
    const auto b = oracle::random_profile(rng, 8, false);
    const double p = k % 2 == 0 ? 2.0 : 1.0;
    const double spread = std::max(a.max(), b.max()) - std::min(a.min(), b.min());
    const double exact = exact_plan(a, b, p).cost;
    double prev_gap = std::numeric_limits<double>::infinity();
    for (double rel : {1e-1, 1e-2, 1e-3}) {
      const PlanResult pr = sinkhorn_plan(a, b, p, rel * spread);
      worst_violation = std::max(worst_violation, pr.plan.marginal_violation());
      const double gap = pr.cost - exact;
      if (gap > prev_gap + 1e-9) ++non_monotone;
      if (std::isfinite(prev_gap)) worst_increase = std::max(worst_increase, gap - prev_gap);
      prev_gap = gap;
      if (rel == 1e-3) worst_rel = std::max(worst_rel, std::abs(gap) / exact);
    }
  }
  return {worst_violation <= 1e-6 && worst_rel <= 0.01 && non_monotone == 0,
          fmt("100 instances, max marginal violation %.3g (<= 1e-6), max cost error at 1e-3*spread %.3g%% (<= 1%%), "
              "non-monotone gaps %d (largest step %.3g, tol 1e-9)",
              worst_violation, 100.0 * worst_rel, non_monotone, worst_increase)};
}

// 3 ---------------------------------------------------------------------------
std::vector<Trajectory> random_paths(Rng& rng, int n_states, int n_paths, int max_len) {
  std::vector<Trajectory> out;
  for (int i = 0; i < n_paths; ++i) {
    Trajectory t;
    const int len = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(max_len)));
    for (int j = 0; j < len; ++j) t.states.push_back(static_cast<StateId>(uniform_index(rng, static_cast<std::size_t>(n_states))));
    out.push_back(std::move(t));
  }
  return out;
}

double naive_return(const RewardModel& m, const Trajectory& t, double gamma) {
  double g = 0.0, d = 1.0;
  for (StateId s : t.states) {
    g += d * m.forward(s);
    d *= gamma;
  }
  return g;
}

Outcome gradient_fidelity() {
  Rng rng = make_rng(303);
  double worst[3] = {0.0, 0.0, 0.0};
  for (int k = 0; k < 50; ++k) {
    const int n_states = 4 + static_cast<int>(uniform_index(rng, 7));
    RewardModel model = RewardModel::tabular(n_states, 0);
    if (k % 2 == 1) {
      std::vector<std::vector<double>> feats(static_cast<std::size_t>(n_states), std::vector<double>(3));
      for (auto& f : feats)
        for (auto& x : f) x = 2.0 * uniform01(rng) - 1.0;
      model = RewardModel::mlp(feats, 6, rng());
    } else {
      for (double& w : model.params()) w = 2.0 * uniform01(rng) - 1.0;
    }
    const auto demos = random_paths(rng, n_states, 6, 6);
    const AugmentedDataset aug = augment(demos);
    const double gamma = 0.5 + 0.49 * uniform01(rng);
    const double p = k % 4 < 2 ? 2.0 : 3.0;
    std::vector<std::size_t> batch;
    std::vector<double> targets;
    for (std::size_t i = 0; i < aug.size(); ++i)
      if (uniform01(rng) < 0.6) {
        batch.push_back(i);
        targets.push_back(3.0 * standard_normal(rng));
      }
    if (batch.empty()) {
      batch.push_back(0);
      targets.push_back(1.0);
    }
    SupervisionSets sup;
    while (sup.pairs.size() < 6) {
      const std::size_t a = uniform_index(rng, aug.size()), b = uniform_index(rng, aug.size());
      if (a != b) sup.pairs.push_back({a, b});
    }
    for (int i = 0; i < 4; ++i) sup.fixed.push_back({uniform_index(rng, aug.size()), 4.0 * standard_normal(rng)});

    auto value = [&](int term, const std::vector<double>& theta) {
      RewardModel m = model;
      m.params() = theta;
      double v = 0.0;
      if (term == 0) {
        for (std::size_t j = 0; j < batch.size(); ++j)
          v += std::pow(std::abs(naive_return(m, aug[batch[j]].suffix, gamma) - targets[j]), p);
        return std::pow(v, 1.0 / p);
      }
      if (term == 1) {
        for (const auto& [lo, hi] : sup.pairs) {
          const double d = naive_return(m, aug[lo].suffix, gamma) - naive_return(m, aug[hi].suffix, gamma);
          v += std::log1p(std::exp(d));
        }
        return v;
      }
      for (const auto& f : sup.fixed) {
        const double r = naive_return(m, aug[f.index].suffix, gamma) - f.label;
        v += r * r;
      }
      return std::sqrt(v);
    };
    const LossWeights weights[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int term = 0; term < 3; ++term) {
      const LossBreakdown lb = total_loss_and_grad_frozen(model, aug, batch, targets, sup, weights[term], gamma, p);
      const auto fd = oracle::central_differences([&](const std::vector<double>& th) { return value(term, th); },
                                                  model.params(), 1e-5);
      worst[term] = std::max(worst[term], oracle::max_relative_error(lb.grad, fd));
    }
  }
  const bool pass = worst[0] < 1e-4 && worst[1] < 1e-4 && worst[2] < 1e-4;
  return {pass, fmt("50 instances (tabular + mlp), max relative error L_ot %.3g, L_pw %.3g, L_fix %.3g (< 1e-4)",
                    worst[0], worst[1], worst[2])};
}

// 4 ---------------------------------------------------------------------------
Outcome rescaled_regression() {
  Trajectory short_t{{0, 1}, {}}, long_t{{0, 2, 3, 4, 5, 6, 7, 8}, {}};
  const std::vector<WeightedTrajectory> in{{short_t, 0.8}, {long_t, 0.2}};
  const auto out = rescaled_traj_distribution(in);
  const double e1 = std::max(std::abs(out[0].prob - 0.5), std::abs(out[1].prob - 0.5));

  const auto spec = envs::two_corridor();
  const auto trajs = enumerate_trajectories(build_gridworld(spec), envs::two_corridor_policy(spec));
  std::vector<double> probs;
  for (const auto& t : trajs) probs.push_back(t.prob);
  std::sort(probs.begin(), probs.end());
  const double e2 = probs.size() == 2 ? std::max(std::abs(probs[0] - 0.2), std::abs(probs[1] - 0.8)) : 1.0;
  return {e1 <= 1e-12 && e2 <= 1e-9,
          fmt("rescaled weights off by %.3g (<= 1e-12); two-corridor: %zu trajectories, probabilities off by %.3g "
              "(<= 1e-9)",
              e1, probs.size(), e2)};
}

// 5 ---------------------------------------------------------------------------
Outcome zero_discount_identity() {
  Rng rng = make_rng(505);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const TabularMdp mdp = oracle::random_mdp(rng, 6, 5);
    const TabularPolicy pi = oracle::random_policy(rng, mdp.n_states(), mdp.n_actions());
    std::vector<double> reward(static_cast<std::size_t>(mdp.n_states()));
    for (auto& r : reward) r = k % 2 == 0 ? std::round(6.0 * uniform01(rng) - 3.0) : 10.0 * standard_normal(rng);
    const auto occ = oracle::occupancy_forward(mdp, pi);
    const auto p_r = OptimalityProfile::from_weighted(reward, occ);
    const auto p_r0 = exact_return_distribution(mdp, pi, reward, 0.0);
    worst = std::max(worst, total_variation(p_r0, p_r));
  }
  return {worst < 1e-9, fmt("20 random MDPs, max TV(P_R^(0), P_R) = %.3g (< 1e-9)", worst)};
}

// 6 ---------------------------------------------------------------------------
Outcome symmetry_invariance() {
  Rng rng = make_rng(606);
  int instances = 0, mismatches = 0, nontrivial = 0;
  for (int k = 0; k < 10; ++k) {
    const int n_states = 8;
    // Occupancy counts from a small set so that equal-count classes exist.
    std::vector<StateId> pool;
    std::vector<int> count(n_states);
    for (int s = 0; s < n_states; ++s) {
      count[static_cast<std::size_t>(s)] = 1 + static_cast<int>(uniform_index(rng, 3));
      for (int c = 0; c < count[static_cast<std::size_t>(s)]; ++c) pool.push_back(s);
    }
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[uniform_index(rng, i)]);
    std::vector<Trajectory> demos;
    for (std::size_t i = 0; i < pool.size();) {
      const std::size_t len = std::min(pool.size() - i, 1 + uniform_index(rng, 4));
      demos.push_back({{pool.begin() + static_cast<std::ptrdiff_t>(i), pool.begin() + static_cast<std::ptrdiff_t>(i + len)}, {}});
      i += len;
    }
    const AugmentedDataset aug = augment(demos);
    std::vector<Trajectory> batch;
    for (const auto& e : aug.entries()) batch.push_back(e.suffix);
    std::vector<double> reward(static_cast<std::size_t>(n_states));
    for (auto& r : reward) r = 5.0 * standard_normal(rng);
    const auto target = oracle::random_profile(rng, 6, false);
    const std::uint64_t seed = rng();
    const auto base = ot_loss(reward, batch, target, 0.0, 2.0, 0.0, 0, seed);

    for (int r = 0; r < 20; ++r) {
      std::vector<StateId> phi(static_cast<std::size_t>(n_states));
      std::iota(phi.begin(), phi.end(), 0);
      for (int c = 1; c <= 3; ++c) {
        std::vector<StateId> cls;
        for (StateId s = 0; s < n_states; ++s)
          if (count[static_cast<std::size_t>(s)] == c) cls.push_back(s);
        auto shuffled = cls;
        for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[uniform_index(rng, i)]);
        for (std::size_t i = 0; i < cls.size(); ++i) phi[static_cast<std::size_t>(cls[i])] = shuffled[i];
      }
      std::vector<double> permuted(reward.size());
      bool identity = true;
      for (std::size_t s = 0; s < reward.size(); ++s) {
        permuted[s] = reward[static_cast<std::size_t>(phi[s])];
        identity = identity && phi[s] == static_cast<StateId>(s);
      }
      if (!identity) ++nontrivial;
      const auto moved = ot_loss(permuted, batch, target, 0.0, 2.0, 0.0, 0, seed);
      ++instances;
      if (moved.loss != base.loss || moved.plan_cost != base.plan_cost) ++mismatches;
    }
  }
  return {mismatches == 0 && nontrivial > 0,
          fmt("%d permuted evaluations (%d non-identity), %d not bit-identical", instances, nontrivial, mismatches)};
}

// 7 ---------------------------------------------------------------------------
Outcome end_to_end() {
  int passed = 0;
  double sum_pearson = 0.0;
  std::ostringstream per_seed;
  const auto t0 = Clock::now();
  for (int s = 0; s < 10; ++s) {
    const Experiment ex = make_experiment(envs::grid10(), 100, 200, 1000 + static_cast<std::uint64_t>(s));
    CellSettings cell;
    cell.gamma = 0.9;
    const CellResult r = run_cell(ex, cell, ex.config.seed);
    const double rho = r.pearson_returns.value_or(-2.0);
    const bool ok = rho >= 0.9 && r.reopt_return >= r.best_demo_return;
    passed += ok;
    sum_pearson += rho;
    per_seed << (s ? " " : "") << fmt("%.3f/%+.2f%s", rho, r.reopt_return - r.best_demo_return, ok ? "" : "!");
  }
  const double total = seconds_since(t0);
  return {passed >= 8 && total < 300.0,
          fmt("grid10, %d/10 seeds pass (>= 8), mean Pearson %.4f, total %.1f s (< 300 s); per seed "
              "pearson/(reopt - best demo): %s",
              passed, sum_pearson / 10.0, total, per_seed.str().c_str())};
}

// 8-10 ------------------------------------------------------------------------
std::string row_summary(const SweepTable& t) {
  std::string out;
  for (const auto& r : t) out += fmt("%s%s: %.4f", out.empty() ? "" : ", ", r.setting.c_str(), r.mean_pearson);
  return out;
}

Outcome ablation_trend() {
  const Experiment ex = make_experiment(envs::grid10(), 100, 200, 7);
  const std::vector<int> budgets{20};
  const SweepTable t = ablate_ot(ex, budgets, 4, 10);
  return {t.size() == 2 && t[0].mean_pearson > t[1].mean_pearson, "10 seeds, mean Pearson " + row_summary(t)};
}

Outcome noise_trend() {
  const Experiment ex = make_experiment(envs::grid10(), 100, 200, 7);
  const std::vector<double> sigmas{0.1, 0.5, 1.0};
  const SweepTable t = noise_sweep(ex, sigmas, 10);
  return {t.size() == 3 && t[0].mean_pearson >= t[2].mean_pearson, "10 seeds, mean Pearson " + row_summary(t)};
}

Outcome gamma_trend() {
  const Experiment ex = make_experiment(envs::figure1_corridor(), 100, 200, 7);
  const std::vector<double> gammas{0.0, 0.5, 0.7, 0.9};
  const SweepTable t = gamma_sweep(ex, gammas, 10);
  return {t.size() == 4 && t[3].mean_pearson >= t[0].mean_pearson,
          "figure1 corridor, 10 seeds, mean Pearson " + row_summary(t)};
}

// 11 --------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("optprof_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = OPTPROF_CLI_PATH;
  const fs::path a = root / "a", b = root / "b";
  if (run(cli + " --run-dir " + a.string() + " --seed 11 gen-demos") != 0)
    return {false, "gen-demos failed"};
  fs::copy(a, b, fs::copy_options::recursive);
  for (const auto& dir : {a, b})
    if (run(cli + " --run-dir " + dir.string() + " fit") != 0) return {false, "fit failed in " + dir.string()};
  int compared = 0, differing = 0;
  std::vector<fs::path> files{"log.csv", "model.json"};
  for (const auto& e : fs::directory_iterator(a / "checkpoints")) files.push_back(fs::path("checkpoints") / e.path().filename());
  for (const auto& f : files) {
    ++compared;
    if (!fs::exists(b / f) || slurp(a / f) != slurp(b / f)) ++differing;
  }
  const std::size_t n_ckpt = files.size() - 2;
  fs::remove_all(root);
  return {differing == 0 && n_ckpt > 0,
          fmt("two fits of one run directory: %d files compared (%zu checkpoints + log + model), %d differ", compared,
              n_ckpt, differing)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria{
      {"ot-exactness", ot_exactness},
      {"sinkhorn-contract", sinkhorn_contract},
      {"gradient-fidelity", gradient_fidelity},
      {"rescaled-trajectory-regression", rescaled_regression},
      {"zero-discount-identity", zero_discount_identity},
      {"symmetry-invariance", symmetry_invariance},
      {"end-to-end-recovery", end_to_end},
      {"ablation-trend", ablation_trend},
      {"noise-trend", noise_trend},
      {"gamma-trend", gamma_trend},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].name << " ("
              << fmt("%.1f s", seconds_since(t0)) << "): " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
            << " acceptance criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
