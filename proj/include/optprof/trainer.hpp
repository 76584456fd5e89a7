#pragma once

// Minibatched profile matching: per epoch, draw a batch of suffixes, compute
// the three losses and their gradient, and take an optimizer step, with
// geometric learning-rate and entropy-constant schedules.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "optprof/distributions.hpp"
#include "optprof/error.hpp"
#include "optprof/losses.hpp"
#include "optprof/random.hpp"
#include "optprof/reward_model.hpp"

namespace optprof {

/// value_t = max(floor, initial * decay^t)
struct Schedule {
  double initial = 1e-2;
  double decay = 0.995;
  double floor = 1e-4;

  double at(int epoch) const { return std::max(floor, initial * std::pow(decay, epoch)); }

  void validate(const char* name) const {
    if (!(initial >= 0.0) || !(floor >= 0.0) || !(decay > 0.0 && decay <= 1.0))
      throw ConfigError(std::string(name) + " schedule must be non-negative and non-increasing");
  }
};

enum class OptimizerKind { kSgd, kRmsprop, kAdam };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kRmsprop: return "rmsprop";
    case OptimizerKind::kAdam: return "adam";
  }
  return "adam";
}

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "rmsprop") return OptimizerKind::kRmsprop;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd, rmsprop or adam)");
}

enum class StandardizeMode { kNone, kScale, kAffine };

inline std::string to_string(StandardizeMode m) {
  switch (m) {
    case StandardizeMode::kNone: return "none";
    case StandardizeMode::kScale: return "scale";
    case StandardizeMode::kAffine: return "affine";
  }
  return "affine";
}

inline StandardizeMode parse_standardize(const std::string& s) {
  if (s == "none") return StandardizeMode::kNone;
  if (s == "scale") return StandardizeMode::kScale;
  if (s == "affine") return StandardizeMode::kAffine;
  throw ConfigError("unknown standardization '" + s + "' (expected none, scale or affine)");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double rms_decay = 0.9;
};

struct TrainConfig {
  double gamma = 0.9;
  double p = 2.0;
  /// Entropy constant, relative to the spread of the standardized target.
  /// Values that decay below `lambda_exact_below` (same units) switch to the
  /// floor; a floor of 0 selects the exact monotone plan.
  Schedule lambda_schedule{0.1, 0.99, 0.0};
  double lambda_exact_below = 1e-3;
  Schedule lr_schedule{1e-2, 0.995, 1e-4};
  OptimizerConfig optimizer{};
  int batch_size = 256;
  int n_epochs = 1000;
  LossWeights weights{};
  int n_bins = 0;  // batch histogram bins (0 = exact atoms)
  std::uint64_t seed = 0;
  double clip_norm = 10.0;  // 0 disables clipping
  int checkpoint_every = 100;
  StandardizeMode standardize = StandardizeMode::kScale;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0,1]");
    check_exponent(p);
    lambda_schedule.validate("lambda");
    lr_schedule.validate("learning-rate");
    if (!(lambda_exact_below >= 0.0)) throw ConfigError("lambda_exact_below must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (n_epochs < 0) throw ConfigError("n_epochs must be non-negative");
    if (n_bins < 0) throw ConfigError("n_bins must be non-negative");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
    weights.validate();
  }
};

struct EpochRecord {
  int epoch;
  double l_ot, l_pw, l_fix, l_tot;
  double lr, lambda, grad_norm;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using RunLog = std::vector<EpochRecord>;

inline void write_log_csv(std::ostream& os, const RunLog& log) {
  os.precision(17);
  os << "epoch,l_ot,l_pw,l_fix,l_tot,lr,lambda,grad_norm\n";
  for (const auto& r : log)
    os << r.epoch << ',' << r.l_ot << ',' << r.l_pw << ',' << r.l_fix << ',' << r.l_tot << ',' << r.lr << ','
       << r.lambda << ',' << r.grad_norm << '\n';
}

/// Everything needed to continue a run bit-exactly.
struct TrainState {
  RewardModel model;
  std::vector<double> moment1;  // adam m
  std::vector<double> moment2;  // adam v / rmsprop mean square
  long step = 0;
  int epoch = 0;  // epochs completed
  RunLog log;
};

inline Standardization standardization_for(const OptimalityProfile& target, StandardizeMode mode) {
  if (mode == StandardizeMode::kNone) return {};
  const double sd = target.stddev();
  const double scale = sd > 0.0 ? 1.0 / sd : 1.0;
  if (mode == StandardizeMode::kScale) return {scale, 0.0};
  return {scale, -target.mean() * scale};
}

/// Inputs shared by fit and resume.
struct TrainingData {
  AugmentedDataset aug;
  OptimalityProfile target;  // raw units
  SupervisionSets supervision;  // raw labels
};

namespace detail {

inline std::vector<std::size_t> sample_batch(std::size_t population, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t take = std::min(batch, population);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + uniform_index(rng, population - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(take);
  return idx;
}

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline void optimizer_step(TrainState& st, std::span<const double> grad, double lr, const OptimizerConfig& opt) {
  auto& theta = st.model.params();
  ++st.step;
  switch (opt.kind) {
    case OptimizerKind::kSgd:
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grad[i];
      break;
    case OptimizerKind::kRmsprop:
      for (std::size_t i = 0; i < theta.size(); ++i) {
        st.moment2[i] = opt.rms_decay * st.moment2[i] + (1.0 - opt.rms_decay) * grad[i] * grad[i];
        theta[i] -= lr * grad[i] / (std::sqrt(st.moment2[i]) + opt.epsilon);
      }
      break;
    case OptimizerKind::kAdam: {
      const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(st.step));
      const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(st.step));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        st.moment1[i] = opt.beta1 * st.moment1[i] + (1.0 - opt.beta1) * grad[i];
        st.moment2[i] = opt.beta2 * st.moment2[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
        theta[i] -= lr * (st.moment1[i] / c1) / (std::sqrt(st.moment2[i] / c2) + opt.epsilon);
      }
      break;
    }
  }
}

}  // namespace detail

/// Entropy constant for `epoch` in raw return units of the standardized target.
inline double lambda_at(const TrainConfig& cfg, int epoch, double target_spread) {
  const double rel = cfg.lambda_schedule.at(epoch);
  const double rel_value = rel < cfg.lambda_exact_below ? cfg.lambda_schedule.floor : rel;
  return rel_value * target_spread;
}

using CheckpointCallback = std::function<void(const TrainState&)>;

/// Continues training from `state` until config.n_epochs epochs are done.
inline TrainState resume(TrainState state, const TrainingData& data, const TrainConfig& cfg,
                         const CheckpointCallback& on_checkpoint = {}) {
  cfg.validate();
  validate_objective(cfg.weights, data.supervision);
  data.supervision.validate(data.aug.size());
  if (state.model.params().size() != state.moment1.size() || state.moment1.size() != state.moment2.size())
    throw ConfigError("resume: optimizer state does not match the model");

  const Standardization stdz = state.model.standardization();
  const OptimalityProfile target = data.target.affine(stdz.scale, stdz.shift);
  SupervisionSets sup = data.supervision;
  for (auto& f : sup.fixed) f.label = stdz.apply(f.label);
  const double spread = target.max() - target.min();

  ObjectiveSettings settings;
  settings.gamma = cfg.gamma;
  settings.p = cfg.p;
  settings.n_bins = cfg.n_bins;

  for (int epoch = state.epoch; epoch < cfg.n_epochs; ++epoch) {
    Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(epoch) + 1);
    const auto batch = detail::sample_batch(data.aug.size(), static_cast<std::size_t>(cfg.batch_size), rng);
    settings.lambda = lambda_at(cfg, epoch, spread);
    const double lr = cfg.lr_schedule.at(epoch);
    LossBreakdown lb;
    try {
      lb = total_loss_and_grad(state.model, data.aug, batch, target, sup, cfg.weights, settings, rng);
    } catch (const NumericalError& e) {
      throw NumericalError("epoch " + std::to_string(epoch) + ": " + e.what(), e.residual());
    }
    const double gnorm = detail::norm2(lb.grad);
    if (!std::isfinite(lb.l_tot) || !std::isfinite(gnorm))
      throw NumericalError("epoch " + std::to_string(epoch) + ": non-finite loss (l_ot=" + std::to_string(lb.l_ot) +
                           ", l_pw=" + std::to_string(lb.l_pw) + ", l_fix=" + std::to_string(lb.l_fix) + ")");
    if (cfg.clip_norm > 0.0 && gnorm > cfg.clip_norm)
      for (double& g : lb.grad) g *= cfg.clip_norm / gnorm;
    detail::optimizer_step(state, lb.grad, lr, cfg.optimizer);
    state.log.push_back({epoch, lb.l_ot, lb.l_pw, lb.l_fix, lb.l_tot, lr, settings.lambda, gnorm});
    state.epoch = epoch + 1;
    if (on_checkpoint && cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0) on_checkpoint(state);
  }
  return state;
}

/// Fresh state for `model`: standardization derived from the target.
inline TrainState initial_state(RewardModel model, const OptimalityProfile& target, const TrainConfig& cfg) {
  model.set_standardization(standardization_for(target, cfg.standardize));
  TrainState st{std::move(model), {}, {}, 0, 0, {}};
  st.moment1.assign(st.model.n_params(), 0.0);
  st.moment2.assign(st.model.n_params(), 0.0);
  return st;
}

struct FitResult {
  RewardModel model;
  RunLog log;
};

inline FitResult fit(const TrainingData& data, RewardModel model, const TrainConfig& cfg,
                     const CheckpointCallback& on_checkpoint = {}) {
  TrainState st = resume(initial_state(std::move(model), data.target, cfg), data, cfg, on_checkpoint);
  return {std::move(st.model), std::move(st.log)};
}

inline FitResult fit(std::span<const Trajectory> dataset, const OptimalityProfile& target,
                     const SupervisionSets& supervision, RewardModel model, const TrainConfig& cfg) {
  if (dataset.empty()) throw ConfigError("fit: empty dataset");
  return fit(TrainingData{augment(dataset), target, supervision}, std::move(model), cfg);
}

}  // namespace optprof
