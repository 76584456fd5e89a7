#pragma once

// Training objective: transport loss on a minibatch with frozen targets,
// pairwise ranking loss, fixed-point loss, and their weighted sum with an
// analytic gradient.
//
// Every term depends on theta only through suffix returns y = R_theta^(gamma)(s),
// so each term reports dL/dy per suffix; those are spread back onto states as
// sum_t gamma^t dL/dy and pushed through RewardModel::backward once.

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "optprof/distributions.hpp"
#include "optprof/error.hpp"
#include "optprof/ot.hpp"
#include "optprof/reward_model.hpp"

namespace optprof {

struct FixedPoint {
  std::size_t index;
  double label;
};

/// Pairs (j, j') assert return(j) <= return(j'); fixed points carry labels.
/// Indices refer to entries of the augmented dataset.
struct SupervisionSets {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<FixedPoint> fixed;

  void validate(std::size_t dataset_size) const {
    for (const auto& [a, b] : pairs) {
      if (a >= dataset_size || b >= dataset_size) throw ConfigError("supervision: pair index out of range");
      if (a == b) throw ConfigError("supervision: pair compares an entry with itself");
    }
    for (const auto& f : fixed) {
      if (f.index >= dataset_size) throw ConfigError("supervision: fixed-point index out of range");
      if (!std::isfinite(f.label)) throw ConfigError("supervision: non-finite label");
    }
  }
};

struct LossWeights {
  double c_ot = 1.0;
  double c_pw = 1.0;
  double c_fix = 1.0;

  void validate() const {
    if (!(c_ot >= 0.0 && c_pw >= 0.0 && c_fix >= 0.0)) throw ConfigError("loss weights must be non-negative");
    if (c_ot == 0.0 && c_pw == 0.0 && c_fix == 0.0) throw ConfigError("loss weights must not all be zero");
  }
};

/// Validates weights against the supervision actually available: a weighted
/// term with no data behind it leaves nothing to train on.
inline void validate_objective(const LossWeights& w, const SupervisionSets& sup) {
  w.validate();
  const bool ot = w.c_ot > 0.0;
  const bool pw = w.c_pw > 0.0 && !sup.pairs.empty();
  const bool fix = w.c_fix > 0.0 && !sup.fixed.empty();
  if (!ot && !pw && !fix) throw ConfigError("objective has no active term: c_ot is zero and no weighted supervision");
}

/// Value of one term and its derivative w.r.t. each involved suffix return.
struct TermGrad {
  double value = 0.0;
  std::vector<std::pair<std::size_t, double>> dvalue_dreturn;  // (augmented index, dL/dy)
};

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Returns of the requested augmented entries under a state reward vector.
inline double entry_return(std::span<const double> rewards, const AugmentedDataset& aug, std::size_t index,
                           double gamma) {
  return traj_return(rewards, aug[index].suffix, gamma);
}

/// -sum log( e^{y'} / (e^{y} + e^{y'}) ) = sum softplus(y - y').
inline TermGrad pw_term(std::span<const double> rewards, const AugmentedDataset& aug,
                        std::span<const std::pair<std::size_t, std::size_t>> pairs, double gamma) {
  TermGrad out;
  for (const auto& [lo, hi] : pairs) {
    const double y_lo = entry_return(rewards, aug, lo, gamma);
    const double y_hi = entry_return(rewards, aug, hi, gamma);
    out.value += softplus(y_lo - y_hi);
    const double s = sigmoid(y_lo - y_hi);
    out.dvalue_dreturn.push_back({lo, s});
    out.dvalue_dreturn.push_back({hi, -s});
  }
  return out;
}

/// || (y_k - label_k)_k ||_2
inline TermGrad fix_term(std::span<const double> rewards, const AugmentedDataset& aug,
                         std::span<const FixedPoint> fixed, double gamma) {
  TermGrad out;
  std::vector<double> residuals;
  residuals.reserve(fixed.size());
  double sq = 0.0;
  for (const auto& f : fixed) {
    const double r = entry_return(rewards, aug, f.index, gamma) - f.label;
    residuals.push_back(r);
    sq += r * r;
  }
  out.value = std::sqrt(sq);
  if (out.value > 0.0)
    for (std::size_t k = 0; k < fixed.size(); ++k) out.dvalue_dreturn.push_back({fixed[k].index, residuals[k] / out.value});
  return out;
}

/// (sum_j |y_j - t_j|^p)^(1/p) with targets held constant.
inline TermGrad ot_term_frozen(std::span<const double> rewards, const AugmentedDataset& aug,
                               std::span<const std::size_t> batch, std::span<const double> targets, double gamma,
                               double p) {
  if (batch.size() != targets.size()) throw ConfigError("ot_term_frozen: batch/target size mismatch");
  TermGrad out;
  std::vector<double> diff(batch.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    diff[j] = entry_return(rewards, aug, batch[j], gamma) - targets[j];
    sum += std::pow(std::abs(diff[j]), p);
  }
  out.value = std::pow(sum, 1.0 / p);
  if (out.value > 0.0) {
    const double outer = std::pow(out.value, 1.0 - p);
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const double d = diff[j];
      const double inner = d == 0.0 ? 0.0 : std::pow(std::abs(d), p - 1.0) * (d > 0.0 ? 1.0 : -1.0);
      out.dvalue_dreturn.push_back({batch[j], outer * inner});
    }
  }
  return out;
}

/// Spreads dL/dy of whole suffixes onto states: coef[s_t] += gamma^t * dL/dy.
inline void accumulate_state_coefficients(const AugmentedDataset& aug, const TermGrad& term, double weight,
                                          double gamma, std::vector<double>& coef) {
  if (weight == 0.0) return;
  for (const auto& [index, dy] : term.dvalue_dreturn) {
    const auto& states = aug[index].suffix.states;
    double discount = 1.0;
    for (std::size_t t = 0; t < states.size(); ++t) {
      coef[static_cast<std::size_t>(states[t])] += weight * dy * discount;
      discount *= gamma;
      if (discount == 0.0) break;
    }
  }
}

inline double pw_loss(const RewardModel& model, const AugmentedDataset& aug,
                      std::span<const std::pair<std::size_t, std::size_t>> pairs, double gamma) {
  const auto r = model.state_rewards();
  return pw_term(r, aug, pairs, gamma).value;
}

inline double fix_loss(const RewardModel& model, const AugmentedDataset& aug, std::span<const FixedPoint> fixed,
                       double gamma) {
  const auto r = model.state_rewards();
  return fix_term(r, aug, fixed, gamma).value;
}

struct LossBreakdown {
  double l_ot = 0.0;
  double l_pw = 0.0;
  double l_fix = 0.0;
  double l_tot = 0.0;
  std::vector<double> grad;
  std::vector<double> targets;  // frozen OT targets for the batch
};

struct ObjectiveSettings {
  double gamma = 0.9;
  double p = 2.0;
  double lambda = 0.0;
  int n_bins = 0;  // batch profile binning (0 = exact atoms)
  SinkhornOptions sinkhorn{};
};

/// Loss and gradient when the OT targets are already fixed.
inline LossBreakdown total_loss_and_grad_frozen(const RewardModel& model, const AugmentedDataset& aug,
                                                std::span<const std::size_t> batch, std::span<const double> targets,
                                                const SupervisionSets& sup, const LossWeights& w, double gamma,
                                                double p) {
  const auto rewards = model.state_rewards();
  LossBreakdown out;
  std::vector<double> coef(static_cast<std::size_t>(model.n_states()), 0.0);
  if (w.c_ot > 0.0 && !batch.empty()) {
    const TermGrad ot = ot_term_frozen(rewards, aug, batch, targets, gamma, p);
    out.l_ot = ot.value;
    accumulate_state_coefficients(aug, ot, w.c_ot, gamma, coef);
  }
  if (!sup.pairs.empty()) {
    const TermGrad pw = pw_term(rewards, aug, sup.pairs, gamma);
    out.l_pw = pw.value;
    accumulate_state_coefficients(aug, pw, w.c_pw, gamma, coef);
  }
  if (!sup.fixed.empty()) {
    const TermGrad fx = fix_term(rewards, aug, sup.fixed, gamma);
    out.l_fix = fx.value;
    accumulate_state_coefficients(aug, fx, w.c_fix, gamma, coef);
  }
  out.l_tot = w.c_ot * out.l_ot + w.c_pw * out.l_pw + w.c_fix * out.l_fix;
  out.grad = model.backward(coef);
  out.targets.assign(targets.begin(), targets.end());
  return out;
}

/// c_ot L_ot + c_pw L_pw + c_fix L_fix and its gradient, with fresh OT
/// targets drawn for `batch` (treated as constants in the gradient).
inline LossBreakdown total_loss_and_grad(const RewardModel& model, const AugmentedDataset& aug,
                                         std::span<const std::size_t> batch, const OptimalityProfile& target,
                                         const SupervisionSets& sup, const LossWeights& w,
                                         const ObjectiveSettings& settings, Rng& rng) {
  w.validate();
  std::vector<double> targets;
  if (w.c_ot > 0.0) {
    if (batch.empty()) throw ConfigError("total_loss_and_grad: empty batch");
    const auto rewards = model.state_rewards();
    std::vector<double> returns;
    returns.reserve(batch.size());
    for (std::size_t idx : batch) returns.push_back(entry_return(rewards, aug, idx, settings.gamma));
    targets = ot_loss_from_returns(returns, target, settings.p, settings.lambda, settings.n_bins, rng,
                                   settings.sinkhorn)
                  .targets;
  }
  return total_loss_and_grad_frozen(model, aug, w.c_ot > 0.0 ? batch : std::span<const std::size_t>{}, targets,
                                    sup, w, settings.gamma, settings.p);
}

}  // namespace optprof
