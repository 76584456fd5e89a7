#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "optprof/error.hpp"
#include "optprof/mdp.hpp"
#include "optprof/random.hpp"

namespace optprof {

enum class ModelKind { kTabular, kMlp };

inline std::string to_string(ModelKind k) { return k == ModelKind::kTabular ? "tabular" : "mlp"; }

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "tabular") return ModelKind::kTabular;
  if (s == "mlp") return ModelKind::kMlp;
  throw ConfigError("unknown model kind '" + s + "' (expected tabular or mlp)");
}

/// Affine map applied to returns and labels during training:
/// standardized = scale * raw + shift.
struct Standardization {
  double scale = 1.0;
  double shift = 0.0;
  double apply(double raw) const { return scale * raw + shift; }
  friend bool operator==(const Standardization&, const Standardization&) = default;
};

/// Parametric state reward R_theta over a finite state set.
///
/// Tabular: one parameter per state. MLP: features(d) -> ReLU(h) -> scalar,
/// parameters laid out as [W1 (h x d, row-major), b1 (h), w2 (h), b2].
class RewardModel {
 public:
  static RewardModel tabular(int n_states, std::uint64_t seed) {
    if (n_states <= 0) throw ConfigError("RewardModel::tabular: no states");
    RewardModel m;
    m.kind_ = ModelKind::kTabular;
    m.n_states_ = n_states;
    m.params_.resize(static_cast<std::size_t>(n_states));
    Rng rng = make_rng(seed, 0x7ab);
    for (double& w : m.params_) w = 2.0 * uniform01(rng) - 1.0;
    return m;
  }

  static RewardModel tabular_from(std::vector<double> table) {
    RewardModel m = tabular(static_cast<int>(table.size()), 0);
    m.params_ = std::move(table);
    return m;
  }

  static RewardModel mlp(std::vector<std::vector<double>> features, int hidden, std::uint64_t seed) {
    if (features.empty()) throw ConfigError("RewardModel::mlp: empty feature table");
    if (hidden <= 0) throw ConfigError("RewardModel::mlp: hidden width must be positive");
    RewardModel m;
    m.kind_ = ModelKind::kMlp;
    m.n_states_ = static_cast<int>(features.size());
    m.input_dim_ = static_cast<int>(features.front().size());
    if (m.input_dim_ == 0) throw ConfigError("RewardModel::mlp: zero feature dimension");
    for (const auto& f : features)
      if (static_cast<int>(f.size()) != m.input_dim_) throw ConfigError("RewardModel::mlp: ragged feature table");
    m.hidden_ = hidden;
    m.features_ = std::move(features);
    m.params_.assign(m.expected_params(), 0.0);
    Rng rng = make_rng(seed, 0x31f);
    const double in_bound = std::sqrt(1.0 / m.input_dim_);
    const double out_bound = std::sqrt(1.0 / hidden);
    const std::size_t first_layer = static_cast<std::size_t>(hidden) * (static_cast<std::size_t>(m.input_dim_) + 1);
    for (std::size_t i = 0; i < m.params_.size(); ++i) {
      const double bound = i < first_layer ? in_bound : out_bound;
      m.params_[i] = bound * (2.0 * uniform01(rng) - 1.0);
    }
    return m;
  }

  /// Rebuilds a model from a serialized descriptor; validates the parameter count.
  static RewardModel restore(ModelKind kind, int n_states, int hidden, std::vector<std::vector<double>> features,
                             std::vector<double> params, Standardization standardization) {
    RewardModel m = kind == ModelKind::kTabular ? tabular(n_states, 0) : mlp(std::move(features), hidden, 0);
    if (params.size() != m.params_.size())
      throw ConfigError("RewardModel::restore: expected " + std::to_string(m.params_.size()) + " parameters, got " +
                        std::to_string(params.size()));
    m.params_ = std::move(params);
    m.standardization_ = standardization;
    return m;
  }

  ModelKind kind() const { return kind_; }
  int n_states() const { return n_states_; }
  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  const std::vector<std::vector<double>>& features() const { return features_; }
  std::size_t n_params() const { return params_.size(); }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& params() { return params_; }
  const Standardization& standardization() const { return standardization_; }
  void set_standardization(Standardization s) { standardization_ = s; }

  double forward(StateId s) const {
    check_state(s);
    if (kind_ == ModelKind::kTabular) return params_[static_cast<std::size_t>(s)];
    const auto& x = features_[static_cast<std::size_t>(s)];
    const std::size_t d = static_cast<std::size_t>(input_dim_), h = static_cast<std::size_t>(hidden_);
    const double* w1 = params_.data();
    const double* b1 = w1 + h * d;
    const double* w2 = b1 + h;
    const double b2 = w2[h];
    double out = b2;
    for (std::size_t k = 0; k < h; ++k) {
      double z = b1[k];
      for (std::size_t j = 0; j < d; ++j) z += w1[k * d + j] * x[j];
      if (z > 0.0) out += w2[k] * z;
    }
    return out;
  }

  /// R_theta for every state.
  std::vector<double> state_rewards() const {
    if (kind_ == ModelKind::kTabular) return params_;
    std::vector<double> out(static_cast<std::size_t>(n_states_));
    for (StateId s = 0; s < n_states_; ++s) out[static_cast<std::size_t>(s)] = forward(s);
    return out;
  }

  /// sum_s coef[s] * grad_theta R_theta(s).
  std::vector<double> backward(std::span<const double> coef) const {
    if (coef.size() != static_cast<std::size_t>(n_states_)) throw ConfigError("RewardModel::backward: size mismatch");
    if (kind_ == ModelKind::kTabular) return {coef.begin(), coef.end()};
    std::vector<double> grad(params_.size(), 0.0);
    const std::size_t d = static_cast<std::size_t>(input_dim_), h = static_cast<std::size_t>(hidden_);
    const double* w1 = params_.data();
    const double* b1 = w1 + h * d;
    const double* w2 = b1 + h;
    double* g_w1 = grad.data();
    double* g_b1 = g_w1 + h * d;
    double* g_w2 = g_b1 + h;
    double& g_b2 = g_w2[h];
    for (std::size_t s = 0; s < coef.size(); ++s) {
      const double c = coef[s];
      if (c == 0.0) continue;
      const auto& x = features_[s];
      g_b2 += c;
      for (std::size_t k = 0; k < h; ++k) {
        double z = b1[k];
        for (std::size_t j = 0; j < d; ++j) z += w1[k * d + j] * x[j];
        if (z <= 0.0) continue;
        g_w2[k] += c * z;
        const double back = c * w2[k];
        g_b1[k] += back;
        for (std::size_t j = 0; j < d; ++j) g_w1[k * d + j] += back * x[j];
      }
    }
    return grad;
  }

 private:
  RewardModel() = default;

  std::size_t expected_params() const {
    const auto h = static_cast<std::size_t>(hidden_);
    return h * static_cast<std::size_t>(input_dim_) + 2 * h + 1;
  }

  void check_state(StateId s) const {
    if (s < 0 || s >= n_states_) throw ConfigError("RewardModel: state out of range");
  }

  ModelKind kind_ = ModelKind::kTabular;
  int n_states_ = 0;
  int input_dim_ = 0;
  int hidden_ = 0;
  std::vector<std::vector<double>> features_;
  std::vector<double> params_;
  Standardization standardization_;
};

inline double forward(const RewardModel& model, StateId s) { return model.forward(s); }

}  // namespace optprof
