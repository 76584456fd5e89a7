#pragma once

// Measures on trajectories and returns: the augmented suffix dataset,
// discounted returns, return profiles, and the exact (enumerated)
// occupancy and future measures used as oracles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "optprof/error.hpp"
#include "optprof/mdp.hpp"

namespace optprof {

struct Atom {
  double location;
  double weight;
  friend bool operator==(const Atom&, const Atom&) = default;
};

inline bool same_location(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

/// A distribution on the real line as sorted, weighted atoms.
class OptimalityProfile {
 public:
  static constexpr double kWeightTol = 1e-9;

  OptimalityProfile() = default;

  /// Validates sortedness, positivity, finiteness and total mass.
  explicit OptimalityProfile(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw ConfigError("OptimalityProfile: no atoms");
    double total = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      const auto& a = atoms_[i];
      if (!std::isfinite(a.location)) throw ConfigError("OptimalityProfile: non-finite location");
      if (!(a.weight > 0.0) || !std::isfinite(a.weight)) throw ConfigError("OptimalityProfile: weights must be positive");
      if (i > 0 && !(atoms_[i - 1].location < a.location))
        throw ConfigError("OptimalityProfile: atoms must be strictly ascending");
      total += a.weight;
    }
    if (std::abs(total - 1.0) > kWeightTol) throw ConfigError("OptimalityProfile: weights do not sum to 1");
  }

  /// Sorts (stable), merges equal locations, drops zero weights and normalizes.
  static OptimalityProfile from_weighted(std::span<const double> locations, std::span<const double> weights) {
    if (locations.size() != weights.size()) throw ConfigError("from_weighted: size mismatch");
    std::vector<std::size_t> order(locations.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return locations[a] < locations[b]; });
    std::vector<Atom> atoms;
    double total = 0.0;
    for (std::size_t i : order) {
      if (weights[i] < 0.0 || !std::isfinite(weights[i])) throw ConfigError("from_weighted: invalid weight");
      if (weights[i] == 0.0) continue;
      total += weights[i];
      if (!atoms.empty() && same_location(atoms.back().location, locations[i]))
        atoms.back().weight += weights[i];
      else
        atoms.push_back({locations[i], weights[i]});
    }
    if (!(total > 0.0)) throw ConfigError("from_weighted: zero total mass");
    for (auto& a : atoms) a.weight /= total;
    return OptimalityProfile(std::move(atoms));
  }

  /// Uniform weights over `values`, duplicates merged.
  static OptimalityProfile from_samples(std::span<const double> values) {
    std::vector<double> w(values.size(), 1.0);
    return from_weighted(values, w);
  }

  static OptimalityProfile point_mass(double location) { return OptimalityProfile({{location, 1.0}}); }

  const std::vector<Atom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  double min() const { return atoms_.front().location; }
  double max() const { return atoms_.back().location; }

  double mean() const {
    double m = 0.0;
    for (const auto& a : atoms_) m += a.weight * a.location;
    return m;
  }

  double stddev() const {
    const double m = mean();
    double v = 0.0;
    for (const auto& a : atoms_) v += a.weight * (a.location - m) * (a.location - m);
    return std::sqrt(v);
  }

  double total_weight() const {
    double t = 0.0;
    for (const auto& a : atoms_) t += a.weight;
    return t;
  }

  /// Applies x -> scale * x + shift (scale > 0 keeps the order).
  OptimalityProfile affine(double scale, double shift) const {
    if (!(scale > 0.0)) throw ConfigError("OptimalityProfile::affine: scale must be positive");
    std::vector<Atom> out = atoms_;
    for (auto& a : out) a.location = scale * a.location + shift;
    return OptimalityProfile(std::move(out));
  }

 private:
  std::vector<Atom> atoms_;
};

/// Equal-width histogram over [min, max] with atoms at bin centers; a
/// degenerate range gives a single atom. Empty bins are dropped.
inline OptimalityProfile histogram_profile(std::span<const double> values, std::span<const double> weights,
                                           int n_bins) {
  if (values.empty()) throw ConfigError("histogram_profile: no values");
  if (n_bins <= 0) return OptimalityProfile::from_weighted(values, weights);
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(hi > lo)) return OptimalityProfile::point_mass(lo);
  const double width = (hi - lo) / n_bins;
  std::vector<double> mass(static_cast<std::size_t>(n_bins), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bin = static_cast<int>(std::floor((values[i] - lo) / width));
    bin = std::clamp(bin, 0, n_bins - 1);
    mass[static_cast<std::size_t>(bin)] += weights[i];
  }
  std::vector<Atom> atoms;
  for (int b = 0; b < n_bins; ++b)
    if (mass[static_cast<std::size_t>(b)] > 0.0)
      atoms.push_back({lo + (b + 0.5) * width, mass[static_cast<std::size_t>(b)] / total});
  return OptimalityProfile(std::move(atoms));
}

inline OptimalityProfile histogram_profile(std::span<const double> values, int n_bins) {
  std::vector<double> w(values.size(), 1.0);
  return histogram_profile(values, w, n_bins);
}

/// Bin index of `value` for a histogram built over [lo, hi] with n_bins.
inline int histogram_bin(double value, double lo, double hi, int n_bins) {
  if (!(hi > lo)) return 0;
  const double width = (hi - lo) / n_bins;
  return std::clamp(static_cast<int>(std::floor((value - lo) / width)), 0, n_bins - 1);
}

/// Total-variation distance, atoms matched by location.
inline double total_variation(const OptimalityProfile& a, const OptimalityProfile& b) {
  const auto& xa = a.atoms();
  const auto& xb = b.atoms();
  std::size_t i = 0, j = 0;
  double tv = 0.0;
  while (i < xa.size() || j < xb.size()) {
    if (j == xb.size() || (i < xa.size() && !same_location(xa[i].location, xb[j].location) &&
                           xa[i].location < xb[j].location)) {
      tv += xa[i++].weight;
    } else if (i == xa.size() || !same_location(xa[i].location, xb[j].location)) {
      tv += xb[j++].weight;
    } else {
      tv += std::abs(xa[i++].weight - xb[j++].weight);
    }
  }
  return 0.5 * tv;
}

// ---------------------------------------------------------------------------
// Returns

/// sum_t gamma^t R(s_t), evaluated backward (Horner form). gamma = 0 gives R(s_0).
inline double traj_return(std::span<const double> reward, std::span<const StateId> states, double gamma) {
  if (states.empty()) throw ConfigError("traj_return: empty trajectory");
  double g = 0.0;
  for (std::size_t t = states.size(); t-- > 0;) {
    const double r = reward[static_cast<std::size_t>(states[t])];
    g = (t + 1 == states.size()) ? r : r + gamma * g;
  }
  return g;
}

inline double traj_return(std::span<const double> reward, const Trajectory& traj, double gamma) {
  return traj_return(reward, std::span<const StateId>(traj.states), gamma);
}

/// Returns of every suffix: out[j] = traj_return(traj.suffix(j)).
inline std::vector<double> suffix_returns(std::span<const double> reward, const Trajectory& traj, double gamma) {
  std::vector<double> out(traj.length());
  double g = 0.0;
  for (std::size_t t = traj.length(); t-- > 0;) {
    const double r = reward[static_cast<std::size_t>(traj.states[t])];
    g = (t + 1 == traj.length()) ? r : r + gamma * g;
    out[t] = g;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmented suffix dataset

struct SuffixEntry {
  std::size_t source_index;
  std::size_t start_step;
  Trajectory suffix;
};

/// All suffixes of all trajectories, ordered by source then start step.
class AugmentedDataset {
 public:
  AugmentedDataset() = default;

  explicit AugmentedDataset(std::span<const Trajectory> dataset) {
    if (dataset.empty()) throw ConfigError("augment: empty dataset");
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset[i].length() == 0) throw ConfigError("augment: empty trajectory");
      offsets_.push_back(entries_.size());
      for (std::size_t j = 0; j < dataset[i].length(); ++j) entries_.push_back({i, j, dataset[i].suffix(j)});
    }
  }

  const std::vector<SuffixEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const SuffixEntry& operator[](std::size_t i) const { return entries_[i]; }
  std::size_t n_sources() const { return offsets_.size(); }

  /// Index of the full trajectory `source` (start_step 0).
  std::size_t full_index(std::size_t source) const { return offsets_.at(source); }

 private:
  std::vector<SuffixEntry> entries_;
  std::vector<std::size_t> offsets_;
};

inline AugmentedDataset augment(std::span<const Trajectory> dataset) { return AugmentedDataset(dataset); }

/// Returns of every augmented entry.
inline std::vector<double> augmented_returns(std::span<const double> reward, const AugmentedDataset& aug,
                                             double gamma) {
  std::vector<double> out;
  out.reserve(aug.size());
  for (const auto& e : aug.entries()) out.push_back(traj_return(reward, e.suffix, gamma));
  return out;
}

/// Uniform weight per suffix; n_bins = 0 keeps exact (merged) atoms.
inline OptimalityProfile empirical_return_distribution(std::span<const double> reward, const AugmentedDataset& aug,
                                                       double gamma, int n_bins) {
  if (aug.size() == 0) throw ConfigError("empirical_return_distribution: empty dataset");
  const auto returns = augmented_returns(reward, aug, gamma);
  return histogram_profile(returns, n_bins);
}

/// Empirical state occupancy: visit frequency of each state over the dataset.
inline std::vector<double> empirical_occupancy(std::span<const Trajectory> dataset, int n_states) {
  std::vector<double> occ(static_cast<std::size_t>(n_states), 0.0);
  double total = 0.0;
  for (const auto& t : dataset)
    for (StateId s : t.states) {
      occ[static_cast<std::size_t>(s)] += 1.0;
      total += 1.0;
    }
  if (total > 0.0)
    for (double& o : occ) o /= total;
  return occ;
}

// ---------------------------------------------------------------------------
// Exact measures over enumerated trajectories

/// Length-proportional reweighting: l(s) P(s) / sum l(s') P(s').
inline std::vector<WeightedTrajectory> rescaled_traj_distribution(std::span<const WeightedTrajectory> trajs) {
  double denom = 0.0;
  for (const auto& wt : trajs) denom += static_cast<double>(wt.traj.length()) * wt.prob;
  if (!(denom > 0.0)) throw ConfigError("rescaled_traj_distribution: zero total mass");
  std::vector<WeightedTrajectory> out;
  out.reserve(trajs.size());
  for (const auto& wt : trajs) out.push_back({wt.traj, static_cast<double>(wt.traj.length()) * wt.prob / denom});
  return out;
}

struct MarkedEntry {
  std::size_t traj_index;
  std::size_t step;
  double prob;
};

/// Distribution over (trajectory, marked step) pairs with step <= length - 1.
struct MarkedTrajectoryDist {
  std::vector<Trajectory> trajectories;
  std::vector<MarkedEntry> entries;

  double total() const {
    double t = 0.0;
    for (const auto& e : entries) t += e.prob;
    return t;
  }
};

/// rho(s, t) = P(s) / sum l(s') P(s') for t <= l(s) - 1.
inline MarkedTrajectoryDist marked_trajectory_dist(std::span<const WeightedTrajectory> trajs) {
  double denom = 0.0;
  for (const auto& wt : trajs) denom += static_cast<double>(wt.traj.length()) * wt.prob;
  if (!(denom > 0.0)) throw ConfigError("marked_trajectory_dist: zero total mass");
  MarkedTrajectoryDist out;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    out.trajectories.push_back(trajs[i].traj);
    const double mass = trajs[i].prob / denom;
    for (std::size_t t = 0; t < trajs[i].traj.length(); ++t) out.entries.push_back({i, t, mass});
  }
  return out;
}

/// State occupancy measure: push-forward of the marked distribution by (s, t) -> s_t.
inline std::vector<double> state_occupancy(const MarkedTrajectoryDist& marked, int n_states) {
  std::vector<double> occ(static_cast<std::size_t>(n_states), 0.0);
  for (const auto& e : marked.entries)
    occ[static_cast<std::size_t>(marked.trajectories[e.traj_index].states[e.step])] += e.prob;
  return occ;
}

/// Reward distribution: push-forward of the state occupancy through R.
inline OptimalityProfile reward_distribution(const MarkedTrajectoryDist& marked, std::span<const double> reward) {
  std::vector<double> locs, weights;
  for (const auto& e : marked.entries) {
    locs.push_back(reward[static_cast<std::size_t>(marked.trajectories[e.traj_index].states[e.step])]);
    weights.push_back(e.prob);
  }
  return OptimalityProfile::from_weighted(locs, weights);
}

/// Return distribution: push-forward of the future measure through the
/// discounted return of each marked suffix.
inline OptimalityProfile future_return_distribution(const MarkedTrajectoryDist& marked,
                                                    std::span<const double> reward, double gamma) {
  std::vector<std::vector<double>> suffix_cache(marked.trajectories.size());
  for (std::size_t i = 0; i < marked.trajectories.size(); ++i)
    suffix_cache[i] = suffix_returns(reward, marked.trajectories[i], gamma);
  std::vector<double> locs, weights;
  for (const auto& e : marked.entries) {
    locs.push_back(suffix_cache[e.traj_index][e.step]);
    weights.push_back(e.prob);
  }
  return OptimalityProfile::from_weighted(locs, weights);
}

inline OptimalityProfile exact_return_distribution(const TabularMdp& mdp, const TabularPolicy& policy,
                                                   std::span<const double> reward, double gamma,
                                                   std::size_t node_budget = kDefaultNodeBudget) {
  const auto trajs = enumerate_trajectories(mdp, policy, 0.0, node_budget);
  return future_return_distribution(marked_trajectory_dist(trajs), reward, gamma);
}

inline OptimalityProfile exact_reward_distribution(const TabularMdp& mdp, const TabularPolicy& policy,
                                                   std::span<const double> reward,
                                                   std::size_t node_budget = kDefaultNodeBudget) {
  const auto trajs = enumerate_trajectories(mdp, policy, 0.0, node_budget);
  return reward_distribution(marked_trajectory_dist(trajs), reward);
}

}  // namespace optprof
