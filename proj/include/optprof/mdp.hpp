#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "optprof/error.hpp"
#include "optprof/random.hpp"

namespace optprof {

using StateId = int;
using ActionId = int;

struct Successor {
  StateId state;
  double prob;
};

/// Finite MDP with state-only rewards, absorbing terminals and a horizon.
///
/// Transitions are stored sparsely per (state, action). Construction
/// validates every invariant, so a TabularMdp value is always well formed.
class TabularMdp {
 public:
  static constexpr double kTol = 1e-12;

  TabularMdp(int n_states, int n_actions, std::vector<std::vector<Successor>> transitions,
             std::vector<double> initial_dist, std::vector<double> gt_reward,
             std::set<StateId> terminals, int horizon)
      : n_states_(n_states),
        n_actions_(n_actions),
        transitions_(std::move(transitions)),
        initial_(std::move(initial_dist)),
        reward_(std::move(gt_reward)),
        terminals_(std::move(terminals)),
        horizon_(horizon) {
    validate();
    is_terminal_.assign(static_cast<std::size_t>(n_states_), false);
    for (StateId s : terminals_) is_terminal_[static_cast<std::size_t>(s)] = true;
  }

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  int horizon() const { return horizon_; }
  const std::vector<double>& initial_dist() const { return initial_; }
  const std::vector<double>& gt_reward() const { return reward_; }
  const std::set<StateId>& terminals() const { return terminals_; }
  bool is_terminal(StateId s) const { return is_terminal_[static_cast<std::size_t>(s)]; }

  const std::vector<Successor>& successors(StateId s, ActionId a) const {
    return transitions_[index(s, a)];
  }

  double transition(StateId s, ActionId a, StateId next) const {
    double p = 0.0;
    for (const auto& succ : successors(s, a))
      if (succ.state == next) p += succ.prob;
    return p;
  }

 private:
  std::size_t index(StateId s, ActionId a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(n_actions_) +
           static_cast<std::size_t>(a);
  }

  void validate() const {
    if (n_states_ <= 0 || n_actions_ <= 0) throw ConfigError("TabularMdp: empty state or action set");
    if (horizon_ <= 0) throw ConfigError("TabularMdp: horizon must be positive");
    const auto n = static_cast<std::size_t>(n_states_);
    if (transitions_.size() != n * static_cast<std::size_t>(n_actions_))
      throw ConfigError("TabularMdp: transition table has wrong size");
    if (initial_.size() != n || reward_.size() != n)
      throw ConfigError("TabularMdp: initial_dist/gt_reward size mismatch");
    double init_sum = 0.0;
    for (double p : initial_) {
      if (!(p >= 0.0)) throw ConfigError("TabularMdp: negative initial probability");
      init_sum += p;
    }
    if (std::abs(init_sum - 1.0) > kTol) throw ConfigError("TabularMdp: initial_dist does not sum to 1");
    for (double r : reward_)
      if (!std::isfinite(r)) throw ConfigError("TabularMdp: non-finite reward");
    for (StateId t : terminals_)
      if (t < 0 || t >= n_states_) throw ConfigError("TabularMdp: terminal index out of range");
    for (StateId s = 0; s < n_states_; ++s) {
      for (ActionId a = 0; a < n_actions_; ++a) {
        double sum = 0.0;
        for (const auto& succ : transitions_[index(s, a)]) {
          if (succ.state < 0 || succ.state >= n_states_)
            throw ConfigError("TabularMdp: successor index out of range");
          if (!(succ.prob >= 0.0)) throw ConfigError("TabularMdp: negative transition probability");
          sum += succ.prob;
        }
        if (std::abs(sum - 1.0) > kTol)
          throw ConfigError("TabularMdp: transition row (" + std::to_string(s) + "," +
                            std::to_string(a) + ") does not sum to 1");
        if (terminals_.count(s)) {
          const auto& row = transitions_[index(s, a)];
          if (row.size() != 1 || row[0].state != s || row[0].prob != 1.0)
            throw ConfigError("TabularMdp: terminal state " + std::to_string(s) + " is not absorbing");
        }
      }
    }
  }

  int n_states_;
  int n_actions_;
  std::vector<std::vector<Successor>> transitions_;
  std::vector<double> initial_;
  std::vector<double> reward_;
  std::set<StateId> terminals_;
  int horizon_;
  std::vector<bool> is_terminal_;
};

/// Stochastic policy pi(a|s), one row per state.
class TabularPolicy {
 public:
  TabularPolicy(std::vector<std::vector<double>> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw ConfigError("TabularPolicy: no states");
    const std::size_t n_actions = probs_.front().size();
    if (n_actions == 0) throw ConfigError("TabularPolicy: no actions");
    for (const auto& row : probs_) {
      if (row.size() != n_actions) throw ConfigError("TabularPolicy: ragged rows");
      double sum = 0.0;
      for (double p : row) {
        if (!(p >= 0.0)) throw ConfigError("TabularPolicy: negative probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("TabularPolicy: row does not sum to 1");
    }
  }

  static TabularPolicy uniform(int n_states, int n_actions) {
    return TabularPolicy(std::vector<std::vector<double>>(
        static_cast<std::size_t>(n_states),
        std::vector<double>(static_cast<std::size_t>(n_actions), 1.0 / n_actions)));
  }

  static TabularPolicy deterministic(const std::vector<ActionId>& actions, int n_actions) {
    std::vector<std::vector<double>> probs(actions.size(),
                                           std::vector<double>(static_cast<std::size_t>(n_actions), 0.0));
    for (std::size_t s = 0; s < actions.size(); ++s) probs[s][static_cast<std::size_t>(actions[s])] = 1.0;
    return TabularPolicy(std::move(probs));
  }

  /// (1 - eps) * greedy + eps * uniform.
  static TabularPolicy epsilon_greedy(const std::vector<ActionId>& greedy, int n_actions, double eps) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw ConfigError("epsilon_greedy: eps outside [0,1]");
    std::vector<std::vector<double>> probs(
        greedy.size(), std::vector<double>(static_cast<std::size_t>(n_actions), eps / n_actions));
    for (std::size_t s = 0; s < greedy.size(); ++s)
      probs[s][static_cast<std::size_t>(greedy[s])] += 1.0 - eps;
    // Renormalize so that rows sum to one despite rounding.
    for (auto& row : probs) {
      double sum = 0.0;
      for (double p : row) sum += p;
      for (double& p : row) p /= sum;
    }
    return TabularPolicy(std::move(probs));
  }

  int n_states() const { return static_cast<int>(probs_.size()); }
  int n_actions() const { return static_cast<int>(probs_.front().size()); }
  const std::vector<double>& row(StateId s) const { return probs_[static_cast<std::size_t>(s)]; }
  double prob(StateId s, ActionId a) const { return row(s)[static_cast<std::size_t>(a)]; }

  /// Most likely action per state (lowest index on ties).
  std::vector<ActionId> argmax_actions() const {
    std::vector<ActionId> out;
    out.reserve(probs_.size());
    for (const auto& row : probs_)
      out.push_back(static_cast<ActionId>(std::max_element(row.begin(), row.end()) - row.begin()));
    return out;
  }

 private:
  std::vector<std::vector<double>> probs_;
};

/// A cut-off trajectory: ends at its first terminal state or after `horizon` steps.
struct Trajectory {
  std::vector<StateId> states;
  std::vector<ActionId> actions;  // empty, or states.size() - 1 entries

  std::size_t length() const { return states.size(); }

  /// The suffix (s_start, ..., s_{l-1}).
  Trajectory suffix(std::size_t start) const {
    Trajectory out;
    out.states.assign(states.begin() + static_cast<std::ptrdiff_t>(start), states.end());
    if (!actions.empty())
      out.actions.assign(actions.begin() + static_cast<std::ptrdiff_t>(start), actions.end());
    return out;
  }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Throws if `traj` violates the cut-off invariants for `mdp`.
inline void check_trajectory(const TabularMdp& mdp, const Trajectory& traj) {
  const std::size_t len = traj.length();
  if (len == 0 || len > static_cast<std::size_t>(mdp.horizon()) + 1)
    throw ConfigError("trajectory length outside [1, horizon+1]");
  for (std::size_t t = 0; t < len; ++t) {
    const StateId s = traj.states[t];
    if (s < 0 || s >= mdp.n_states()) throw ConfigError("trajectory state out of range");
    if (t + 1 < len && mdp.is_terminal(s)) throw ConfigError("trajectory continues past a terminal state");
  }
  if (!traj.actions.empty() && traj.actions.size() + 1 != len)
    throw ConfigError("trajectory action count must be length - 1");
}

inline void check_dimensions(const TabularMdp& mdp, const TabularPolicy& policy) {
  if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
    throw ConfigError("policy dimensions do not match the MDP");
}

/// Rolls out one trajectory under the cut-off map.
inline Trajectory sample_trajectory(const TabularMdp& mdp, const TabularPolicy& policy, Rng& rng) {
  check_dimensions(mdp, policy);
  Trajectory traj;
  StateId s = static_cast<StateId>(sample_categorical(rng, mdp.initial_dist()));
  traj.states.push_back(s);
  std::vector<double> next_probs;
  for (int t = 0; t < mdp.horizon() && !mdp.is_terminal(s); ++t) {
    const auto a = static_cast<ActionId>(sample_categorical(rng, policy.row(s)));
    const auto& succ = mdp.successors(s, a);
    next_probs.clear();
    for (const auto& x : succ) next_probs.push_back(x.prob);
    s = succ[sample_categorical(rng, next_probs)].state;
    traj.actions.push_back(a);
    traj.states.push_back(s);
  }
  return traj;
}

inline Trajectory sample_trajectory(const TabularMdp& mdp, const TabularPolicy& policy,
                                    std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return sample_trajectory(mdp, policy, rng);
}

struct WeightedTrajectory {
  Trajectory traj;
  double prob;
};

inline constexpr std::size_t kDefaultNodeBudget = 1'000'000;

/// All cut-off trajectories (as state sequences) with their probabilities.
///
/// Depth-first expansion over initial states, actions and successors;
/// branches whose probability falls below `prob_floor` are pruned. Action
/// choices that yield the same state sequence are merged. Output is sorted
/// lexicographically by state sequence.
inline std::vector<WeightedTrajectory> enumerate_trajectories(const TabularMdp& mdp,
                                                              const TabularPolicy& policy,
                                                              double prob_floor = 0.0,
                                                              std::size_t node_budget = kDefaultNodeBudget) {
  check_dimensions(mdp, policy);
  if (prob_floor < 0.0) throw ConfigError("enumerate_trajectories: negative prob_floor");
  std::map<std::vector<StateId>, double> found;
  std::size_t nodes = 0;
  std::vector<StateId> path;

  auto expand = [&](auto& self, double prob) -> void {
    if (++nodes > node_budget)
      throw BudgetExceeded("enumerate_trajectories: node budget exceeded", static_cast<double>(nodes));
    const StateId s = path.back();
    const int steps = static_cast<int>(path.size()) - 1;
    if (mdp.is_terminal(s) || steps == mdp.horizon()) {
      found[path] += prob;
      return;
    }
    // Aggregate over actions first so that identical successors merge early.
    std::map<StateId, double> next;
    for (ActionId a = 0; a < mdp.n_actions(); ++a) {
      const double pa = policy.prob(s, a);
      if (pa == 0.0) continue;
      for (const auto& succ : mdp.successors(s, a))
        if (succ.prob > 0.0) next[succ.state] += pa * succ.prob;
    }
    for (const auto& [ns, p] : next) {
      const double child = prob * p;
      if (child < prob_floor || child == 0.0) continue;
      path.push_back(ns);
      self(self, child);
      path.pop_back();
    }
  };

  for (StateId s0 = 0; s0 < mdp.n_states(); ++s0) {
    const double p0 = mdp.initial_dist()[static_cast<std::size_t>(s0)];
    if (p0 == 0.0 || p0 < prob_floor) continue;
    path.assign(1, s0);
    expand(expand, p0);
  }

  std::vector<WeightedTrajectory> out;
  out.reserve(found.size());
  for (auto& [states, p] : found) out.push_back({Trajectory{states, {}}, p});
  return out;
}

struct ValueIterationResult {
  TabularPolicy policy;
  std::vector<double> values;
  double residual;
  int iterations;
};

namespace detail {

/// Expected next-state value per action.
inline double action_value(const TabularMdp& mdp, StateId s, ActionId a, const std::vector<double>& v) {
  double q = 0.0;
  for (const auto& succ : mdp.successors(s, a)) q += succ.prob * v[static_cast<std::size_t>(succ.state)];
  return q;
}

/// One Bellman optimality backup. Terminal states keep V = R (reward
/// collected once on entry); others get R(s) + gamma * max_a E[V(s')].
inline std::vector<double> bellman_backup(const TabularMdp& mdp, const std::vector<double>& reward,
                                          double gamma, const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (StateId s = 0; s < mdp.n_states(); ++s) {
    const auto i = static_cast<std::size_t>(s);
    if (mdp.is_terminal(s)) {
      out[i] = reward[i];
      continue;
    }
    double best = action_value(mdp, s, 0, v);
    for (ActionId a = 1; a < mdp.n_actions(); ++a) best = std::max(best, action_value(mdp, s, a, v));
    out[i] = reward[i] + gamma * best;
  }
  return out;
}

inline double sup_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace detail

/// Greedy deterministic policy for `values`; ties go to the lowest action.
inline TabularPolicy greedy_policy(const TabularMdp& mdp, const std::vector<double>& values) {
  std::vector<ActionId> actions(static_cast<std::size_t>(mdp.n_states()), 0);
  for (StateId s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    double best = detail::action_value(mdp, s, 0, values);
    for (ActionId a = 1; a < mdp.n_actions(); ++a) {
      const double q = detail::action_value(mdp, s, a, values);
      // Relative slack so rounding noise never flips a tie.
      if (q > best + 1e-12 * std::max(1.0, std::abs(best))) {
        best = q;
        actions[static_cast<std::size_t>(s)] = a;
      }
    }
  }
  return TabularPolicy::deterministic(actions, mdp.n_actions());
}

/// Discounted value iteration on a state reward vector.
///
/// Iterates until the Bellman residual ||V - B(V)||_inf drops below `tol`.
inline ValueIterationResult value_iteration(const TabularMdp& mdp, const std::vector<double>& reward,
                                            double gamma, double tol = 1e-10, int max_iters = 1'000'000) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("value_iteration: gamma must lie in [0,1)");
  if (reward.size() != static_cast<std::size_t>(mdp.n_states()))
    throw ConfigError("value_iteration: reward size mismatch");
  std::vector<double> v = reward;
  double residual = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    std::vector<double> next = detail::bellman_backup(mdp, reward, gamma, v);
    residual = detail::sup_distance(next, v);
    v = std::move(next);
    if (residual < tol) {
      // Report the residual of the returned vector itself.
      residual = detail::sup_distance(detail::bellman_backup(mdp, reward, gamma, v), v);
      return {greedy_policy(mdp, v), std::move(v), residual, it + 1};
    }
  }
  throw NumericalError("value_iteration: no convergence, residual " + std::to_string(residual), residual);
}

/// Exact discounted value of `policy` (iterative evaluation to `tol`).
inline std::vector<double> evaluate_policy(const TabularMdp& mdp, const TabularPolicy& policy,
                                           const std::vector<double>& reward, double gamma,
                                           double tol = 1e-12, int max_iters = 1'000'000) {
  check_dimensions(mdp, policy);
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("evaluate_policy: gamma must lie in [0,1)");
  std::vector<double> v = reward;
  for (int it = 0; it < max_iters; ++it) {
    std::vector<double> next(v.size());
    for (StateId s = 0; s < mdp.n_states(); ++s) {
      const auto i = static_cast<std::size_t>(s);
      if (mdp.is_terminal(s)) {
        next[i] = reward[i];
        continue;
      }
      double q = 0.0;
      for (ActionId a = 0; a < mdp.n_actions(); ++a) {
        const double pa = policy.prob(s, a);
        if (pa != 0.0) q += pa * detail::action_value(mdp, s, a, v);
      }
      next[i] = reward[i] + gamma * q;
    }
    const double d = detail::sup_distance(next, v);
    v = std::move(next);
    if (d < tol) return v;
  }
  throw NumericalError("evaluate_policy: no convergence");
}

/// Expected value under the initial distribution.
inline double initial_value(const TabularMdp& mdp, const std::vector<double>& values) {
  double out = 0.0;
  for (std::size_t s = 0; s < values.size(); ++s) out += mdp.initial_dist()[s] * values[s];
  return out;
}

}  // namespace optprof
