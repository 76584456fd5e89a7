#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "optprof/error.hpp"
#include "optprof/mdp.hpp"

namespace optprof {

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct RewardCell {
  Cell cell;
  double reward = 0.0;
};

/// Builder input for 4-neighbour gridworlds. Cells map to states row-major
/// (state = y * width + x); y grows downward.
struct GridworldSpec {
  int width = 1;
  int height = 1;
  std::vector<RewardCell> goal_cells;
  std::vector<RewardCell> fail_cells;
  double step_reward = 0.0;
  double slip_prob = 0.0;
  std::vector<Cell> start_cells;
  int horizon = 10;

  StateId state_of(Cell c) const { return c.y * width + c.x; }
  Cell cell_of(StateId s) const { return {s % width, s / width}; }
  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
};

/// Action indices: up, down, left, right.
enum Move : ActionId { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr int kNumMoves = 4;

inline Cell apply_move(const GridworldSpec& spec, Cell c, ActionId a) {
  static constexpr int dx[kNumMoves] = {0, 0, -1, 1};
  static constexpr int dy[kNumMoves] = {-1, 1, 0, 0};
  const Cell next{c.x + dx[a], c.y + dy[a]};
  return spec.in_bounds(next) ? next : c;
}

inline void validate(const GridworldSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0) throw ConfigError("gridworld: width and height must be positive");
  if (!(spec.slip_prob >= 0.0 && spec.slip_prob <= 1.0)) throw ConfigError("gridworld: slip_prob outside [0,1]");
  if (spec.horizon <= 0) throw ConfigError("gridworld: horizon must be positive");
  if (spec.start_cells.empty()) throw ConfigError("gridworld: empty start set");
  std::set<Cell> goals;
  for (const auto& g : spec.goal_cells) {
    if (!spec.in_bounds(g.cell)) throw ConfigError("gridworld: goal cell out of bounds");
    goals.insert(g.cell);
  }
  for (const auto& f : spec.fail_cells) {
    if (!spec.in_bounds(f.cell)) throw ConfigError("gridworld: fail cell out of bounds");
    if (goals.count(f.cell)) throw ConfigError("gridworld: goal and fail cells overlap");
  }
  for (const auto& c : spec.start_cells)
    if (!spec.in_bounds(c)) throw ConfigError("gridworld: start cell out of bounds");
}

/// Builds the MDP: intended move with probability 1 - slip, otherwise a
/// uniformly random move. Goal and fail cells are absorbing terminals.
inline TabularMdp build_gridworld(const GridworldSpec& spec) {
  validate(spec);
  const int n = spec.width * spec.height;
  std::vector<double> reward(static_cast<std::size_t>(n), spec.step_reward);
  std::set<StateId> terminals;
  for (const auto& g : spec.goal_cells) {
    reward[static_cast<std::size_t>(spec.state_of(g.cell))] = g.reward;
    terminals.insert(spec.state_of(g.cell));
  }
  for (const auto& f : spec.fail_cells) {
    reward[static_cast<std::size_t>(spec.state_of(f.cell))] = f.reward;
    terminals.insert(spec.state_of(f.cell));
  }

  std::vector<std::vector<Successor>> transitions;
  transitions.reserve(static_cast<std::size_t>(n * kNumMoves));
  for (StateId s = 0; s < n; ++s) {
    const Cell c = spec.cell_of(s);
    for (ActionId a = 0; a < kNumMoves; ++a) {
      if (terminals.count(s)) {
        transitions.push_back({{s, 1.0}});
        continue;
      }
      std::vector<double> probs(static_cast<std::size_t>(n), 0.0);
      probs[static_cast<std::size_t>(spec.state_of(apply_move(spec, c, a)))] += 1.0 - spec.slip_prob;
      for (ActionId b = 0; b < kNumMoves; ++b)
        probs[static_cast<std::size_t>(spec.state_of(apply_move(spec, c, b)))] += spec.slip_prob / kNumMoves;
      std::vector<Successor> row;
      for (StateId t = 0; t < n; ++t)
        if (probs[static_cast<std::size_t>(t)] > 0.0) row.push_back({t, probs[static_cast<std::size_t>(t)]});
      transitions.push_back(std::move(row));
    }
  }

  std::vector<double> initial(static_cast<std::size_t>(n), 0.0);
  std::set<Cell> starts(spec.start_cells.begin(), spec.start_cells.end());
  for (const auto& c : starts)
    initial[static_cast<std::size_t>(spec.state_of(c))] = 1.0 / static_cast<double>(starts.size());

  return TabularMdp(n, kNumMoves, std::move(transitions), std::move(initial), std::move(reward),
                    std::move(terminals), spec.horizon);
}

/// Per-state features: normalized x, normalized y, then one indicator per
/// goal cell and per fail cell (in declaration order).
inline std::vector<std::vector<double>> gridworld_features(const GridworldSpec& spec) {
  validate(spec);
  const int n = spec.width * spec.height;
  std::vector<std::vector<double>> features;
  features.reserve(static_cast<std::size_t>(n));
  for (StateId s = 0; s < n; ++s) {
    const Cell c = spec.cell_of(s);
    std::vector<double> f;
    f.push_back(spec.width > 1 ? static_cast<double>(c.x) / (spec.width - 1) : 0.0);
    f.push_back(spec.height > 1 ? static_cast<double>(c.y) / (spec.height - 1) : 0.0);
    for (const auto& g : spec.goal_cells) f.push_back(g.cell == c ? 1.0 : 0.0);
    for (const auto& fl : spec.fail_cells) f.push_back(fl.cell == c ? 1.0 : 0.0);
    features.push_back(std::move(f));
  }
  return features;
}

namespace envs {

/// One-row corridor: fail (-10) at the left end, goal (+10) at the right end,
/// zero reward elsewhere.
inline GridworldSpec figure1_corridor(int length = 12, double slip = 0.1) {
  if (length < 3) throw ConfigError("figure1_corridor: length must be at least 3");
  GridworldSpec spec;
  spec.width = length;
  spec.height = 1;
  spec.goal_cells = {{{length - 1, 0}, 10.0}};
  spec.fail_cells = {{{0, 0}, -10.0}};
  spec.step_reward = 0.0;
  spec.slip_prob = slip;
  spec.start_cells = {{length / 3, 0}};
  spec.horizon = 3 * length;
  return spec;
}

/// Two arms from the lower-left start: one step up reaches a terminal,
/// seven steps right reach the other. Deterministic moves.
inline GridworldSpec two_corridor() {
  GridworldSpec spec;
  spec.width = 8;
  spec.height = 2;
  spec.goal_cells = {{{0, 0}, 10.0}};
  spec.fail_cells = {{{7, 1}, -10.0}};
  spec.step_reward = 0.0;
  spec.slip_prob = 0.0;
  spec.start_cells = {{0, 1}};
  spec.horizon = 10;
  return spec;
}

/// The two-arm policy: up with probability 0.8 at the start, right
/// everywhere along the bottom row, uniform elsewhere.
inline TabularPolicy two_corridor_policy(const GridworldSpec& spec) {
  const int n = spec.width * spec.height;
  std::vector<std::vector<double>> probs(static_cast<std::size_t>(n), std::vector<double>(kNumMoves, 0.25));
  for (int x = 0; x < spec.width; ++x) probs[static_cast<std::size_t>(spec.state_of({x, 1}))] = {0, 0, 0, 1};
  probs[static_cast<std::size_t>(spec.state_of({0, 1}))] = {0.8, 0, 0, 0.2};
  return TabularPolicy(std::move(probs));
}

/// 10x10 world, start top-left, goal (+10) bottom-right, fail (-10) in the
/// middle, a small cost per non-terminal step.
inline GridworldSpec grid10(double slip = 0.0, double step_reward = -0.25) {
  GridworldSpec spec;
  spec.width = 10;
  spec.height = 10;
  spec.goal_cells = {{{9, 9}, 10.0}};
  spec.fail_cells = {{{5, 5}, -10.0}};
  spec.step_reward = step_reward;
  spec.slip_prob = slip;
  spec.start_cells = {{0, 0}};
  spec.horizon = 60;
  return spec;
}

inline GridworldSpec by_name(const std::string& name) {
  if (name == "figure1") return figure1_corridor();
  if (name == "two-corridor") return two_corridor();
  if (name == "grid10") return grid10();
  throw ConfigError("unknown environment '" + name + "' (expected figure1, two-corridor, grid10)");
}

}  // namespace envs

}  // namespace optprof
