#pragma once

// JSON / JSON-lines / CSV persistence for every run-directory artifact.
// Each JSON document carries {"schema": <name>, "schema_version": <int>};
// readers reject documents with a different name or a newer version.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <set>
#include <span>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "optprof/distributions.hpp"
#include "optprof/error.hpp"
#include "optprof/eval.hpp"
#include "optprof/gridworld.hpp"
#include "optprof/losses.hpp"
#include "optprof/mdp.hpp"
#include "optprof/reward_model.hpp"
#include "optprof/trainer.hpp"

namespace optprof::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Files

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return ss.str();
}

/// Writes through a sibling temporary and renames, so readers never see a
/// half-written file.
inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failure on '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(origin + ": malformed JSON: " + e.what());
  }
}

inline json read_json(const std::filesystem::path& path) { return parse_json(read_text(path), path.string()); }

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json stamped(const std::string& schema) { return json{{"schema", schema}, {"schema_version", kSchemaVersion}}; }

inline void check_schema(const json& j, const std::string& schema) {
  if (!j.is_object()) throw IoError(schema + ": expected a JSON object");
  if (!j.contains("schema") || j["schema"] != schema)
    throw IoError("expected a '" + schema + "' document, found " +
                  (j.contains("schema") ? "'" + j["schema"].dump() + "'" : std::string("no schema tag")));
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
    throw IoError(schema + ": missing schema_version");
  const int v = j["schema_version"].get<int>();
  if (v < 1 || v > kSchemaVersion)
    throw IoError(schema + ": unsupported schema_version " + std::to_string(v) + " (this build reads up to " +
                  std::to_string(kSchemaVersion) + ")");
}

/// Typed member access; structural problems surface as IoError.
template <class T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw IoError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw IoError(where + ": bad value for '" + key + "': " + e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

// ---------------------------------------------------------------------------
// Environments

inline json to_json(const GridworldSpec& g) {
  auto cells = [](const std::vector<RewardCell>& v) {
    json a = json::array();
    for (const auto& rc : v) a.push_back({{"x", rc.cell.x}, {"y", rc.cell.y}, {"reward", rc.reward}});
    return a;
  };
  json starts = json::array();
  for (const auto& c : g.start_cells) starts.push_back({{"x", c.x}, {"y", c.y}});
  json j = stamped("gridworld");
  j["width"] = g.width;
  j["height"] = g.height;
  j["goal_cells"] = cells(g.goal_cells);
  j["fail_cells"] = cells(g.fail_cells);
  j["step_reward"] = g.step_reward;
  j["slip_prob"] = g.slip_prob;
  j["start_cells"] = starts;
  j["horizon"] = g.horizon;
  return j;
}

inline GridworldSpec gridworld_from_json(const json& j) {
  check_schema(j, "gridworld");
  const std::string w = "gridworld";
  GridworldSpec g;
  g.width = get<int>(j, "width", w);
  g.height = get<int>(j, "height", w);
  auto cells = [&](const char* key) {
    std::vector<RewardCell> out;
    for (const auto& c : get<json>(j, key, w))
      out.push_back({{get<int>(c, "x", w), get<int>(c, "y", w)}, get<double>(c, "reward", w)});
    return out;
  };
  g.goal_cells = cells("goal_cells");
  g.fail_cells = cells("fail_cells");
  g.step_reward = get<double>(j, "step_reward", w);
  g.slip_prob = get<double>(j, "slip_prob", w);
  for (const auto& c : get<json>(j, "start_cells", w)) g.start_cells.push_back({get<int>(c, "x", w), get<int>(c, "y", w)});
  g.horizon = get<int>(j, "horizon", w);
  validate(g);
  return g;
}

/// Generic tabular MDP; transitions indexed [state * n_actions + action].
inline json to_json(const TabularMdp& m) {
  json j = stamped("mdp");
  j["n_states"] = m.n_states();
  j["n_actions"] = m.n_actions();
  json tr = json::array();
  for (StateId s = 0; s < m.n_states(); ++s)
    for (ActionId a = 0; a < m.n_actions(); ++a) {
      json row = json::array();
      for (const auto& succ : m.successors(s, a)) row.push_back({succ.state, succ.prob});
      tr.push_back(row);
    }
  j["transitions"] = tr;
  j["initial"] = m.initial_dist();
  j["gt_reward"] = m.gt_reward();
  j["terminals"] = std::vector<StateId>(m.terminals().begin(), m.terminals().end());
  j["horizon"] = m.horizon();
  return j;
}

inline TabularMdp mdp_from_json(const json& j) {
  check_schema(j, "mdp");
  const std::string w = "mdp";
  std::vector<std::vector<Successor>> tr;
  for (const auto& row : get<json>(j, "transitions", w)) {
    std::vector<Successor> r;
    for (const auto& e : row) {
      if (!e.is_array() || e.size() != 2) throw IoError("mdp: successor entries must be [state, prob]");
      r.push_back({e[0].get<StateId>(), e[1].get<double>()});
    }
    tr.push_back(std::move(r));
  }
  const auto terms = get<std::vector<StateId>>(j, "terminals", w);
  return TabularMdp(get<int>(j, "n_states", w), get<int>(j, "n_actions", w), std::move(tr),
                    get<std::vector<double>>(j, "initial", w), get<std::vector<double>>(j, "gt_reward", w),
                    std::set<StateId>(terms.begin(), terms.end()), get<int>(j, "horizon", w));
}

// ---------------------------------------------------------------------------
// Trajectories (one JSON object per line)

inline json to_json(const Trajectory& t) { return json{{"states", t.states}, {"actions", t.actions}}; }

inline void write_jsonl(std::ostream& os, std::span<const Trajectory> trajs) {
  for (const auto& t : trajs) os << to_json(t).dump() << '\n';
}

inline std::vector<Trajectory> read_jsonl(std::istream& is, const std::string& origin = "trajectories") {
  std::vector<Trajectory> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    const json j = parse_json(line, where);
    Trajectory t;
    t.states = get<std::vector<StateId>>(j, "states", where);
    t.actions = get<std::vector<ActionId>>(j, "actions", where);
    if (t.states.empty() || t.actions.size() + 1 != t.states.size())
      throw IoError(where + ": need n >= 1 states and n - 1 actions");
    out.push_back(std::move(t));
  }
  return out;
}

inline void write_trajectories(const std::filesystem::path& path, std::span<const Trajectory> trajs) {
  std::ostringstream ss;
  write_jsonl(ss, trajs);
  write_text(path, ss.str());
}

inline std::vector<Trajectory> read_trajectories(const std::filesystem::path& path) {
  std::istringstream ss(read_text(path));
  return read_jsonl(ss, path.string());
}

// ---------------------------------------------------------------------------
// Profiles

inline json to_json(const OptimalityProfile& p) {
  json atoms = json::array();
  for (const auto& a : p.atoms()) atoms.push_back({a.location, a.weight});
  json j = stamped("profile");
  j["atoms"] = atoms;
  return j;
}

/// Atoms need not be sorted or normalized; duplicates are merged.
inline OptimalityProfile profile_from_json(const json& j) {
  check_schema(j, "profile");
  std::vector<double> loc, w;
  for (const auto& a : get<json>(j, "atoms", "profile")) {
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
      throw IoError("profile: atoms must be [location, weight] pairs");
    loc.push_back(a[0].get<double>());
    w.push_back(a[1].get<double>());
  }
  return OptimalityProfile::from_weighted(loc, w);
}

/// `location,weight` rows after a header line.
inline OptimalityProfile read_profile_csv(std::istream& is, const std::string& origin = "profile csv") {
  std::string line;
  if (!std::getline(is, line)) throw IoError(origin + ": empty file");
  std::vector<double> loc, w;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError(origin + ":" + std::to_string(lineno) + ": expected location,weight");
    try {
      std::size_t used = 0;
      const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
      loc.push_back(std::stod(a, &used));
      if (a.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("trailing");
      w.push_back(std::stod(b, &used));
      if (b.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw IoError(origin + ":" + std::to_string(lineno) + ": unparsable number in '" + line + "'");
    }
  }
  if (loc.empty()) throw IoError(origin + ": no atoms");
  return OptimalityProfile::from_weighted(loc, w);
}

inline void write_profile_csv(std::ostream& os, const OptimalityProfile& p) {
  os.precision(17);
  os << "location,weight\n";
  for (const auto& a : p.atoms()) os << a.location << ',' << a.weight << '\n';
}

// ---------------------------------------------------------------------------
// Supervision (indices into the augmented dataset)

inline json to_json(const SupervisionSets& s) {
  json pairs = json::array(), fixed = json::array();
  for (const auto& [lo, hi] : s.pairs) pairs.push_back({lo, hi});
  for (const auto& f : s.fixed) fixed.push_back({f.index, f.label});
  json j = stamped("supervision");
  j["pairs"] = pairs;
  j["fixed"] = fixed;
  return j;
}

inline SupervisionSets supervision_from_json(const json& j) {
  check_schema(j, "supervision");
  SupervisionSets s;
  for (const auto& p : get_or<json>(j, "pairs", json::array(), "supervision")) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number_unsigned() || !p[1].is_number_unsigned())
      throw IoError("supervision: pairs must be [lower, higher] index pairs");
    s.pairs.push_back({p[0].get<std::size_t>(), p[1].get<std::size_t>()});
  }
  for (const auto& f : get_or<json>(j, "fixed", json::array(), "supervision")) {
    if (!f.is_array() || f.size() != 2 || !f[0].is_number_unsigned() || !f[1].is_number())
      throw IoError("supervision: fixed points must be [index, label] pairs");
    s.fixed.push_back({f[0].get<std::size_t>(), f[1].get<double>()});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Models and checkpoints

inline json to_json(const RewardModel& m) {
  json j = stamped("reward");
  j["kind"] = to_string(m.kind());
  j["n_states"] = m.n_states();
  if (m.kind() == ModelKind::kMlp) {
    j["hidden"] = m.hidden();
    j["input_dim"] = m.input_dim();
    j["features"] = m.features();
  }
  j["params"] = m.params();
  j["standardization"] = {{"scale", m.standardization().scale}, {"shift", m.standardization().shift}};
  return j;
}

inline RewardModel model_from_json(const json& j) {
  check_schema(j, "reward");
  const std::string w = "reward";
  ModelKind kind;
  try {
    kind = parse_model_kind(get<std::string>(j, "kind", w));
  } catch (const ConfigError& e) {
    throw IoError(std::string("reward: ") + e.what());
  }
  const auto st = get<json>(j, "standardization", w);
  const Standardization stdz{get<double>(st, "scale", w), get<double>(st, "shift", w)};
  std::vector<std::vector<double>> features;
  int hidden = 0;
  if (kind == ModelKind::kMlp) {
    features = get<std::vector<std::vector<double>>>(j, "features", w);
    hidden = get<int>(j, "hidden", w);
  }
  try {
    return RewardModel::restore(kind, get<int>(j, "n_states", w), hidden, std::move(features),
                                get<std::vector<double>>(j, "params", w), stdz);
  } catch (const ConfigError& e) {
    throw IoError(std::string("reward: ") + e.what());
  }
}

inline json to_json(const EpochRecord& r) {
  return json{r.epoch, r.l_ot, r.l_pw, r.l_fix, r.l_tot, r.lr, r.lambda, r.grad_norm};
}

/// Model, optimizer moments, step and epoch counters, and the log so far.
inline json to_json(const TrainState& st) {
  json j = stamped("checkpoint");
  j["epoch"] = st.epoch;
  j["step"] = st.step;
  j["model"] = to_json(st.model);
  j["moment1"] = st.moment1;
  j["moment2"] = st.moment2;
  json log = json::array();
  for (const auto& r : st.log) log.push_back(to_json(r));
  j["log"] = log;
  return j;
}

inline TrainState checkpoint_from_json(const json& j) {
  check_schema(j, "checkpoint");
  const std::string w = "checkpoint";
  TrainState st{model_from_json(get<json>(j, "model", w)), get<std::vector<double>>(j, "moment1", w),
                get<std::vector<double>>(j, "moment2", w), get<long>(j, "step", w), get<int>(j, "epoch", w), {}};
  for (const auto& r : get<json>(j, "log", w)) {
    if (!r.is_array() || r.size() != 8) throw IoError("checkpoint: log rows must have 8 entries");
    st.log.push_back({r[0].get<int>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>(), r[4].get<double>(),
                      r[5].get<double>(), r[6].get<double>(), r[7].get<double>()});
  }
  if (st.moment1.size() != st.model.n_params() || st.moment2.size() != st.model.n_params())
    throw IoError("checkpoint: optimizer state does not match the model");
  if (static_cast<int>(st.log.size()) != st.epoch) throw IoError("checkpoint: log length differs from epoch count");
  return st;
}

// ---------------------------------------------------------------------------
// Reports

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json to_json(const EvalReport& r) {
  json j = stamped("report");
  j["pearson_returns"] = optional_number(r.pearson_returns);
  j["pearson_states"] = optional_number(r.pearson_states);
  j["gt_return_of_reoptimized_policy"] = optional_number(r.gt_return_of_reoptimized_policy);
  j["gt_return_of_best_demo"] = optional_number(r.gt_return_of_best_demo);
  json rows = json::array();
  for (const auto& p : r.per_trajectory) rows.push_back({p.gt, p.learned});
  j["per_trajectory"] = rows;
  return j;
}

inline EvalReport report_from_json(const json& j) {
  check_schema(j, "report");
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return get<double>(j, key, "report");
  };
  EvalReport r;
  r.pearson_returns = opt("pearson_returns");
  r.pearson_states = opt("pearson_states");
  r.gt_return_of_reoptimized_policy = opt("gt_return_of_reoptimized_policy");
  r.gt_return_of_best_demo = opt("gt_return_of_best_demo");
  for (const auto& p : get_or<json>(j, "per_trajectory", json::array(), "report"))
    r.per_trajectory.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return r;
}

inline void write_returns_csv(std::ostream& os, const EvalReport& r) {
  os.precision(17);
  os << "trajectory,gt_return,learned_return\n";
  for (std::size_t i = 0; i < r.per_trajectory.size(); ++i)
    os << i << ',' << r.per_trajectory[i].gt << ',' << r.per_trajectory[i].learned << '\n';
}

}  // namespace optprof::io
