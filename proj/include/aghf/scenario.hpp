#pragma once

// Scenario configuration (flat key = value text), built-in scenarios and the
// plan / sweep / audit pipelines behind the command-line tool.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "aghf/io.hpp"

#ifndef AGHF_VERSION
#define AGHF_VERSION "0.0.0"
#endif

namespace aghf {

inline constexpr const char* kOutputDirEnv = "AGHF_OUTPUT_DIR";

enum class SystemKind { kLegged, kUnicycle, kDoubleIntegrator };

struct ScenarioConfig {
  std::string name = "custom";
  SystemKind system = SystemKind::kLegged;
  RobotParams robot;

  std::string terrain = "flat";  ///< flat | sinusoid | table
  double terrain_amplitude = 0.1;
  double terrain_frequency = 4.0 * std::numbers::pi;
  std::string terrain_table;     ///< file of "x height" lines

  double horizon = 2.0;
  int hops = 3;
  std::vector<double> offsets;   ///< per leg, default 0
  bool land_at_end = true;
  /// Explicit (leg, interval) list; replaces the hop schedule when non-empty.
  std::vector<std::pair<int, StanceInterval>> stances;

  std::vector<std::optional<double>> x_init;
  std::vector<std::optional<double>> x_fin;
  /// (state, start, end) values for free entries of the initial curve.
  std::vector<std::tuple<int, double, double>> anchors;
  std::vector<CurveHints::Bump> bumps;

  double lambda = 1e6;
  std::optional<double> constraint_weight;  ///< default lambda_j, else lambda
  std::map<std::string, double> weights;    ///< per-constraint overrides
  bool torso_collision = false;
  double torso_band = 0.1;
  SmoothingParams smoothing;

  int nodes = 801;
  SolverConfig solver;
  AuditTolerances tolerances;
  double final_state_tol = 0.05;
  std::string output_dir = "out";
  /// Directory of the config file, for relative paths.
  std::filesystem::path base_dir;

  int state_dim() const {
    switch (system) {
      case SystemKind::kLegged:
        return StateLayout(robot.legs).state_dim();
      case SystemKind::kUnicycle:
        return 3;
      case SystemKind::kDoubleIntegrator:
        return 2;
    }
    return 0;
  }
};

inline std::vector<std::string> state_names(const ScenarioConfig& cfg) {
  std::vector<std::string> names;
  switch (cfg.system) {
    case SystemKind::kLegged: {
      const StateLayout layout(cfg.robot.legs);
      for (int i = 0; i < layout.state_dim(); ++i) names.push_back(layout.state_name(i));
      break;
    }
    case SystemKind::kUnicycle:
      names = {"x", "y", "theta"};
      break;
    case SystemKind::kDoubleIntegrator:
      names = {"q", "qdot"};
      break;
  }
  return names;
}

inline std::vector<std::string> control_names(const ScenarioConfig& cfg) {
  std::vector<std::string> names;
  switch (cfg.system) {
    case SystemKind::kLegged: {
      const StateLayout layout(cfg.robot.legs);
      for (int i = 0; i < layout.control_dim(); ++i) names.push_back(layout.control_name(i));
      break;
    }
    case SystemKind::kUnicycle:
      names = {"v", "omega"};
      break;
    case SystemKind::kDoubleIntegrator:
      names = {"a"};
      break;
  }
  return names;
}

/// Text of a built-in scenario, in the config format.
inline std::optional<std::string> builtin_scenario(const std::string& name) {
  if (name == "oneleg") {
    return R"(system = legged
legs = 1
mass = 2
inertia = 1
friction = 1
reach = 1
com_clearance = 0.3
terrain = flat
horizon = 2
hops = 3
land_at_end = true
x_init = 0 0.75 0 0.5 0 0 . . 0 0
x_fin = 1.5 0.75 0 0.5 0 0 . . 1.5 0
anchor = f1y 19.62 19.62
lambda = 1e7
constraint_weight = 1e9
nodes = 801
s_max = 1e6
)";
  }
  if (name == "twoleg") {
    return R"(system = legged
legs = 2
mass = 2
inertia = 1
friction = 1
reach = 1
com_clearance = 0.3
terrain = sinusoid
terrain_amplitude = 0.1
terrain_frequency = 12.566370614359172
horizon = 2
hops = 3
land_at_end = true
offset = 0
offset = -0.05
x_init = 0 0.85 0 0.5 0 0 . . 0 . . . 0 .
x_fin = 2 0.85 0 0.5 0 0 . . 2 . . . 2 .
anchor = p1y 0.1 0.1
anchor = p2y 0.1 0.1
anchor = f1y 9.81 9.81
anchor = f2y 9.81 9.81
lambda = 1e6
constraint_weight = 1e9
nodes = 801
s_max = 1e6
)";
  }
  if (name == "unicycle") {
    return R"(system = unicycle
horizon = 1
x_init = 0 0 0
x_fin = 0 1 0
bump = theta 0.5
lambda = 1e4
nodes = 101
s_max = 1e6
)";
  }
  return std::nullopt;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

inline double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + text + "'");
  }
  if (used != text.size()) throw ConfigError(key, "expected a number, got '" + text + "'");
  if (!std::isfinite(v)) throw ConfigError(key, "must be finite");
  return v;
}

inline long parse_long(const std::string& key, const std::string& text) {
  const double v = parse_double(key, text);
  if (v != std::floor(v)) throw ConfigError(key, "expected an integer, got '" + text + "'");
  return static_cast<long>(v);
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + text + "'");
}

inline std::vector<double> parse_numbers(const std::string& key, const std::string& text,
                                         std::size_t count) {
  const auto words = split_words(text);
  if (words.size() != count)
    throw ConfigError(key, "expected " + std::to_string(count) + " values, got " +
                               std::to_string(words.size()));
  std::vector<double> out;
  for (const auto& w : words) out.push_back(parse_double(key, w));
  return out;
}

inline std::vector<std::optional<double>> parse_boundary(const std::string& key,
                                                         const std::string& text) {
  std::vector<std::optional<double>> out;
  for (const auto& w : split_words(text)) {
    if (w == "." || w == "·" || w == "free")
      out.emplace_back(std::nullopt);
    else
      out.emplace_back(parse_double(key, w));
  }
  if (out.empty()) throw ConfigError(key, "empty boundary vector");
  return out;
}

struct Entry {
  std::string key;
  std::string value;
  int line;
};

inline std::vector<Entry> tokenize(const std::string& text) {
  std::vector<Entry> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(number), "expected 'key = value'");
    out.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1)), number});
    if (out.back().key.empty())
      throw ConfigError("line " + std::to_string(number), "missing key");
  }
  return out;
}

inline int resolve_state(const ScenarioConfig& cfg, const std::string& key,
                         const std::string& word) {
  const auto names = state_names(cfg);
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == word) return static_cast<int>(i);
  try {
    const long idx = parse_long(key, word);
    if (idx >= 1 && idx <= static_cast<long>(names.size())) return static_cast<int>(idx - 1);
  } catch (const ConfigError&) {
  }
  throw ConfigError(key, "unknown state '" + word + "'");
}

inline void apply(ScenarioConfig& cfg, const Entry& e) {
  const auto& k = e.key;
  const auto& v = e.value;
  auto num = [&] { return parse_double(k, v); };
  if (k == "scenario") {
    // handled before the other keys
  } else if (k == "name") {
    cfg.name = v;
  } else if (k == "system") {
    if (v == "legged") cfg.system = SystemKind::kLegged;
    else if (v == "unicycle") cfg.system = SystemKind::kUnicycle;
    else if (v == "double_integrator") cfg.system = SystemKind::kDoubleIntegrator;
    else throw ConfigError(k, "unknown system '" + v + "'");
  } else if (k == "legs") {
    cfg.robot.legs = static_cast<int>(parse_long(k, v));
  } else if (k == "mass") {
    cfg.robot.mass = num();
  } else if (k == "inertia") {
    cfg.robot.inertia = num();
  } else if (k == "gravity") {
    cfg.robot.gravity = num();
  } else if (k == "friction") {
    cfg.robot.friction = num();
  } else if (k == "reach") {
    cfg.robot.kinematic_radius = num();
  } else if (k == "com_clearance") {
    cfg.robot.min_com_clearance = num();
  } else if (k == "terrain") {
    if (v != "flat" && v != "sinusoid" && v != "table")
      throw ConfigError(k, "unknown terrain '" + v + "'");
    cfg.terrain = v;
  } else if (k == "terrain_amplitude") {
    cfg.terrain_amplitude = num();
  } else if (k == "terrain_frequency") {
    cfg.terrain_frequency = num();
  } else if (k == "terrain_table") {
    cfg.terrain_table = v;
  } else if (k == "horizon") {
    cfg.horizon = num();
  } else if (k == "hops") {
    cfg.hops = static_cast<int>(parse_long(k, v));
  } else if (k == "offset") {
    cfg.offsets.push_back(num());
  } else if (k == "land_at_end") {
    cfg.land_at_end = parse_bool(k, v);
  } else if (k == "stance") {
    const auto w = parse_numbers(k, v, 3);
    if (w[0] != std::floor(w[0]) || w[0] < 1) throw ConfigError(k, "leg must be a positive integer");
    cfg.stances.push_back({static_cast<int>(w[0]) - 1, {w[1], w[2]}});
  } else if (k == "x_init") {
    cfg.x_init = parse_boundary(k, v);
  } else if (k == "x_fin") {
    cfg.x_fin = parse_boundary(k, v);
  } else if (k == "anchor") {
    const auto w = split_words(v);
    if (w.size() != 3) throw ConfigError(k, "expected '<state> <start> <end>'");
    cfg.anchors.emplace_back(resolve_state(cfg, k, w[0]), parse_double(k, w[1]),
                             parse_double(k, w[2]));
  } else if (k == "bump") {
    const auto w = split_words(v);
    if (w.size() != 2) throw ConfigError(k, "expected '<state> <amplitude>'");
    cfg.bumps.push_back({resolve_state(cfg, k, w[0]), parse_double(k, w[1])});
  } else if (k == "lambda") {
    cfg.lambda = num();
  } else if (k == "constraint_weight") {
    cfg.constraint_weight = num();
  } else if (k == "weight") {
    const auto w = split_words(v);
    if (w.size() != 2) throw ConfigError(k, "expected '<constraint id> <weight>'");
    cfg.weights[w[0]] = parse_double(k, w[1]);
  } else if (k == "torso_collision") {
    cfg.torso_collision = parse_bool(k, v);
  } else if (k == "torso_band") {
    cfg.torso_band = num();
  } else if (k == "alpha") {
    cfg.smoothing.alpha = num();
  } else if (k == "beta") {
    cfg.smoothing.beta = num();
  } else if (k == "nodes") {
    cfg.nodes = static_cast<int>(parse_long(k, v));
  } else if (k == "stepper") {
    if (v == "explicit") cfg.solver.stepper = Stepper::kExplicitEuler;
    else if (v == "implicit") cfg.solver.stepper = Stepper::kLinearlyImplicit;
    else throw ConfigError(k, "expected explicit or implicit");
  } else if (k == "s_max") {
    cfg.solver.s_max = num();
  } else if (k == "ds_initial") {
    cfg.solver.ds_initial = num();
  } else if (k == "ds_min") {
    cfg.solver.ds_min = num();
  } else if (k == "ds_max") {
    cfg.solver.ds_max = num();
  } else if (k == "ds_growth") {
    cfg.solver.growth = num();
  } else if (k == "ds_shrink") {
    cfg.solver.shrink = num();
  } else if (k == "model_margin") {
    cfg.solver.model_margin = num();
  } else if (k == "stationarity_tol") {
    cfg.solver.stationarity_tol = num();
  } else if (k == "max_steps") {
    cfg.solver.max_steps = parse_long(k, v);
  } else if (k == "energy_slack") {
    cfg.solver.energy_slack = num();
  } else if (k == "free_boundary") {
    if (v == "natural") cfg.solver.free_boundary = FreeBoundaryMode::kNatural;
    else if (v == "projected") cfg.solver.free_boundary = FreeBoundaryMode::kProjected;
    else throw ConfigError(k, "expected natural or projected");
  } else if (k == "checkpoint") {
    cfg.solver.checkpoints.push_back(num());
  } else if (k == "audit_deep_phase") {
    cfg.tolerances.deep_phase = num();
  } else if (k == "audit_length_tol") {
    cfg.tolerances.length = num();
  } else if (k == "audit_force_tol") {
    cfg.tolerances.force = num();
  } else if (k == "audit_foot_drift") {
    cfg.tolerances.foot_drift = num();
  } else if (k == "audit_flight_force") {
    cfg.tolerances.flight_force = num();
  } else if (k == "final_state_tol") {
    cfg.final_state_tol = num();
  } else if (k == "output_dir") {
    cfg.output_dir = v;
  } else {
    throw ConfigError(k, "unknown key");
  }
}

}  // namespace detail

/// Structural checks that need the whole config.
inline void validate(const ScenarioConfig& cfg) {
  if (cfg.system == SystemKind::kLegged) cfg.robot.validate();
  cfg.smoothing.validate();
  cfg.solver.validate();
  if (!(cfg.horizon > 0)) throw ConfigError("horizon", "must be positive");
  if (cfg.nodes < 3) throw ConfigError("nodes", "need at least three time nodes");
  if (!(cfg.lambda > 0)) throw ConfigError("lambda", "must be positive");
  if (cfg.constraint_weight && !(*cfg.constraint_weight > 0))
    throw ConfigError("constraint_weight", "must be positive");
  for (const auto& [id, w] : cfg.weights)
    if (!(w > 0)) throw ConfigError("weight", "weight of " + id + " must be positive");
  const auto n = static_cast<std::size_t>(cfg.state_dim());
  if (cfg.x_init.size() != n)
    throw ConfigError("x_init", "expected " + std::to_string(n) + " entries, got " +
                                    std::to_string(cfg.x_init.size()));
  if (cfg.x_fin.size() != n)
    throw ConfigError("x_fin", "expected " + std::to_string(n) + " entries, got " +
                                   std::to_string(cfg.x_fin.size()));
  if (cfg.terrain == "table" && cfg.terrain_table.empty())
    throw ConfigError("terrain_table", "required for terrain = table");
  if (!std::isfinite(cfg.terrain_amplitude) || !std::isfinite(cfg.terrain_frequency))
    throw ConfigError("terrain", "parameters must be finite");
  if (cfg.system == SystemKind::kLegged) {
    if (cfg.offsets.size() > static_cast<std::size_t>(cfg.robot.legs))
      throw ConfigError("offset", "more offsets than legs");
    for (const auto& [leg, interval] : cfg.stances)
      if (leg >= cfg.robot.legs) throw ConfigError("stance", "leg index exceeds legs");
  }
  if (!(cfg.final_state_tol > 0)) throw ConfigError("final_state_tol", "must be positive");
}

/// Parse config text. A `scenario = <builtin>` line loads that scenario first;
/// every other key then overrides it in file order.
inline ScenarioConfig parse_config(const std::string& text, std::filesystem::path base_dir = {}) {
  ScenarioConfig cfg;
  cfg.base_dir = std::move(base_dir);
  const auto entries = detail::tokenize(text);
  for (const auto& e : entries) {
    if (e.key != "scenario") continue;
    const auto builtin = builtin_scenario(e.value);
    if (!builtin) throw ConfigError("scenario", "unknown built-in scenario '" + e.value + "'");
    for (const auto& b : detail::tokenize(*builtin)) detail::apply(cfg, b);
    cfg.name = e.value;
    cfg.output_dir = "out/" + e.value;
  }
  for (const auto& e : entries) detail::apply(cfg, e);
  validate(cfg);
  return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    // a bare built-in name works as a config
    if (const auto builtin = builtin_scenario(path.string()))
      return parse_config("scenario = " + path.string() + "\n");
    throw ConfigError("config", "file not found: " + path.string());
  }
  return parse_config(read_file(path), path.parent_path());
}

/// Resolved configuration, in a stable key order, for the manifest.
inline nlohmann::ordered_json config_echo(const ScenarioConfig& cfg) {
  using nlohmann::ordered_json;
  auto boundary = [](const std::vector<std::optional<double>>& v) {
    ordered_json a = ordered_json::array();
    for (const auto& x : v) a.push_back(x ? ordered_json(*x) : ordered_json(nullptr));
    return a;
  };
  const char* system = cfg.system == SystemKind::kLegged     ? "legged"
                       : cfg.system == SystemKind::kUnicycle ? "unicycle"
                                                             : "double_integrator";
  ordered_json j;
  j["name"] = cfg.name;
  j["system"] = system;
  if (cfg.system == SystemKind::kLegged) {
    j["robot"] = {{"legs", cfg.robot.legs},
                  {"mass", cfg.robot.mass},
                  {"inertia", cfg.robot.inertia},
                  {"gravity", cfg.robot.gravity},
                  {"friction", cfg.robot.friction},
                  {"reach", cfg.robot.kinematic_radius},
                  {"com_clearance", cfg.robot.min_com_clearance}};
    j["terrain"] = {{"kind", cfg.terrain},
                    {"amplitude", cfg.terrain_amplitude},
                    {"frequency", cfg.terrain_frequency},
                    {"table", cfg.terrain_table}};
    j["hops"] = cfg.hops;
    j["offsets"] = cfg.offsets;
    j["land_at_end"] = cfg.land_at_end;
    ordered_json st = ordered_json::array();
    for (const auto& [leg, s] : cfg.stances) st.push_back({leg + 1, s.landing, s.takeoff});
    j["stances"] = st;
    j["constraint_weight"] = cfg.constraint_weight ? ordered_json(*cfg.constraint_weight)
                                                   : ordered_json(nullptr);
    j["weights"] = cfg.weights;
    j["torso_collision"] = cfg.torso_collision;
    j["alpha"] = cfg.smoothing.alpha;
    j["beta"] = cfg.smoothing.beta;
  }
  j["horizon"] = cfg.horizon;
  j["x_init"] = boundary(cfg.x_init);
  j["x_fin"] = boundary(cfg.x_fin);
  ordered_json anchors = ordered_json::array();
  const auto names = state_names(cfg);
  for (const auto& [k, a, b] : cfg.anchors) anchors.push_back({names[k], a, b});
  j["anchors"] = anchors;
  ordered_json bumps = ordered_json::array();
  for (const auto& b : cfg.bumps) bumps.push_back({names[b.state], b.amplitude});
  j["bumps"] = bumps;
  j["lambda"] = cfg.lambda;
  j["nodes"] = cfg.nodes;
  j["solver"] = {
      {"stepper", cfg.solver.stepper == Stepper::kExplicitEuler ? "explicit" : "implicit"},
      {"s_max", cfg.solver.s_max},
      {"ds_initial", cfg.solver.ds_initial},
      {"ds_min", cfg.solver.ds_min},
      {"ds_max", json_number(cfg.solver.ds_max)},
      {"ds_growth", cfg.solver.growth},
      {"ds_shrink", cfg.solver.shrink},
      {"stationarity_tol", cfg.solver.stationarity_tol ? ordered_json(*cfg.solver.stationarity_tol)
                                                       : ordered_json(nullptr)},
      {"max_steps", cfg.solver.max_steps},
      {"energy_slack", cfg.solver.energy_slack},
      {"model_margin", cfg.solver.model_margin},
      {"free_boundary",
       cfg.solver.free_boundary == FreeBoundaryMode::kNatural ? "natural" : "projected"},
      {"checkpoints", cfg.solver.checkpoints}};
  j["final_state_tol"] = cfg.final_state_tol;
  return j;
}

/// Everything needed to run the flow for one config.
struct Problem {
  std::shared_ptr<const ControlAffineSystem> system;
  std::shared_ptr<const Terrain> terrain;
  ContactSchedule schedule;
  std::vector<ConstraintSpec> constraints;
  std::unique_ptr<ActuatedLagrangian> lagrangian;
  BoundarySpec boundary;
  CurveHints hints;
};

inline std::shared_ptr<const Terrain> make_terrain(const ScenarioConfig& cfg) {
  if (cfg.terrain == "flat") return std::make_shared<Terrain>(Terrain::flat());
  if (cfg.terrain == "sinusoid")
    return std::make_shared<Terrain>(Terrain::sinusoid(cfg.terrain_amplitude, cfg.terrain_frequency));
  std::filesystem::path path = cfg.terrain_table;
  if (path.is_relative() && !cfg.base_dir.empty()) path = cfg.base_dir / path;
  std::istringstream in(read_file(path));
  std::vector<double> xs, ys;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto words = detail::split_words(line);
    if (words.empty()) continue;
    if (words.size() != 2) throw ConfigError("terrain_table", "expected 'x height' per line");
    xs.push_back(detail::parse_double("terrain_table", words[0]));
    ys.push_back(detail::parse_double("terrain_table", words[1]));
  }
  return std::make_shared<Terrain>(Terrain::table(std::move(xs), std::move(ys)));
}

inline ContactSchedule make_schedule(const ScenarioConfig& cfg) {
  if (cfg.system != SystemKind::kLegged) return ContactSchedule(cfg.horizon, {});
  std::vector<std::vector<StanceInterval>> legs(cfg.robot.legs);
  if (!cfg.stances.empty()) {
    for (const auto& [leg, interval] : cfg.stances) legs[leg].push_back(interval);
  } else {
    for (int leg = 0; leg < cfg.robot.legs; ++leg) {
      const double offset = leg < static_cast<int>(cfg.offsets.size()) ? cfg.offsets[leg] : 0.0;
      try {
        legs[leg] = equal_ratio_stances(cfg.hops, cfg.horizon, offset, cfg.land_at_end);
      } catch (const InvalidOffset& e) {
        throw ConfigError("offset", e.what());
      }
    }
  }
  return ContactSchedule(cfg.horizon, std::move(legs));
}

inline Problem build_problem(const ScenarioConfig& cfg) {
  validate(cfg);
  Problem p;
  p.schedule = make_schedule(cfg);
  const int n = cfg.state_dim();
  PenaltyMatrix penalty = PenaltyMatrix::uniform(n, n, cfg.lambda);
  switch (cfg.system) {
    case SystemKind::kLegged: {
      p.system = std::make_shared<LeggedSystem>(cfg.robot);
      p.terrain = make_terrain(cfg);
      LocomotionConstraintOptions options;
      options.weight = cfg.constraint_weight.value_or(cfg.lambda);
      options.torso_collision = cfg.torso_collision;
      options.torso_band = cfg.torso_band;
      p.constraints = build_locomotion_constraints(cfg.robot, p.terrain, options);
      for (const auto& [id, w] : cfg.weights) {
        bool found = false;
        for (auto& c : p.constraints) {
          if (c.id != id) continue;
          c.weight = w;
          found = true;
        }
        if (!found) throw ConfigError("weight", "no constraint named '" + id + "'");
      }
      penalty = PenaltyMatrix::legged(cfg.robot.legs, cfg.lambda, p.schedule, cfg.smoothing);
      break;
    }
    case SystemKind::kUnicycle:
      p.system = std::make_shared<UnicycleSystem>();
      penalty = PenaltyMatrix::uniform(3, 2, cfg.lambda);
      break;
    case SystemKind::kDoubleIntegrator:
      p.system = std::make_shared<DoubleIntegrator>();
      penalty = PenaltyMatrix::uniform(2, 1, cfg.lambda);
      break;
  }
  p.lagrangian = std::make_unique<ActuatedLagrangian>(p.system, std::move(penalty), p.constraints,
                                                      p.schedule, cfg.smoothing);
  p.boundary = BoundarySpec(cfg.x_init, cfg.x_fin);
  p.hints.anchors.resize(n);
  for (const auto& [k, a, b] : cfg.anchors) p.hints.anchors[k] = std::pair{a, b};
  p.hints.bumps = cfg.bumps;
  return p;
}

/// Controls, integrated path and planning error for one curve.
struct Rollout {
  Trajectory controls;
  Trajectory integrated;
  double planning_error = 0.0;
};

inline Rollout rollout(const ControlAffineSystem& system, const CurveGrid& curve) {
  Rollout r;
  r.controls = extract_controls(system, curve.times, curve.states);
  r.integrated = integrate(system, curve.times, r.controls, curve.states.row(0).transpose());
  r.planning_error = planning_error(curve.times, curve.states, r.integrated);
  return r;
}

/// Distance of the integrated end state from the target: CoM distance for
/// legged systems, otherwise the norm over the fixed entries of x_fin.
inline double final_state_error(const ScenarioConfig& cfg, const Trajectory& integrated) {
  const Vec last = integrated.row(integrated.rows() - 1).transpose();
  if (cfg.system == SystemKind::kLegged) {
    const Vec2 target(cfg.x_fin[StateLayout::kPx].value_or(last[StateLayout::kPx]),
                      cfg.x_fin[StateLayout::kPy].value_or(last[StateLayout::kPy]));
    return (StateLayout::com(last) - target).norm();
  }
  double sq = 0.0;
  for (std::size_t k = 0; k < cfg.x_fin.size(); ++k)
    if (cfg.x_fin[k]) sq += (last[k] - *cfg.x_fin[k]) * (last[k] - *cfg.x_fin[k]);
  return std::sqrt(sq);
}

inline AuditReport audit_states(const ScenarioConfig& cfg, const Problem& p, const Vec& times,
                                const Trajectory& states) {
  if (cfg.system != SystemKind::kLegged) {
    AuditReport r;
    r.tolerances = cfg.tolerances;
    return r;
  }
  return audit(times, states, p.constraints, p.schedule, cfg.robot, p.terrain,
               cfg.smoothing.alpha, cfg.tolerances);
}

/// Exact bytes of an audit JSON file.
inline std::string audit_text(const AuditReport& report) { return audit_json(report).dump(2) + "\n"; }

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNotConverged = 3,
  kExitAuditFailed = 4,
};

struct PlanOutcome {
  SolveResult solve;
  Rollout rollout;
  AuditReport audit;
  double final_state_error = 0.0;
  int exit_code = kExitOk;
  std::filesystem::path output_dir;
};

/// Output directory: the environment override if set, else the config's.
inline std::filesystem::path output_dir_for(const ScenarioConfig& cfg) {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return cfg.output_dir;
}

/// Steps 1-7: build, flow, extract, integrate, audit; then write all files.
inline PlanOutcome plan(const ScenarioConfig& cfg, const std::filesystem::path& out_dir) {
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };
  const auto problem = build_problem(cfg);
  PlanOutcome out;
  out.output_dir = out_dir;

  const auto t0 = clock::now();
  const CurveGrid initial = initial_curve(problem.boundary, cfg.horizon, cfg.nodes, problem.hints);
  const DiscreteEnergy energy(*problem.lagrangian, initial.times);
  out.solve = solve(initial, cfg.solver, energy, problem.boundary);
  const auto t1 = clock::now();
  out.rollout = rollout(*problem.system, out.solve.curve);
  const auto t2 = clock::now();
  const auto& times = out.solve.curve.times;
  out.audit = audit_states(cfg, problem, times, out.rollout.integrated);
  const auto t3 = clock::now();
  out.final_state_error = final_state_error(cfg, out.rollout.integrated);

  if (!out.solve.converged())
    out.exit_code = kExitNotConverged;
  else if (!out.audit.pass || !(out.final_state_error <= cfg.final_state_tol))
    out.exit_code = kExitAuditFailed;

  const auto columns = trajectory_columns(state_names(cfg), control_names(cfg));
  const auto control_columns = trajectory_columns({}, control_names(cfg));
  write_file_atomic(out_dir / "x_star.csv",
                    trajectory_csv(times, out.solve.curve.states, out.rollout.controls, columns));
  write_file_atomic(out_dir / "x_tilde.csv",
                    trajectory_csv(times, out.rollout.integrated, out.rollout.controls, columns));
  write_file_atomic(out_dir / "controls.csv",
                    trajectory_csv(times, Trajectory(times.size(), 0), out.rollout.controls,
                                   control_columns));
  write_file_atomic(out_dir / "trace.csv", trace_csv(out.solve.trace));
  write_file_atomic(out_dir / "audit.json", audit_text(out.audit));

  nlohmann::ordered_json manifest;
  manifest["version"] = AGHF_VERSION;
  manifest["config"] = config_echo(cfg);
  manifest["timings_s"] = {{"solve", seconds(t0, t1)},
                           {"integrate", seconds(t1, t2)},
                           {"audit", seconds(t2, t3)}};
  const auto& trace = out.solve.trace;
  manifest["convergence"] = {
      {"status", to_string(out.solve.status)},
      {"s_final", out.solve.curve.s},
      {"accepted_steps", out.solve.accepted},
      {"rejected_steps", out.solve.rejected},
      {"energy_initial", trace.front().energy},
      {"energy_final", trace.back().energy},
      {"max_flow_final", trace.back().max_flow},
      {"worst_energy_increase", json_number(out.solve.worst_energy_increase)}};
  manifest["planning_error"] = out.rollout.planning_error;
  manifest["norm"] = "euclidean";
  manifest["final_state_error"] = out.final_state_error;
  manifest["audit_pass"] = out.audit.pass;
  manifest["exit_code"] = out.exit_code;
  manifest["files"] = {"x_star.csv", "x_tilde.csv", "controls.csv", "trace.csv", "audit.json"};
  write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return out;
}

struct SweepCell {
  double lambda;
  double s;
  std::optional<double> error;
};

/// Planning error at each flow-time checkpoint for each lambda. Once the flow
/// is stationary the curve no longer changes, so later checkpoints take its
/// final error. A failing lambda leaves its cells empty.
inline std::vector<SweepCell> sweep(ScenarioConfig cfg, const std::vector<double>& lambdas,
                                    std::vector<double> checkpoints) {
  if (lambdas.size() < 2) throw ConfigError("lambdas", "need at least two values");
  if (checkpoints.empty()) throw ConfigError("checkpoints", "need at least one value");
  for (const double s : checkpoints)
    if (!(s >= 0) || !std::isfinite(s)) throw ConfigError("checkpoints", "must be finite and >= 0");
  for (const double l : lambdas)
    if (!(l > 0) || !std::isfinite(l)) throw ConfigError("lambdas", "must be finite and positive");
  std::sort(checkpoints.begin(), checkpoints.end());
  std::vector<SweepCell> cells;
  for (const double lambda : lambdas) {
    std::map<double, double> errors;
    try {
      cfg.lambda = lambda;
      cfg.solver.checkpoints = checkpoints;
      cfg.solver.s_max = std::max(checkpoints.back(), 1e-300);
      const auto problem = build_problem(cfg);
      const CurveGrid initial =
          initial_curve(problem.boundary, cfg.horizon, cfg.nodes, problem.hints);
      const DiscreteEnergy energy(*problem.lagrangian, initial.times);
      const auto result =
          solve(initial, cfg.solver, energy, problem.boundary, [&](double s, const CurveGrid& c) {
            errors[s] = rollout(*problem.system, c).planning_error;
          });
      if (result.status == SolveStatus::kStationary || result.status == SolveStatus::kStalled) {
        const double final_error = rollout(*problem.system, result.curve).planning_error;
        for (const double s : checkpoints)
          if (!errors.count(s)) errors[s] = final_error;
      }
    } catch (const std::exception&) {
    }
    for (const double s : checkpoints) {
      const auto it = errors.find(s);
      cells.push_back({lambda, s, it == errors.end() ? std::nullopt : std::optional(it->second)});
    }
  }
  return cells;
}

inline std::string sweep_csv(const std::vector<SweepCell>& cells) {
  std::string out = "lambda,s,e\n";
  for (const auto& c : cells)
    out += format_double(c.lambda) + ',' + format_double(c.s) + ',' +
           (c.error ? format_double(*c.error) : std::string()) + '\n';
  return out;
}

/// Audit a stored trajectory CSV (x_tilde.csv or x_star.csv) against a config.
inline AuditReport audit_trajectory(const ScenarioConfig& cfg, const std::string& csv_text) {
  const auto table = parse_trajectory_csv(csv_text, state_names(cfg), control_names(cfg));
  const auto problem = build_problem(cfg);
  return audit_states(cfg, problem, table.times, table.states);
}

}  // namespace aghf
