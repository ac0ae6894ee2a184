#pragma once

// Plain-text artifacts: trajectory and trace CSVs, audit JSON, atomic file
// writes.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aghf/extraction.hpp"
#include "aghf/solver.hpp"

namespace aghf {

/// %.17g, enough digits to read the same double back.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Write to a sibling temporary file, then rename over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Column header: t, state names, then control names (if any).
inline std::vector<std::string> trajectory_columns(const std::vector<std::string>& states,
                                                   const std::vector<std::string>& controls) {
  std::vector<std::string> cols{"t"};
  cols.insert(cols.end(), states.begin(), states.end());
  cols.insert(cols.end(), controls.begin(), controls.end());
  return cols;
}

/// One row per grid node. `controls` may have zero columns.
inline std::string trajectory_csv(const Vec& times, const Trajectory& states,
                                  const Trajectory& controls,
                                  const std::vector<std::string>& columns) {
  std::string out;
  for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
  out += '\n';
  for (int i = 0; i < times.size(); ++i) {
    out += format_double(times[i]);
    for (int k = 0; k < states.cols(); ++k) out += ',' + format_double(states(i, k));
    for (int k = 0; k < controls.cols(); ++k) out += ',' + format_double(controls(i, k));
    out += '\n';
  }
  return out;
}

struct TrajectoryTable {
  Vec times;
  Trajectory states;
  Trajectory controls;
};

/// Parse a trajectory CSV. The header must start with `t` followed by exactly
/// the expected state names; trailing columns must be the control names or
/// absent.
inline TrajectoryTable parse_trajectory_csv(const std::string& text,
                                            const std::vector<std::string>& state_names,
                                            const std::vector<std::string>& control_names) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw ConfigError("csv", "empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const auto with_controls = trajectory_columns(state_names, control_names);
  const auto without = trajectory_columns(state_names, {});
  if (header != with_controls && header != without)
    throw ConfigError("csv", "header does not match the scenario's state/control columns");
  const bool has_controls = header.size() == with_controls.size() && !control_names.empty();

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw ConfigError("csv", "row " + std::to_string(rows.size() + 1) + " has a non-numeric cell");
      }
      if (used != cell.size())
        throw ConfigError("csv", "row " + std::to_string(rows.size() + 1) + " has a non-numeric cell");
      row.push_back(v);
    }
    if (row.size() != header.size())
      throw ConfigError("csv", "row " + std::to_string(rows.size() + 1) + " has the wrong column count");
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw ConfigError("csv", "need at least two rows");

  const int nt = static_cast<int>(rows.size());
  const int n = static_cast<int>(state_names.size());
  const int m = has_controls ? static_cast<int>(control_names.size()) : 0;
  TrajectoryTable table{Vec(nt), Trajectory(nt, n), Trajectory(nt, m)};
  for (int i = 0; i < nt; ++i) {
    table.times[i] = rows[i][0];
    for (int k = 0; k < n; ++k) table.states(i, k) = rows[i][1 + k];
    for (int k = 0; k < m; ++k) table.controls(i, k) = rows[i][1 + n + k];
    if (i > 0 && !(table.times[i] > table.times[i - 1]))
      throw ConfigError("csv", "t must be strictly increasing");
  }
  return table;
}

inline std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::string out = "s,energy,max_flow,ds\n";
  for (const auto& r : trace)
    out += format_double(r.s) + ',' + format_double(r.energy) + ',' + format_double(r.max_flow) +
           ',' + format_double(r.ds) + '\n';
  return out;
}

/// Non-finite numbers become null.
inline nlohmann::ordered_json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

inline nlohmann::ordered_json audit_json(const AuditReport& report) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["pass"] = report.pass;
  j["tolerances"] = {{"deep_phase", report.tolerances.deep_phase},
                     {"length", report.tolerances.length},
                     {"force", report.tolerances.force},
                     {"foot_drift", report.tolerances.foot_drift},
                     {"flight_force", report.tolerances.flight_force}};
  ordered_json constraints = ordered_json::array();
  for (const auto& c : report.constraints) {
    constraints.push_back({{"id", c.id},
                           {"kind", c.equality ? "equality" : "inequality"},
                           {"samples", c.samples},
                           {"max_violation", json_number(c.samples ? c.max_violation : NAN)},
                           {"time_of_max", json_number(c.samples ? c.time_of_max : NAN)},
                           {"tolerance", c.tolerance},
                           {"pass", c.pass}});
  }
  j["constraints"] = std::move(constraints);
  ordered_json legs = ordered_json::array();
  for (const auto& l : report.legs) {
    ordered_json stances = ordered_json::array();
    for (const auto& s : l.stances) {
      stances.push_back({{"landing", s.landing},
                         {"takeoff", s.takeoff},
                         {"foot_x", s.foot_x},
                         {"foot_y", s.foot_y},
                         {"foot_drift", s.foot_drift},
                         {"min_normal_force", json_number(s.min_normal_force)},
                         {"max_cone_violation", json_number(s.max_cone_violation)}});
    }
    legs.push_back({{"leg", l.leg + 1},
                    {"max_foot_drift", l.max_foot_drift},
                    {"max_flight_force", l.max_flight_force},
                    {"stances", std::move(stances)}});
  }
  j["legs"] = std::move(legs);
  return j;
}

}  // namespace aghf
