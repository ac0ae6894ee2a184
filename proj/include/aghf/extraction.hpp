#pragma once

// From a converged curve to a plan: extracted controls, the integrated path,
// the planning error and the constraint audit.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "aghf/constraints.hpp"
#include "aghf/metric.hpp"

namespace aghf {

namespace detail {

inline bool uniform_grid(const Vec& times) {
  const int nt = static_cast<int>(times.size());
  if (nt < 2) return true;
  const double h = (times[nt - 1] - times[0]) / (nt - 1);
  for (int i = 0; i + 1 < nt; ++i)
    if (std::abs(times[i + 1] - times[i] - h) > 1e-9 * std::abs(h)) return false;
  return true;
}

}  // namespace detail

/// Time derivative of every column. Fourth-order differences on uniform grids
/// with at least five nodes, second order otherwise.
inline Trajectory differentiate(const Vec& times, const Trajectory& states) {
  const int nt = static_cast<int>(times.size());
  Trajectory d(nt, states.cols());
  if (nt < 3) {
    d.row(0) = d.row(nt - 1) = (states.row(nt - 1) - states.row(0)) / (times[nt - 1] - times[0]);
    return d;
  }
  if (nt >= 5 && detail::uniform_grid(times)) {
    const double h = (times[nt - 1] - times[0]) / (nt - 1);
    const auto& x = states;
    for (int i = 2; i + 2 < nt; ++i)
      d.row(i) = (x.row(i - 2) - 8.0 * x.row(i - 1) + 8.0 * x.row(i + 1) - x.row(i + 2)) / (12.0 * h);
    d.row(0) = (-25.0 * x.row(0) + 48.0 * x.row(1) - 36.0 * x.row(2) + 16.0 * x.row(3) -
                3.0 * x.row(4)) / (12.0 * h);
    d.row(1) = (-3.0 * x.row(0) - 10.0 * x.row(1) + 18.0 * x.row(2) - 6.0 * x.row(3) + x.row(4)) /
               (12.0 * h);
    const int l = nt - 1;
    d.row(l) = (25.0 * x.row(l) - 48.0 * x.row(l - 1) + 36.0 * x.row(l - 2) -
                16.0 * x.row(l - 3) + 3.0 * x.row(l - 4)) / (12.0 * h);
    d.row(l - 1) = (3.0 * x.row(l) + 10.0 * x.row(l - 1) - 18.0 * x.row(l - 2) +
                    6.0 * x.row(l - 3) - x.row(l - 4)) / (12.0 * h);
    return d;
  }
  for (int i = 1; i + 1 < nt; ++i)
    d.row(i) = (states.row(i + 1) - states.row(i - 1)) / (times[i + 1] - times[i - 1]);
  const double h0 = times[1] - times[0];
  const double h1 = times[nt - 1] - times[nt - 2];
  d.row(0) = (-3.0 * states.row(0) + 4.0 * states.row(1) - states.row(2)) / (2.0 * h0);
  d.row(nt - 1) =
      (3.0 * states.row(nt - 1) - 4.0 * states.row(nt - 2) + states.row(nt - 3)) / (2.0 * h1);
  return d;
}

/// u = [O I] Fbar^-1 (xdot - F_d(x)) for given derivatives.
inline Trajectory extract_controls(const ControlAffineSystem& system, const Trajectory& states,
                                   const Trajectory& rates) {
  const int n = system.state_dim();
  const int m = system.control_dim();
  Trajectory u(states.rows(), m);
  Vec drift(n);
  for (int i = 0; i < states.rows(); ++i) {
    const Vec x = states.row(i).transpose();
    system.drift(x, drift);
    Vec w = rates.row(i).transpose() - drift;
    if (!system.identity_frame()) w = frame_inverse(system, x) * w;
    u.row(i) = w.tail(m).transpose();
  }
  return u;
}

/// Controls on the grid, with finite-difference derivatives of the curve.
inline Trajectory extract_controls(const ControlAffineSystem& system, const Vec& times,
                                   const Trajectory& states) {
  return extract_controls(system, states, differentiate(times, states));
}

/// Classical RK4 on the grid of `times`. Midpoint controls come from cubic
/// interpolation through four neighbouring nodes on uniform grids, linear
/// interpolation otherwise.
inline Trajectory integrate(const ControlAffineSystem& system, const Vec& times,
                            const Trajectory& controls, const Vec& x0) {
  const int nt = static_cast<int>(times.size());
  const int n = system.state_dim();
  Trajectory out(nt, n);
  out.row(0) = x0.transpose();
  Vec x = x0, k1(n), k2(n), k3(n), k4(n), tmp(n);
  auto rhs = [&](const Vec& state, const Vec& u, VecRef dx) {
    system.drift(state, dx);
    dx += system.control_matrix(state) * u;
  };
  const bool cubic = nt >= 4 && detail::uniform_grid(times);
  auto midpoint = [&](int i) -> Vec {
    const auto& u = controls;
    if (!cubic) return 0.5 * (u.row(i) + u.row(i + 1)).transpose();
    if (i == 0) return ((5.0 * u.row(0) + 15.0 * u.row(1) - 5.0 * u.row(2) + u.row(3)) / 16.0).transpose();
    if (i + 2 == nt)
      return ((5.0 * u.row(i + 1) + 15.0 * u.row(i) - 5.0 * u.row(i - 1) + u.row(i - 2)) / 16.0)
          .transpose();
    return ((-u.row(i - 1) + 9.0 * u.row(i) + 9.0 * u.row(i + 1) - u.row(i + 2)) / 16.0).transpose();
  };
  for (int i = 0; i + 1 < nt; ++i) {
    const double h = times[i + 1] - times[i];
    const Vec u0 = controls.row(i).transpose();
    const Vec u1 = controls.row(i + 1).transpose();
    const Vec um = midpoint(i);
    rhs(x, u0, k1);
    tmp = x + 0.5 * h * k1;
    rhs(tmp, um, k2);
    tmp = x + 0.5 * h * k2;
    rhs(tmp, um, k3);
    tmp = x + h * k3;
    rhs(tmp, u1, k4);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out.row(i + 1) = x.transpose();
  }
  return out;
}

/// e = integral over [0, T] of |a(t) - b(t)| (Euclidean), trapezoid rule.
inline double planning_error(const Vec& times, const Trajectory& a, const Trajectory& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != times.size())
    throw ConfigError("trajectory", "curves must share the same grid");
  double e = 0.0;
  for (int i = 0; i + 1 < times.size(); ++i)
    e += 0.5 * (times[i + 1] - times[i]) * ((a.row(i) - b.row(i)).norm() + (a.row(i + 1) - b.row(i + 1)).norm());
  return e;
}

struct AuditTolerances {
  double deep_phase = 0.99;  ///< minimum B_j(t) for a sample to be audited
  double length = 0.02;      ///< m (and m^2 for the reach constraint)
  double force = 0.5;        ///< N
  double foot_drift = 0.01;  ///< m per stance interval
  double flight_force = 1.0; ///< N, |f_i| deep in flight
};

struct ConstraintAudit {
  std::string id;
  bool equality = false;
  int samples = 0;
  /// max |h| for equalities, max h for inequalities (h <= 0 feasible)
  double max_violation = -std::numeric_limits<double>::infinity();
  double time_of_max = 0.0;
  double tolerance = 0.0;
  bool pass = true;
};

struct StanceAudit {
  double landing = 0.0;
  double takeoff = 0.0;
  double foot_drift = 0.0;   ///< max |p_i(t) - p_i(first deep sample)|
  double foot_x = 0.0;       ///< foot position at the first deep sample
  double foot_y = 0.0;
  double min_normal_force = std::numeric_limits<double>::infinity();
  double max_cone_violation = -std::numeric_limits<double>::infinity();  ///< |f.T| - mu f.N
};

struct LegAudit {
  int leg = 0;
  double max_foot_drift = 0.0;
  double max_flight_force = 0.0;
  std::vector<StanceAudit> stances;
};

struct AuditReport {
  std::vector<ConstraintAudit> constraints;
  std::vector<LegAudit> legs;
  AuditTolerances tolerances;
  bool pass = true;
};

/// Evaluate every constraint where its phase activation exceeds the
/// deep-phase threshold, plus stance foot drift and flight force per leg.
inline AuditReport audit(const Vec& times, const Trajectory& states,
                         const std::vector<ConstraintSpec>& constraints,
                         const ContactSchedule& schedule, const RobotParams& params,
                         const std::shared_ptr<const Terrain>& terrain, double alpha,
                         const AuditTolerances& tol = {}) {
  AuditReport report;
  report.tolerances = tol;
  const int nt = static_cast<int>(times.size());
  for (const auto& c : constraints) {
    ConstraintAudit a;
    a.id = c.id;
    a.equality = c.is_equality();
    a.tolerance = c.unit == ConstraintUnit::kForce ? tol.force : tol.length;
    for (int i = 0; i < nt; ++i) {
      if (constraint_activation(c, schedule, times[i], alpha) <= tol.deep_phase) continue;
      const double h = c.value(states.row(i).transpose());
      const double v = a.equality ? std::abs(h) : h;
      ++a.samples;
      if (v > a.max_violation) {
        a.max_violation = v;
        a.time_of_max = times[i];
      }
    }
    a.pass = a.samples == 0 || a.max_violation <= a.tolerance;
    report.pass = report.pass && a.pass;
    report.constraints.push_back(std::move(a));
  }

  const StateLayout layout(params.legs);
  for (int leg = 0; leg < params.legs && leg < schedule.legs(); ++leg) {
    LegAudit la;
    la.leg = leg;
    for (const auto& interval : schedule.stances(leg)) {
      StanceAudit sa;
      sa.landing = interval.landing;
      sa.takeoff = interval.takeoff;
      bool anchored = false;
      Vec2 anchor;
      for (int i = 0; i < nt; ++i) {
        const double t = times[i];
        if (t < interval.landing || t > interval.takeoff) continue;
        if (schedule.activation(leg, t, alpha) <= tol.deep_phase) continue;
        const auto x = states.row(i).transpose();
        const Vec2 foot = layout.foot_of(x, leg);
        if (!anchored) {
          anchor = foot;
          anchored = true;
          sa.foot_x = foot.x();
          sa.foot_y = foot.y();
        }
        sa.foot_drift = std::max(sa.foot_drift, (foot - anchor).norm());
        if (terrain) {
          const auto frame = terrain_frame(*terrain, foot);
          const Vec2 f = layout.force_of(x, leg);
          const double fn = f.dot(frame.normal);
          sa.min_normal_force = std::min(sa.min_normal_force, fn);
          sa.max_cone_violation =
              std::max(sa.max_cone_violation, std::abs(f.dot(frame.tangent)) - params.friction * fn);
        }
      }
      la.max_foot_drift = std::max(la.max_foot_drift, sa.foot_drift);
      la.stances.push_back(sa);
    }
    for (int i = 0; i < nt; ++i) {
      if (1.0 - schedule.activation(leg, times[i], alpha) <= tol.deep_phase) continue;
      la.max_flight_force =
          std::max(la.max_flight_force, layout.force_of(states.row(i).transpose(), leg).norm());
    }
    report.pass = report.pass && la.max_foot_drift <= tol.foot_drift &&
                  la.max_flight_force <= tol.flight_force;
    report.legs.push_back(std::move(la));
  }
  return report;
}

}  // namespace aghf
