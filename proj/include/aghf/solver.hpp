#pragma once

// Method-of-lines solver for the heat flow dx/ds = Psi(x, xdot, t): fixed
// uniform time grid, explicit or linearly implicit Euler in s with
// energy-checked adaptive steps.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "aghf/metric.hpp"

namespace aghf {

/// Per state, a fixed value or free at each end of the horizon.
class BoundarySpec {
 public:
  BoundarySpec() = default;
  BoundarySpec(std::vector<std::optional<double>> start, std::vector<std::optional<double>> end)
      : start_(std::move(start)), end_(std::move(end)) {
    if (start_.size() != end_.size())
      throw ConfigError("x_fin", "initial and final boundary vectors differ in length");
    for (std::size_t i = 0; i < start_.size(); ++i) {
      if ((start_[i] && !std::isfinite(*start_[i])) || (end_[i] && !std::isfinite(*end_[i])))
        throw ConfigError("boundary", "fixed entry " + std::to_string(i + 1) + " is not finite");
    }
  }

  static BoundarySpec all_fixed(const Vec& start, const Vec& end) {
    std::vector<std::optional<double>> a(start.size()), b(end.size());
    for (int i = 0; i < start.size(); ++i) a[i] = start[i];
    for (int i = 0; i < end.size(); ++i) b[i] = end[i];
    return {a, b};
  }

  int size() const { return static_cast<int>(start_.size()); }
  const std::optional<double>& start(int i) const { return start_.at(i); }
  const std::optional<double>& end(int i) const { return end_.at(i); }
  bool operator==(const BoundarySpec&) const = default;

 private:
  std::vector<std::optional<double>> start_;
  std::vector<std::optional<double>> end_;
};

struct CurveGrid {
  Vec times;
  Trajectory states;
  double s = 0.0;

  int nodes() const { return static_cast<int>(times.size()); }
  double dt() const { return times[1] - times[0]; }
};

inline Vec uniform_times(double horizon, int nodes) {
  if (nodes < 2) throw ConfigError("nodes", "need at least two time nodes");
  return Vec::LinSpaced(nodes, 0.0, horizon);
}

/// Endpoint values used for free boundary entries when building the initial
/// curve (default 0 at both ends).
struct CurveHints {
  std::vector<std::optional<std::pair<double, double>>> anchors;
  /// amplitude * sin(pi t / T) added to a state, e.g. to leave a symmetric
  /// stationary curve.
  struct Bump {
    int state;
    double amplitude;
  };
  std::vector<Bump> bumps;
};

/// Straight line in every state between its endpoint values.
inline CurveGrid initial_curve(const BoundarySpec& bc, double horizon, int nodes,
                               const CurveHints& hints = {}) {
  CurveGrid grid;
  grid.times = uniform_times(horizon, nodes);
  const int n = bc.size();
  grid.states.resize(nodes, n);
  for (int k = 0; k < n; ++k) {
    std::pair<double, double> anchor{0.0, 0.0};
    if (k < static_cast<int>(hints.anchors.size()) && hints.anchors[k]) anchor = *hints.anchors[k];
    const double a = bc.start(k).value_or(anchor.first);
    const double b = bc.end(k).value_or(anchor.second);
    for (int i = 0; i < nodes; ++i) grid.states(i, k) = a + grid.times[i] / horizon * (b - a);
    grid.states(nodes - 1, k) = b;
  }
  for (const auto& bump : hints.bumps) {
    if (bump.state < 0 || bump.state >= n) throw ConfigError("bump", "state index out of range");
    for (int i = 0; i < nodes; ++i)
      grid.states(i, bump.state) += bump.amplitude * std::sin(std::numbers::pi * grid.times[i] / horizon);
  }
  return grid;
}

/// Dirichlet clamp for fixed entries; free entries are moved so that the
/// one-sided time derivative at the boundary equals the drift component.
inline void apply_boundary(CurveGrid& grid, const BoundarySpec& bc,
                           const ControlAffineSystem& system) {
  const int nt = grid.nodes();
  if (nt < 3) throw ConfigError("nodes", "boundary handling needs at least three nodes");
  const int n = bc.size();
  const double h0 = grid.times[1] - grid.times[0];
  const double h1 = grid.times[nt - 1] - grid.times[nt - 2];
  Vec drift(n);
  auto clamp = [&] {
    for (int k = 0; k < n; ++k) {
      if (bc.start(k)) grid.states(0, k) = *bc.start(k);
      if (bc.end(k)) grid.states(nt - 1, k) = *bc.end(k);
    }
  };
  clamp();
  // fixed-point iteration; the drift is smooth and h is small
  for (int iter = 0; iter < 50; ++iter) {
    system.drift(grid.states.row(0).transpose(), drift);
    for (int k = 0; k < n; ++k)
      if (!bc.start(k)) grid.states(0, k) = grid.states(1, k) - h0 * drift[k];
    system.drift(grid.states.row(nt - 1).transpose(), drift);
    for (int k = 0; k < n; ++k)
      if (!bc.end(k)) grid.states(nt - 1, k) = grid.states(nt - 2, k) + h1 * drift[k];
  }
  clamp();
}

enum class FreeBoundaryMode {
  /// Free endpoint values descend the discrete energy with the interior;
  /// at a stationary curve this enforces xdot_i = F_d,i at the boundary.
  kNatural,
  /// Re-project free endpoints with `apply_boundary` after every step.
  kProjected,
};

enum class Stepper {
  /// X <- X + ds Psi.
  kExplicitEuler,
  /// (M/ds + H) dX = -dE/dX with M the lumped metric mass and H the
  /// Gauss-Newton Hessian of E. Tends to explicit Euler as ds -> 0.
  kLinearlyImplicit,
};

struct SolverConfig {
  Stepper stepper = Stepper::kLinearlyImplicit;
  double s_max = 1.0;
  double ds_initial = 1e-7;
  double ds_min = 1e-18;
  double ds_max = std::numeric_limits<double>::infinity();
  double growth = 2.0;
  double shrink = 0.5;
  /// Stop when the largest entry of an accepted step drops below this (for
  /// the implicit stepper, also the undamped step). Unset means 1e-9 * n * N_t.
  std::optional<double> stationarity_tol;
  long max_steps = 5'000'000;
  double energy_slack = 1e-9;
  /// Implicit stepper: inequality penalties this close to active are modelled
  /// as active until progress slows, then the exact model takes over.
  double model_margin = 0.1;
  FreeBoundaryMode free_boundary = FreeBoundaryMode::kNatural;
  /// Flow times at which the observer is called (the solver lands on them).
  std::vector<double> checkpoints;

  void validate() const {
    if (!(s_max > 0)) throw ConfigError("s_max", "must be positive");
    if (!(ds_initial > 0)) throw ConfigError("ds_initial", "must be positive");
    if (stationarity_tol && !(*stationarity_tol > 0))
      throw ConfigError("stationarity_tol", "must be positive");
    if (!(growth >= 1.0)) throw ConfigError("ds_growth", "must be at least 1");
    if (!(shrink > 0 && shrink < 1)) throw ConfigError("ds_shrink", "must lie in (0, 1)");
    if (max_steps < 1) throw ConfigError("max_steps", "must be positive");
    if (!(model_margin >= 0)) throw ConfigError("model_margin", "must be non-negative");
  }
};

struct StepDiagnostics {
  double energy_before = 0.0;
  double energy_after = 0.0;
  double max_flow = 0.0;
};

/// Mask of entries the flow may move: interior rows, plus free endpoints in
/// natural mode.
inline Trajectory flow_mask(const BoundarySpec& bc, int nodes, FreeBoundaryMode mode) {
  const int n = bc.size();
  Trajectory mask = Trajectory::Ones(nodes, n);
  for (int k = 0; k < n; ++k) {
    if (bc.start(k) || mode == FreeBoundaryMode::kProjected) mask(0, k) = 0.0;
    if (bc.end(k) || mode == FreeBoundaryMode::kProjected) mask(nodes - 1, k) = 0.0;
  }
  return mask;
}

/// Solve the symmetric positive definite block-tridiagonal system
/// (K.diagonal + shift K.mass, K.upper) dX = rhs with masked entries held at
/// zero. Returns nullopt if a pivot block is not positive definite.
inline std::optional<Trajectory> solve_block_tridiagonal(const DiscreteEnergy::Curvature& k,
                                                         double shift, const Trajectory& rhs,
                                                         const Trajectory& mask) {
  const int nt = static_cast<int>(k.diagonal.size());
  const int n = static_cast<int>(rhs.cols());
  std::vector<Eigen::LLT<Mat>> pivots(nt);
  std::vector<Mat> upper(std::max(nt - 1, 0));
  Trajectory y(nt, n);
  Mat block(n, n);
  Vec yi(n);
  for (int i = 0; i < nt; ++i) {
    block = k.diagonal[i] + shift * k.mass[i];
    yi = rhs.row(i).transpose();
    if (i > 0) {
      // S_i = D_i - C^T S^-1 C with C the masked upper block of node i-1
      const Mat w = pivots[i - 1].solve(upper[i - 1]);
      block.noalias() -= upper[i - 1].transpose() * w;
      yi -= w.transpose() * y.row(i - 1).transpose();
    }
    for (int a = 0; a < n; ++a) {
      if (mask(i, a) != 0.0) continue;
      block.row(a).setZero();
      block.col(a).setZero();
      block(a, a) = 1.0;
      yi[a] = 0.0;
    }
    pivots[i].compute(block);
    if (pivots[i].info() != Eigen::Success) return std::nullopt;
    y.row(i) = yi.transpose();
    if (i + 1 < nt) {
      upper[i] = k.upper[i];
      for (int a = 0; a < n; ++a) {
        if (mask(i, a) == 0.0) upper[i].row(a).setZero();
        if (mask(i + 1, a) == 0.0) upper[i].col(a).setZero();
      }
    }
  }
  Trajectory x(nt, n);
  for (int i = nt - 1; i >= 0; --i) {
    yi = y.row(i).transpose();
    if (i + 1 < nt) yi.noalias() -= upper[i] * x.row(i + 1).transpose();
    x.row(i) = pivots[i].solve(yi).transpose();
  }
  if (!x.allFinite()) return std::nullopt;
  return x;
}

/// -(g.d + d.H.d / 2): the decrease of E predicted by the convex model.
inline double model_decrease(const DiscreteEnergy::Curvature& k, const Trajectory& gradient,
                             const Trajectory& delta) {
  double quad = 0.0;
  const int nt = static_cast<int>(k.diagonal.size());
  for (int i = 0; i < nt; ++i) {
    const Vec di = delta.row(i).transpose();
    quad += 0.5 * di.dot(k.diagonal[i] * di);
    if (i + 1 < nt) quad += di.dot(k.upper[i] * delta.row(i + 1).transpose());
  }
  return -(gradient.cwiseProduct(delta).sum() + quad);
}

/// x <- x + ds Psi on the movable entries, then boundaries re-applied.
/// Throws StepDiverged on a non-finite state.
inline StepDiagnostics flow_step(CurveGrid& grid, double ds, const DiscreteEnergy& energy,
                                 const BoundarySpec& bc,
                                 FreeBoundaryMode mode = FreeBoundaryMode::kNatural) {
  if (!(ds > 0)) throw ConfigError("ds", "must be positive");
  const auto before = energy.evaluate(grid.states);
  const Trajectory mask = flow_mask(bc, grid.nodes(), mode);
  const Trajectory psi = before.flow.cwiseProduct(mask);
  Trajectory next = grid.states + ds * psi;
  if (!next.allFinite()) throw StepDiverged("non-finite state after flow step");
  CurveGrid trial{grid.times, std::move(next), grid.s + ds};
  if (mode == FreeBoundaryMode::kProjected) apply_boundary(trial, bc, energy.lagrangian().system());
  for (int k = 0; k < bc.size(); ++k) {
    if (bc.start(k)) trial.states(0, k) = *bc.start(k);
    if (bc.end(k)) trial.states(trial.nodes() - 1, k) = *bc.end(k);
  }
  StepDiagnostics diag;
  diag.energy_before = before.energy;
  diag.energy_after = energy.energy(trial.states);
  diag.max_flow = psi.cwiseAbs().maxCoeff();
  if (!std::isfinite(diag.energy_after)) throw StepDiverged("non-finite energy after flow step");
  grid = std::move(trial);
  return diag;
}

struct TraceRow {
  double s;
  double energy;
  double max_flow;
  double ds;
};

enum class SolveStatus { kStationary, kReachedSMax, kNotConverged, kStalled };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kStationary:
      return "stationary";
    case SolveStatus::kReachedSMax:
      return "reached_s_max";
    case SolveStatus::kNotConverged:
      return "not_converged";
    case SolveStatus::kStalled:
      return "stalled";
  }
  return "unknown";
}

struct SolveResult {
  CurveGrid curve;
  std::vector<TraceRow> trace;
  SolveStatus status = SolveStatus::kReachedSMax;
  long accepted = 0;
  long rejected = 0;
  /// max over accepted steps of E(s + ds) - E(s)
  double worst_energy_increase = -std::numeric_limits<double>::infinity();

  bool converged() const { return status != SolveStatus::kNotConverged; }
};

using CheckpointObserver = std::function<void(double s, const CurveGrid&)>;

/// March the flow from `grid` until s_max or stationarity. A trial step is
/// accepted only if it keeps every state finite and does not raise the
/// discrete energy by more than `energy_slack`; otherwise ds is shrunk.
inline SolveResult solve(CurveGrid grid, const SolverConfig& config, const DiscreteEnergy& energy,
                         const BoundarySpec& bc, const CheckpointObserver& observer = {}) {
  config.validate();
  const int nt = grid.nodes();
  const int n = static_cast<int>(grid.states.cols());
  if (bc.size() != n) throw ConfigError("boundary", "length does not match the state dimension");
  const double tol = config.stationarity_tol.value_or(1e-9 * n * nt);
  const Trajectory mask = flow_mask(bc, nt, config.free_boundary);

  for (int k = 0; k < n; ++k) {
    if (bc.start(k)) grid.states(0, k) = *bc.start(k);
    if (bc.end(k)) grid.states(nt - 1, k) = *bc.end(k);
  }
  if (config.free_boundary == FreeBoundaryMode::kProjected)
    apply_boundary(grid, bc, energy.lagrangian().system());

  std::vector<double> checkpoints = config.checkpoints;
  std::sort(checkpoints.begin(), checkpoints.end());
  std::size_t next_checkpoint = 0;
  auto fire_checkpoints = [&] {
    while (next_checkpoint < checkpoints.size() &&
           checkpoints[next_checkpoint] <= grid.s * (1 + 1e-12) + 1e-300) {
      if (observer) observer(checkpoints[next_checkpoint], grid);
      ++next_checkpoint;
    }
  };

  const bool implicit = config.stepper == Stepper::kLinearlyImplicit &&
                        config.free_boundary == FreeBoundaryMode::kNatural;
  SolveResult result;
  auto current = energy.evaluate(grid.states);
  std::optional<DiscreteEnergy::Curvature> curvature;
  double margin = config.model_margin;
  int slow_steps = 0;
  if (implicit) curvature = energy.curvature(grid.states, margin);
  current.flow = current.flow.cwiseProduct(mask);
  double ds = config.ds_initial;
  double max_flow = current.flow.cwiseAbs().maxCoeff();
  result.trace.push_back({grid.s, current.energy, max_flow, 0.0});
  fire_checkpoints();
  double last_relative_drop = std::numeric_limits<double>::infinity();
  result.status = SolveStatus::kReachedSMax;

  while (grid.s < config.s_max * (1 - 1e-14)) {
    if (result.accepted >= config.max_steps) {
      result.status = last_relative_drop > 1e-3 ? SolveStatus::kNotConverged : SolveStatus::kStalled;
      break;
    }
    if (!implicit && max_flow * ds < tol) {
      result.status = SolveStatus::kStationary;
      break;
    }
    double step = std::min({ds, config.ds_max, config.s_max - grid.s});
    // the margin model may spend at most half of the flow-time budget
    if (margin > 0.0) step = std::min(step, 0.5 * config.s_max - grid.s);
    if (next_checkpoint < checkpoints.size())
      step = std::min(step, checkpoints[next_checkpoint] - grid.s);
    Trajectory next;
    double predicted = 0.0;
    if (implicit) {
      auto delta = solve_block_tridiagonal(*curvature, 1.0 / step,
                                           Trajectory(-current.gradient.cwiseProduct(mask)), mask);
      if (delta) predicted = model_decrease(*curvature, current.gradient, *delta);
      next = delta ? Trajectory(grid.states + *delta)
                   : Trajectory::Constant(nt, n, std::numeric_limits<double>::quiet_NaN());
    } else {
      next = grid.states + step * current.flow;
    }
    if (config.free_boundary == FreeBoundaryMode::kProjected) {
      CurveGrid tmp{grid.times, std::move(next), 0.0};
      apply_boundary(tmp, bc, energy.lagrangian().system());
      next = std::move(tmp.states);
    }
    bool ok = next.allFinite();
    DiscreteEnergy::Result trial;
    if (ok) {
      trial = energy.evaluate(next);
      ok = std::isfinite(trial.energy) && trial.energy <= current.energy + config.energy_slack;
    }
    if (!ok) {
      ++result.rejected;
      ds = step * config.shrink;
      if (ds < config.ds_min) {
        result.status = SolveStatus::kStalled;
        break;
      }
      continue;
    }
    // below roundoff of E the ratio carries no information
    const double gain = predicted > 1e-12 * std::abs(current.energy)
                            ? (current.energy - trial.energy) / predicted
                            : 1.0;
    result.worst_energy_increase =
        std::max(result.worst_energy_increase, trial.energy - current.energy);
    last_relative_drop = (current.energy - trial.energy) / std::max(std::abs(current.energy), 1e-300);
    const double moved = (next - grid.states).cwiseAbs().maxCoeff();
    grid.states = std::move(next);
    grid.s += step;
    current = std::move(trial);
    current.flow = current.flow.cwiseProduct(mask);
    max_flow = current.flow.cwiseAbs().maxCoeff();
    ++result.accepted;
    result.trace.push_back({grid.s, current.energy, max_flow, step});
    fire_checkpoints();
    if (!implicit)
      ds = std::max(step, ds) * config.growth;
    else if (gain < 0.25)
      ds = step * config.shrink;
    else if (gain > 0.75)
      ds = std::max(step, ds) * config.growth;
    else
      ds = std::max(step, ds);
    if (implicit) {
      slow_steps = last_relative_drop < 1e-4 ? slow_steps + 1 : 0;
      if (margin > 0.0 && (slow_steps >= 10 || grid.s >= 0.5 * config.s_max * (1 - 1e-14))) {
        margin = 0.0;
        ds = config.ds_initial;
      }
      curvature = energy.curvature(grid.states, margin);
      // a short step may only mean a small ds; confirm with the undamped step
      if (moved < tol && grid.s < config.s_max * (1 - 1e-14)) {
        const auto newton = solve_block_tridiagonal(
            *curvature, 0.0, Trajectory(-current.gradient.cwiseProduct(mask)), mask);
        if (newton && newton->cwiseAbs().maxCoeff() < tol) {
          if (margin == 0.0) {
            result.status = SolveStatus::kStationary;
            break;
          }
          margin = 0.0;
          ds = config.ds_initial;
          curvature = energy.curvature(grid.states, margin);
        }
      }
    }
  }
  result.curve = std::move(grid);
  return result;
}

}  // namespace aghf
