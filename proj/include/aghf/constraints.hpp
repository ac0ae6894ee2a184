#pragma once

// Scalar state constraints h_j(x) (h = 0 or h <= 0), their phase binding and
// switch functions, plus the augmented system that accumulates their error.

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "aghf/model.hpp"
#include "aghf/schedule.hpp"

namespace aghf {

enum class ConstraintKind { kEquality, kInequality };

struct Binding {
  enum class Phase { kAlways, kStance, kFlight };
  Phase phase = Phase::kAlways;
  int leg = -1;

  static Binding always() { return {}; }
  static Binding stance(int leg) { return {Phase::kStance, leg}; }
  static Binding flight(int leg) { return {Phase::kFlight, leg}; }
};

/// Physical unit class of a constraint value, used to pick audit tolerances.
enum class ConstraintUnit { kLength, kArea, kForce };

struct ConstraintSpec {
  std::string id;
  ConstraintKind kind = ConstraintKind::kEquality;
  Binding binding;
  double weight = 1.0;
  ConstraintUnit unit = ConstraintUnit::kLength;
  std::function<double(const ConstVecRef&)> value;
  /// grad += scale * dh/dx
  std::function<void(const ConstVecRef&, double scale, VecRef grad)> accumulate_gradient;
  /// State indices h depends on; empty means all.
  std::vector<int> support;

  Vec gradient(const ConstVecRef& x) const {
    Vec g = Vec::Zero(x.size());
    accumulate_gradient(x, 1.0, g);
    return g;
  }

  bool is_equality() const { return kind == ConstraintKind::kEquality; }
};

/// B_j(t).
inline double constraint_activation(const ConstraintSpec& spec, const ContactSchedule& schedule,
                                    double t, double alpha) {
  switch (spec.binding.phase) {
    case Binding::Phase::kAlways:
      return 1.0;
    case Binding::Phase::kStance:
      return schedule.activation(spec.binding.leg, t, alpha);
    case Binding::Phase::kFlight:
      return 1.0 - schedule.activation(spec.binding.leg, t, alpha);
  }
  return 1.0;
}

/// S_j(t, x) given the phase activation B_j(t) and the constraint value h.
inline double switch_from(const ConstraintSpec& spec, double activation, double h, double alpha) {
  if (spec.is_equality()) return activation;
  return smooth_heaviside(h, alpha) * activation;
}

inline double switch_value(const ConstraintSpec& spec, const ContactSchedule& schedule, double t,
                           const ConstVecRef& x, double alpha) {
  return switch_from(spec, constraint_activation(spec, schedule, t, alpha), spec.value(x), alpha);
}

struct LocomotionConstraintOptions {
  double weight = 1e5;
  /// Replace |p - p_i|^2 <= R^2 by (|p - p_i| - R)^2 <= dR^2.
  bool torso_collision = false;
  double torso_band = 0.1;
};

/// Per leg: S1 foot on terrain, S2 push only, S3a/S3b friction cone (stance);
/// F1/F2 zero force, F3 foot above terrain (flight); K1 leg reach (always).
/// Followed by C1, CoM clearance above the terrain. 8k + 1 specs in total.
inline std::vector<ConstraintSpec> build_locomotion_constraints(
    const RobotParams& params, std::shared_ptr<const Terrain> terrain,
    const LocomotionConstraintOptions& options = {}) {
  params.validate();
  const StateLayout layout(params.legs);
  const double mu = params.friction;
  const double reach = params.kinematic_radius;
  const double w = options.weight;
  std::vector<ConstraintSpec> specs;

  auto add = [&](std::string id, ConstraintKind kind, Binding binding, ConstraintUnit unit,
                 std::vector<int> support, auto value, auto gradient) {
    ConstraintSpec s;
    s.id = std::move(id);
    s.kind = kind;
    s.binding = binding;
    s.weight = w;
    s.unit = unit;
    s.value = value;
    s.accumulate_gradient = gradient;
    s.support = std::move(support);
    specs.push_back(std::move(s));
  };

  const int px = StateLayout::kPx;
  const int py = StateLayout::kPy;
  for (int i = 0; i < params.legs; ++i) {
    const std::string leg = std::to_string(i + 1);
    const int fi = layout.force(i);
    const int pi = layout.foot(i);
    const std::vector<int> foot_only{pi, pi + 1};
    const std::vector<int> force_and_foot{fi, fi + 1, pi, pi + 1};
    const std::vector<int> com_and_foot{px, py, pi, pi + 1};
    auto foot = [=](const ConstVecRef& x) { return Vec2(x[pi], x[pi + 1]); };
    auto force = [=](const ConstVecRef& x) { return Vec2(x[fi], x[fi + 1]); };

    add("S1_" + leg, ConstraintKind::kEquality, Binding::stance(i), ConstraintUnit::kLength,
        foot_only, [=](const ConstVecRef& x) { return terrain->value(foot(x)); },
        [=](const ConstVecRef& x, double scale, VecRef g) {
          g.segment<2>(pi) += scale * terrain->gradient(foot(x));
        });

    add("S2_" + leg, ConstraintKind::kInequality, Binding::stance(i), ConstraintUnit::kForce,
        force_and_foot,
        [=](const ConstVecRef& x) { return -force(x).dot(terrain_frame(*terrain, foot(x)).normal); },
        [=](const ConstVecRef& x, double scale, VecRef g) {
          const Vec2 p = foot(x);
          const Vec2 f = force(x);
          g.segment<2>(fi) -= scale * terrain_frame(*terrain, p).normal;
          g.segment<2>(pi) -= scale * terrain_frame_jacobian(*terrain, p).normal.transpose() * f;
        });

    for (const double sign : {1.0, -1.0}) {
      add((sign > 0 ? "S3a_" : "S3b_") + leg, ConstraintKind::kInequality, Binding::stance(i),
          ConstraintUnit::kForce, force_and_foot,
          [=](const ConstVecRef& x) {
            const auto frame = terrain_frame(*terrain, foot(x));
            const Vec2 f = force(x);
            return sign * f.dot(frame.tangent) - mu * f.dot(frame.normal);
          },
          [=](const ConstVecRef& x, double scale, VecRef g) {
            const Vec2 p = foot(x);
            const Vec2 f = force(x);
            const auto frame = terrain_frame(*terrain, p);
            const auto jac = terrain_frame_jacobian(*terrain, p);
            g.segment<2>(fi) += scale * (sign * frame.tangent - mu * frame.normal);
            g.segment<2>(pi) += scale * (sign * jac.tangent - mu * jac.normal).transpose() * f;
          });
    }

    for (const int axis : {0, 1}) {
      add((axis == 0 ? "F1_" : "F2_") + leg, ConstraintKind::kEquality, Binding::flight(i),
          ConstraintUnit::kForce, std::vector<int>{fi + axis},
          [=](const ConstVecRef& x) { return x[fi + axis]; },
          [=](const ConstVecRef&, double scale, VecRef g) { g[fi + axis] += scale; });
    }

    add("F3_" + leg, ConstraintKind::kInequality, Binding::flight(i), ConstraintUnit::kLength,
        foot_only, [=](const ConstVecRef& x) { return -terrain->value(foot(x)); },
        [=](const ConstVecRef& x, double scale, VecRef g) {
          g.segment<2>(pi) -= scale * terrain->gradient(foot(x));
        });

    if (!options.torso_collision) {
      add("K1_" + leg, ConstraintKind::kInequality, Binding::always(), ConstraintUnit::kArea,
          com_and_foot, [=](const ConstVecRef& x) {
            return (StateLayout::com(x) - foot(x)).squaredNorm() - reach * reach;
          },
          [=](const ConstVecRef& x, double scale, VecRef g) {
            const Vec2 d = 2.0 * scale * (StateLayout::com(x) - foot(x));
            g.segment<2>(StateLayout::kPx) += d;
            g.segment<2>(pi) -= d;
          });
    } else {
      const double band = options.torso_band;
      add("K1_" + leg, ConstraintKind::kInequality, Binding::always(), ConstraintUnit::kArea,
          com_and_foot, [=](const ConstVecRef& x) {
            const double r = (StateLayout::com(x) - foot(x)).norm() - reach;
            return r * r - band * band;
          },
          [=](const ConstVecRef& x, double scale, VecRef g) {
            const Vec2 d = StateLayout::com(x) - foot(x);
            const double len = d.norm();
            if (len < 1e-12) return;
            const Vec2 dh = 2.0 * scale * (len - reach) * d / len;
            g.segment<2>(StateLayout::kPx) += dh;
            g.segment<2>(pi) -= dh;
          });
    }
  }

  add("C1", ConstraintKind::kInequality, Binding::always(), ConstraintUnit::kLength,
      std::vector<int>{px, py}, [=, hc = params.min_com_clearance](const ConstVecRef& x) {
        return hc - terrain->value(StateLayout::com(x));
      },
      [=](const ConstVecRef& x, double scale, VecRef g) {
        g.segment<2>(StateLayout::kPx) -= scale * terrain->gradient(StateLayout::com(x));
      });
  return specs;
}

/// System augmented with one accumulator per constraint,
/// zeta_j' = h_j(x) S_j(t, x).
class AugmentedSystem {
 public:
  AugmentedSystem(std::shared_ptr<const ControlAffineSystem> base,
                  std::vector<ConstraintSpec> specs, ContactSchedule schedule, double alpha)
      : base_(std::move(base)), specs_(std::move(specs)), schedule_(std::move(schedule)),
        alpha_(alpha) {
    if (specs_.empty()) throw ConfigError("constraints", "augmentation needs at least one constraint");
  }

  int base_dim() const { return base_->state_dim(); }
  int state_dim() const { return base_dim() + static_cast<int>(specs_.size()); }
  int control_dim() const { return base_->control_dim() + static_cast<int>(specs_.size()); }
  const std::vector<ConstraintSpec>& constraints() const { return specs_; }

  /// [F_d(x); 0].
  Vec drift(const ConstVecRef& xhat) const {
    Vec out = Vec::Zero(state_dim());
    base_->drift(xhat.head(base_dim()), out.head(base_dim()));
    return out;
  }

  /// blkdiag(F(x), I_kc).
  Mat control_matrix(const ConstVecRef& xhat) const {
    const int n = base_dim();
    const int m = base_->control_dim();
    const int kc = static_cast<int>(specs_.size());
    Mat out = Mat::Zero(state_dim(), control_dim());
    out.topLeftCorner(n, m) = base_->control_matrix(xhat.head(n));
    out.bottomRightCorner(kc, kc).setIdentity();
    return out;
  }

  /// h_j(x) S_j(t, x) for every constraint.
  Vec accumulator_rates(double t, const ConstVecRef& x) const {
    Vec out(specs_.size());
    for (std::size_t j = 0; j < specs_.size(); ++j) {
      const double h = specs_[j].value(x);
      const double b = constraint_activation(specs_[j], schedule_, t, alpha_);
      out[j] = h * switch_from(specs_[j], b, h, alpha_);
    }
    return out;
  }

  /// zeta_j(t_i) by trapezoidal quadrature of the rates along a trajectory.
  Trajectory accumulate(const Vec& times, const Trajectory& states) const {
    const int nt = static_cast<int>(times.size());
    Trajectory zeta = Trajectory::Zero(nt, specs_.size());
    Vec prev = accumulator_rates(times[0], states.row(0).transpose());
    for (int i = 1; i < nt; ++i) {
      Vec cur = accumulator_rates(times[i], states.row(i).transpose());
      zeta.row(i) = zeta.row(i - 1) + 0.5 * (times[i] - times[i - 1]) * (prev + cur).transpose();
      prev = std::move(cur);
    }
    return zeta;
  }

 private:
  std::shared_ptr<const ControlAffineSystem> base_;
  std::vector<ConstraintSpec> specs_;
  ContactSchedule schedule_;
  double alpha_;
};

inline AugmentedSystem augment(std::shared_ptr<const ControlAffineSystem> system,
                               std::vector<ConstraintSpec> specs, ContactSchedule schedule,
                               double alpha) {
  return AugmentedSystem(std::move(system), std::move(specs), std::move(schedule), alpha);
}

}  // namespace aghf
