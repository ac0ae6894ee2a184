#pragma once

// Single rigid body legged model and the generic control-affine system
// interface xdot = F_d(x) + F(x) u used by the heat-flow planner.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "aghf/errors.hpp"

namespace aghf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
/// One row per time node, one column per state (or control).
using Trajectory = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VecRef = Eigen::Ref<Vec>;
using ConstVecRef = Eigen::Ref<const Vec>;
using MatRef = Eigen::Ref<Mat>;

/// Planar cross product a_x b_y - b_x a_y.
inline double cross2d(const Vec2& a, const Vec2& b) { return a.x() * b.y() - b.x() * a.y(); }

struct RobotParams {
  double mass = 2.0;                ///< kg
  double inertia = 1.0;             ///< kg m^2
  double gravity = 9.81;            ///< m/s^2
  int legs = 1;
  double kinematic_radius = 1.0;    ///< m, max hip-to-foot distance
  double min_com_clearance = 0.3;   ///< m
  double friction = 1.0;            ///< Coulomb coefficient

  void validate() const {
    if (!(mass > 0)) throw ConfigError("mass", "must be positive");
    if (!(inertia > 0)) throw ConfigError("inertia", "must be positive");
    if (legs < 1) throw ConfigError("legs", "must be at least 1");
    if (!(kinematic_radius > 0)) throw ConfigError("kinematic_radius", "must be positive");
    if (!(min_com_clearance >= 0)) throw ConfigError("min_com_clearance", "must be non-negative");
    if (!(friction >= 0)) throw ConfigError("friction", "must be non-negative");
    if (!std::isfinite(gravity)) throw ConfigError("gravity", "must be finite");
  }
};

/// Index map for x = [p, theta, pdot, thetadot, f_1, p_1, ..., f_k, p_k].
/// Controls are u = [fdot_1, pdot_1, ..., fdot_k, pdot_k].
class StateLayout {
 public:
  static constexpr int kBase = 6;
  static constexpr int kPerLeg = 4;
  static constexpr int kPx = 0;
  static constexpr int kPy = 1;
  static constexpr int kTheta = 2;
  static constexpr int kVx = 3;
  static constexpr int kVy = 4;
  static constexpr int kOmega = 5;

  explicit StateLayout(int legs) : legs_(legs) {
    if (legs < 1) throw ConfigError("legs", "must be at least 1");
  }

  int legs() const { return legs_; }
  int state_dim() const { return kBase + kPerLeg * legs_; }
  int control_dim() const { return kPerLeg * legs_; }

  /// First index of the contact force f_i (0-based leg index).
  int force(int leg) const { return kBase + kPerLeg * leg; }
  /// First index of the foot position p_i.
  int foot(int leg) const { return kBase + kPerLeg * leg + 2; }

  static Vec2 com(const ConstVecRef& x) { return {x[kPx], x[kPy]}; }
  static Vec2 com_velocity(const ConstVecRef& x) { return {x[kVx], x[kVy]}; }
  Vec2 force_of(const ConstVecRef& x, int leg) const { return {x[force(leg)], x[force(leg) + 1]}; }
  Vec2 foot_of(const ConstVecRef& x, int leg) const { return {x[foot(leg)], x[foot(leg) + 1]}; }

  std::string state_name(int index) const {
    static const char* base[] = {"px", "py", "theta", "vx", "vy", "omega"};
    if (index < kBase) return base[index];
    const int leg = (index - kBase) / kPerLeg + 1;
    static const char* per_leg[] = {"f%dx", "f%dy", "p%dx", "p%dy"};
    char buf[16];
    std::snprintf(buf, sizeof(buf), per_leg[(index - kBase) % kPerLeg], leg);
    return buf;
  }

  std::string control_name(int index) const {
    const int leg = index / kPerLeg + 1;
    static const char* per_leg[] = {"u%dx", "u%dy", "v%dx", "v%dy"};
    char buf[16];
    std::snprintf(buf, sizeof(buf), per_leg[index % kPerLeg], leg);
    return buf;
  }

 private:
  int legs_;
};

/// Terrain given as the zero set of a C^2 function f_terr(c_x, c_y); the
/// positive side is free space.
class Terrain {
 public:
  using ValueFn = std::function<double(const Vec2&)>;
  using GradientFn = std::function<Vec2(const Vec2&)>;
  using HessianFn = std::function<Mat2(const Vec2&)>;

  Terrain(std::string name, ValueFn value, GradientFn gradient, HessianFn hessian = {})
      : name_(std::move(name)), value_(std::move(value)), gradient_(std::move(gradient)),
        hessian_(std::move(hessian)) {}

  static Terrain flat() {
    return Terrain(
        "flat", [](const Vec2& c) { return c.y(); }, [](const Vec2&) { return Vec2(0.0, 1.0); },
        [](const Vec2&) { return Mat2::Zero().eval(); });
  }

  /// f_terr = c_y - amplitude * cos(frequency * c_x).
  static Terrain sinusoid(double amplitude, double frequency) {
    return Terrain(
        "sinusoid",
        [=](const Vec2& c) { return c.y() - amplitude * std::cos(frequency * c.x()); },
        [=](const Vec2& c) { return Vec2(amplitude * frequency * std::sin(frequency * c.x()), 1.0); },
        [=](const Vec2& c) {
          Mat2 h = Mat2::Zero();
          h(0, 0) = amplitude * frequency * frequency * std::cos(frequency * c.x());
          return h;
        });
  }

  /// f_terr = c_y - s(c_x) with s the natural cubic spline through the
  /// samples (linear beyond the end samples).
  static Terrain table(std::vector<double> xs, std::vector<double> heights) {
    const int n = static_cast<int>(xs.size());
    if (n < 2 || heights.size() != xs.size())
      throw ConfigError("terrain_table", "need at least two (x, height) samples");
    for (int i = 0; i < n; ++i) {
      if (!std::isfinite(xs[i]) || !std::isfinite(heights[i]))
        throw ConfigError("terrain_table", "samples must be finite");
      if (i > 0 && !(xs[i] > xs[i - 1]))
        throw ConfigError("terrain_table", "x samples must be strictly increasing");
    }
    // second derivatives from the tridiagonal system
    std::vector<double> m(n, 0.0), c(n, 0.0), d(n, 0.0);
    for (int i = 1; i + 1 < n; ++i) {
      const double h0 = xs[i] - xs[i - 1];
      const double h1 = xs[i + 1] - xs[i];
      const double diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
      c[i] = h1 / diag;
      d[i] = (6.0 * ((heights[i + 1] - heights[i]) / h1 - (heights[i] - heights[i - 1]) / h0) -
              h0 * d[i - 1]) / diag;
    }
    for (int i = n - 2; i >= 1; --i) m[i] = d[i] - c[i] * m[i + 1];

    struct Piece {
      double value, slope, curvature;
    };
    auto eval = [xs = std::move(xs), y = std::move(heights), m = std::move(m)](double x) -> Piece {
      const int n = static_cast<int>(xs.size());
      auto end_slope = [&](int i) {
        const double h = xs[i + 1] - xs[i];
        return std::pair{(y[i + 1] - y[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0,
                         (y[i + 1] - y[i]) / h + h * (m[i] + 2.0 * m[i + 1]) / 6.0};
      };
      if (x <= xs.front()) {
        const double slope = end_slope(0).first;
        return {y.front() + slope * (x - xs.front()), slope, 0.0};
      }
      if (x >= xs.back()) {
        const double slope = end_slope(n - 2).second;
        return {y.back() + slope * (x - xs.back()), slope, 0.0};
      }
      const int i = static_cast<int>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) - 1;
      const double h = xs[i + 1] - xs[i];
      const double a = (xs[i + 1] - x) / h;
      const double b = (x - xs[i]) / h;
      return {a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0,
              (y[i + 1] - y[i]) / h + ((1.0 - 3.0 * a * a) * m[i] + (3.0 * b * b - 1.0) * m[i + 1]) * h / 6.0,
              a * m[i] + b * m[i + 1]};
    };
    return Terrain(
        "table", [=](const Vec2& p) { return p.y() - eval(p.x()).value; },
        [=](const Vec2& p) { return Vec2(-eval(p.x()).slope, 1.0); },
        [=](const Vec2& p) {
          Mat2 h = Mat2::Zero();
          h(0, 0) = -eval(p.x()).curvature;
          return h;
        });
  }

  const std::string& name() const { return name_; }
  double value(const Vec2& c) const { return value_(c); }
  Vec2 gradient(const Vec2& c) const { return gradient_(c); }

  /// Analytic Hessian when supplied, otherwise a central difference of the
  /// gradient.
  Mat2 hessian(const Vec2& c) const {
    if (hessian_) return hessian_(c);
    constexpr double h = 1e-6;
    Mat2 out;
    for (int k = 0; k < 2; ++k) {
      Vec2 e = Vec2::Zero();
      e[k] = h;
      out.col(k) = (gradient_(c + e) - gradient_(c - e)) / (2 * h);
    }
    return 0.5 * (out + out.transpose());
  }

 private:
  std::string name_;
  ValueFn value_;
  GradientFn gradient_;
  HessianFn hessian_;
};

struct TerrainFrame {
  Vec2 normal;
  Vec2 tangent;
};

/// T is N rotated by -90 degrees.
inline Vec2 rotate_minus_90(const Vec2& v) { return {v.y(), -v.x()}; }

inline TerrainFrame terrain_frame(const Terrain& terrain, const Vec2& point) {
  const Vec2 g = terrain.gradient(point);
  const double norm = g.norm();
  if (!(norm >= 1e-12)) throw ZeroGradient("terrain gradient vanishes at contact point");
  const Vec2 n = g / norm;
  return {n, rotate_minus_90(n)};
}

/// Jacobians dN/dpoint and dT/dpoint of the contact frame.
struct TerrainFrameJacobian {
  Mat2 normal;
  Mat2 tangent;
};

inline TerrainFrameJacobian terrain_frame_jacobian(const Terrain& terrain, const Vec2& point) {
  const Vec2 g = terrain.gradient(point);
  const double norm = g.norm();
  if (!(norm >= 1e-12)) throw ZeroGradient("terrain gradient vanishes at contact point");
  const Vec2 n = g / norm;
  const Mat2 dn = (Mat2::Identity() - n * n.transpose()) * terrain.hessian(point) / norm;
  Mat2 rot;
  rot << 0, 1, -1, 0;
  return {dn, rot * dn};
}

/// Orthonormal basis of the orthogonal complement of span(F), obtained by
/// Gram-Schmidt against the standard basis.
inline Mat gram_schmidt_completion(const Mat& control) {
  const int n = static_cast<int>(control.rows());
  const int m = static_cast<int>(control.cols());
  Mat basis(n, n);
  int count = 0;
  auto orthogonalize = [&](Vec v) {
    // twice is enough
    for (int pass = 0; pass < 2; ++pass)
      for (int j = 0; j < count; ++j) v -= basis.col(j).dot(v) * basis.col(j);
    return v;
  };
  for (int j = 0; j < m; ++j) {
    const double scale = control.col(j).norm();
    Vec v = orthogonalize(control.col(j));
    if (!(scale > 0) || v.norm() < 1e-10 * scale)
      throw RankDeficient("control matrix loses column rank");
    basis.col(count++) = v.normalized();
  }
  Mat completion(n, n - m);
  int found = 0;
  for (int e = 0; e < n && found < n - m; ++e) {
    Vec v = orthogonalize(Vec::Unit(n, e));
    if (v.norm() < 1e-8) continue;
    v.normalize();
    basis.col(count++) = v;
    completion.col(found++) = v;
  }
  if (found != n - m) throw RankDeficient("could not complete the frame");
  return completion;
}

/// xdot = F_d(x) + F(x) u together with an unactuated completion F_c.
class ControlAffineSystem {
 public:
  virtual ~ControlAffineSystem() = default;

  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;

  virtual void drift(const ConstVecRef& x, VecRef out) const = 0;

  /// dF_d/dx. The default is a central difference of `drift`.
  virtual void drift_jacobian(const ConstVecRef& x, MatRef out) const {
    const int n = state_dim();
    constexpr double h = 1e-7;
    Vec xp = x, fp(n), fm(n);
    for (int k = 0; k < n; ++k) {
      xp[k] = x[k] + h;
      drift(xp, fp);
      xp[k] = x[k] - h;
      drift(xp, fm);
      xp[k] = x[k];
      out.col(k) = (fp - fm) / (2 * h);
    }
  }

  /// sum_k q_k d2F_d,k/dx2, i.e. d(J^T q)/dx. The default is a central
  /// difference of `drift_jacobian`.
  virtual void drift_second_order(const ConstVecRef& x, const ConstVecRef& q, MatRef out) const {
    const int n = state_dim();
    constexpr double h = 1e-6;
    Vec xp = x;
    Mat jp(n, n), jm(n, n);
    for (int k = 0; k < n; ++k) {
      xp[k] = x[k] + h;
      drift_jacobian(xp, jp);
      xp[k] = x[k] - h;
      drift_jacobian(xp, jm);
      xp[k] = x[k];
      out.col(k) = (jp - jm).transpose() * q / (2 * h);
    }
    out = 0.5 * (out + out.transpose()).eval();
  }

  virtual Mat control_matrix(const ConstVecRef& x) const = 0;

  virtual Mat completion(const ConstVecRef& x) const {
    return gram_schmidt_completion(control_matrix(x));
  }

  /// Fbar = [F_c | F].
  Mat frame(const ConstVecRef& x) const {
    const int n = state_dim();
    const int m = control_dim();
    Mat out(n, n);
    out.leftCols(n - m) = completion(x);
    out.rightCols(m) = control_matrix(x);
    return out;
  }

  /// Directional derivative dFbar/dx_k. Central difference unless overridden.
  virtual Mat frame_derivative(const ConstVecRef& x, int k) const {
    constexpr double h = 1e-6;
    Vec xp = x;
    xp[k] += h;
    Mat plus = frame(xp);
    xp[k] = x[k] - h;
    return (plus - frame(xp)) / (2 * h);
  }

  /// True when Fbar does not depend on x.
  virtual bool constant_frame() const { return false; }
  /// True when Fbar is exactly the identity.
  virtual bool identity_frame() const { return false; }

  Vec drift(const ConstVecRef& x) const {
    Vec out(state_dim());
    drift(x, out);
    return out;
  }

  Mat drift_jacobian(const ConstVecRef& x) const {
    Mat out = Mat::Zero(state_dim(), state_dim());
    drift_jacobian(x, out);
    return out;
  }
};

/// F = [O_{6x4k}; I_{4k}].
inline Mat legged_control_matrix(int legs) {
  const StateLayout layout(legs);
  Mat f = Mat::Zero(layout.state_dim(), layout.control_dim());
  f.bottomRows(layout.control_dim()).setIdentity();
  return f;
}

/// Planar single rigid body with k massless legs; contact forces and foot
/// positions are states driven by their rates.
class LeggedSystem final : public ControlAffineSystem {
 public:
  using ControlAffineSystem::drift;
  using ControlAffineSystem::drift_jacobian;

  explicit LeggedSystem(RobotParams params) : params_(params), layout_(params.legs) {
    params_.validate();
  }

  const RobotParams& params() const { return params_; }
  const StateLayout& layout() const { return layout_; }

  int state_dim() const override { return layout_.state_dim(); }
  int control_dim() const override { return layout_.control_dim(); }

  void drift(const ConstVecRef& x, VecRef out) const override {
    using L = StateLayout;
    out.setZero();
    out[L::kPx] = x[L::kVx];
    out[L::kPy] = x[L::kVy];
    out[L::kTheta] = x[L::kOmega];
    const Vec2 p = L::com(x);
    Vec2 total = Vec2::Zero();
    double torque = 0.0;
    for (int i = 0; i < layout_.legs(); ++i) {
      const Vec2 f = layout_.force_of(x, i);
      total += f;
      torque += cross2d(f, p - layout_.foot_of(x, i));
    }
    out[L::kVx] = total.x() / params_.mass;
    out[L::kVy] = total.y() / params_.mass - params_.gravity;
    out[L::kOmega] = torque / params_.inertia;
  }

  void drift_jacobian(const ConstVecRef& x, MatRef out) const override {
    using L = StateLayout;
    out.setZero();
    out(L::kPx, L::kVx) = 1.0;
    out(L::kPy, L::kVy) = 1.0;
    out(L::kTheta, L::kOmega) = 1.0;
    const double inv_m = 1.0 / params_.mass;
    const double inv_i = 1.0 / params_.inertia;
    const Vec2 p = L::com(x);
    for (int i = 0; i < layout_.legs(); ++i) {
      const int fi = layout_.force(i);
      const int pi = layout_.foot(i);
      const Vec2 f = layout_.force_of(x, i);
      const Vec2 arm = p - layout_.foot_of(x, i);
      out(L::kVx, fi) = inv_m;
      out(L::kVy, fi + 1) = inv_m;
      // torque = f_x arm_y - f_y arm_x
      out(L::kOmega, fi) = arm.y() * inv_i;
      out(L::kOmega, fi + 1) = -arm.x() * inv_i;
      out(L::kOmega, L::kPx) -= f.y() * inv_i;
      out(L::kOmega, L::kPy) += f.x() * inv_i;
      out(L::kOmega, pi) = f.y() * inv_i;
      out(L::kOmega, pi + 1) = -f.x() * inv_i;
    }
  }

  /// Only the torque row is nonlinear, and it is bilinear.
  void drift_second_order(const ConstVecRef&, const ConstVecRef& q, MatRef out) const override {
    using L = StateLayout;
    out.setZero();
    const double w = q[L::kOmega] / params_.inertia;
    for (int i = 0; i < layout_.legs(); ++i) {
      const int fi = layout_.force(i);
      const int pi = layout_.foot(i);
      auto set = [&](int a, int b, double v) {
        out(a, b) += v;
        out(b, a) += v;
      };
      set(fi, L::kPy, w);
      set(fi, pi + 1, -w);
      set(fi + 1, L::kPx, -w);
      set(fi + 1, pi, w);
    }
  }

  Mat control_matrix(const ConstVecRef&) const override {
    return legged_control_matrix(layout_.legs());
  }

  /// F_c = [I_6; O].
  Mat completion(const ConstVecRef&) const override {
    Mat c = Mat::Zero(state_dim(), StateLayout::kBase);
    c.topRows(StateLayout::kBase).setIdentity();
    return c;
  }

  Mat frame_derivative(const ConstVecRef&, int) const override {
    return Mat::Zero(state_dim(), state_dim());
  }
  bool constant_frame() const override { return true; }
  bool identity_frame() const override { return true; }

 private:
  RobotParams params_;
  StateLayout layout_;
};

/// Kinematic unicycle (x, y, heading) with forward speed and turn rate;
/// driftless, with an x-dependent frame.
class UnicycleSystem final : public ControlAffineSystem {
 public:
  using ControlAffineSystem::drift;
  using ControlAffineSystem::drift_jacobian;

  int state_dim() const override { return 3; }
  int control_dim() const override { return 2; }

  void drift(const ConstVecRef&, VecRef out) const override { out.setZero(); }
  void drift_jacobian(const ConstVecRef&, MatRef out) const override { out.setZero(); }
  void drift_second_order(const ConstVecRef&, const ConstVecRef&, MatRef out) const override {
    out.setZero();
  }

  Mat control_matrix(const ConstVecRef& x) const override {
    Mat f = Mat::Zero(3, 2);
    f(0, 0) = std::cos(x[2]);
    f(1, 0) = std::sin(x[2]);
    f(2, 1) = 1.0;
    return f;
  }

  /// Sideways direction, the one a unicycle cannot move along.
  Mat completion(const ConstVecRef& x) const override {
    Mat c(3, 1);
    c << -std::sin(x[2]), std::cos(x[2]), 0.0;
    return c;
  }

  Mat frame_derivative(const ConstVecRef& x, int k) const override {
    Mat d = Mat::Zero(3, 3);
    if (k != 2) return d;
    d(0, 0) = -std::cos(x[2]);
    d(1, 0) = -std::sin(x[2]);
    d(0, 1) = -std::sin(x[2]);
    d(1, 1) = std::cos(x[2]);
    return d;
  }
};

/// q'' = u, state (q, qdot).
class DoubleIntegrator final : public ControlAffineSystem {
 public:
  using ControlAffineSystem::drift;
  using ControlAffineSystem::drift_jacobian;

  int state_dim() const override { return 2; }
  int control_dim() const override { return 1; }

  void drift(const ConstVecRef& x, VecRef out) const override {
    out[0] = x[1];
    out[1] = 0.0;
  }
  void drift_jacobian(const ConstVecRef&, MatRef out) const override {
    out.setZero();
    out(0, 1) = 1.0;
  }
  void drift_second_order(const ConstVecRef&, const ConstVecRef&, MatRef out) const override {
    out.setZero();
  }
  Mat control_matrix(const ConstVecRef&) const override {
    Mat f(2, 1);
    f << 0.0, 1.0;
    return f;
  }
  Mat frame_derivative(const ConstVecRef&, int) const override { return Mat::Zero(2, 2); }
  bool constant_frame() const override { return true; }
  bool identity_frame() const override { return true; }
};

/// Legged drift F_d(x) for the given parameters.
inline Vec legged_drift(const ConstVecRef& x, const RobotParams& params) {
  return LeggedSystem(params).drift(x);
}

}  // namespace aghf
