#pragma once

// Penalty matrix D(t), Riemannian metric G = Fbar^-T D Fbar^-1, the expanded
// actuated-length Lagrangian and its Euler-Lagrange flow.

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <vector>

#include "aghf/constraints.hpp"
#include "aghf/model.hpp"
#include "aghf/schedule.hpp"

namespace aghf {

/// Diagonal time-varying penalty. For the legged layout
///   D = diag(lambda * 1_6, Lambda_1, ..., Lambda_k),
///   Lambda_i = diag(1, 1, 1 + lambda A_i(t), 1 + lambda A_i(t)),
/// otherwise the constant diag(lambda * 1_{n-m}, 1_m).
class PenaltyMatrix {
 public:
  static PenaltyMatrix uniform(int state_dim, int control_dim, double lambda) {
    PenaltyMatrix d;
    d.n_ = state_dim;
    d.m_ = control_dim;
    d.lambda_ = lambda;
    d.check();
    return d;
  }

  static PenaltyMatrix legged(int legs, double lambda, ContactSchedule schedule,
                              SmoothingParams smoothing) {
    const StateLayout layout(legs);
    PenaltyMatrix d;
    d.n_ = layout.state_dim();
    d.m_ = layout.control_dim();
    d.lambda_ = lambda;
    d.legs_ = legs;
    d.schedule_ = std::move(schedule);
    d.smoothing_ = smoothing;
    d.check();
    if (d.schedule_.legs() != legs)
      throw ConfigError("schedule", "needs one stance list per leg");
    return d;
  }

  double lambda() const { return lambda_; }
  int state_dim() const { return n_; }
  bool is_legged() const { return legs_ > 0; }

  Vec diagonal(double t) const {
    Vec d = Vec::Ones(n_);
    d.head(n_ - m_).setConstant(lambda_);
    for (int i = 0; i < legs_; ++i) {
      const double a = schedule_.activation(i, t, smoothing_.alpha);
      const int foot = StateLayout(legs_).foot(i);
      d[foot] = d[foot + 1] = 1.0 + lambda_ * a;
    }
    return d;
  }

  /// dD/dt from the Gaussian step derivative.
  Vec rate(double t) const {
    Vec d = Vec::Zero(n_);
    for (int i = 0; i < legs_; ++i) {
      const double a = schedule_.activation_time_derivative(i, t, smoothing_.beta);
      const int foot = StateLayout(legs_).foot(i);
      d[foot] = d[foot + 1] = lambda_ * a;
    }
    return d;
  }

  Mat matrix(double t) const { return diagonal(t).asDiagonal(); }

 private:
  void check() const {
    if (!(lambda_ > 0)) throw ConfigError("lambda", "must be positive");
    if (m_ < 0 || m_ > n_) throw ConfigError("control_dim", "must lie in [0, n]");
  }

  int n_ = 0;
  int m_ = 0;
  double lambda_ = 1.0;
  int legs_ = 0;
  ContactSchedule schedule_;
  SmoothingParams smoothing_;
};

/// D(t) for the legged layout.
inline Mat penalty_matrix(double t, double lambda, const ContactSchedule& schedule, double alpha) {
  SmoothingParams smoothing;
  smoothing.alpha = alpha;
  return PenaltyMatrix::legged(schedule.legs(), lambda, schedule, smoothing).matrix(t);
}

/// Fbar^-1 at x, or SingularFrame.
inline Mat frame_inverse(const ControlAffineSystem& system, const ConstVecRef& x) {
  const int n = system.state_dim();
  if (system.identity_frame()) return Mat::Identity(n, n);
  const Mat fbar = system.frame(x);
  Eigen::FullPivLU<Mat> lu(fbar);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible()) throw SingularFrame("Fbar = [F_c | F] is not invertible");
  return lu.inverse();
}

/// G = Fbar^-T D Fbar^-1. Exactly D for identity frames.
inline Mat metric(const ControlAffineSystem& system, const PenaltyMatrix& penalty, double t,
                  const ConstVecRef& x) {
  const Vec d = penalty.diagonal(t);
  if (system.identity_frame()) return d.asDiagonal();
  const Mat inv = frame_inverse(system, x);
  return inv.transpose() * d.asDiagonal() * inv;
}

/// Add scale * (positive semidefinite part of the symmetric `m`) to `out`.
/// Only rows and columns that are not identically zero enter the eigensolve.
inline void add_psd_part(const Mat& m, double scale, Mat& out) {
  const int n = static_cast<int>(m.rows());
  std::vector<int> idx;
  for (int a = 0; a < n; ++a)
    if (!m.row(a).isZero(0.0)) idx.push_back(a);
  if (idx.empty()) return;
  const int k = static_cast<int>(idx.size());
  Mat sub(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) sub(a, b) = m(idx[a], idx[b]);
  Eigen::SelfAdjointEigenSolver<Mat> eig(sub);
  const Mat v = eig.eigenvectors();
  const Mat part = v * eig.eigenvalues().cwiseMax(0.0).asDiagonal() * v.transpose();
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) out(idx[a], idx[b]) += scale * part(a, b);
}

/// L(t, x, xdot) = (xdot - F_d)^T G (xdot - F_d) + sum_j lambda_j h_j^2 S_j
/// and the flow derived from it.
class ActuatedLagrangian {
 public:
  ActuatedLagrangian(std::shared_ptr<const ControlAffineSystem> system, PenaltyMatrix penalty,
                     std::vector<ConstraintSpec> constraints, ContactSchedule schedule,
                     SmoothingParams smoothing)
      : system_(std::move(system)), penalty_(std::move(penalty)),
        constraints_(std::move(constraints)), schedule_(std::move(schedule)),
        smoothing_(smoothing) {
    smoothing_.validate();
    if (penalty_.state_dim() != system_->state_dim())
      throw ConfigError("penalty", "dimension does not match the system");
  }

  const ControlAffineSystem& system() const { return *system_; }
  std::shared_ptr<const ControlAffineSystem> system_ptr() const { return system_; }
  const PenaltyMatrix& penalty() const { return penalty_; }
  const std::vector<ConstraintSpec>& constraints() const { return constraints_; }
  const ContactSchedule& schedule() const { return schedule_; }
  const SmoothingParams& smoothing() const { return smoothing_; }

  /// B_j(t) for every constraint.
  Vec activations(double t) const {
    Vec b(constraints_.size());
    for (std::size_t j = 0; j < constraints_.size(); ++j)
      b[j] = constraint_activation(constraints_[j], schedule_, t, smoothing_.alpha);
    return b;
  }

  /// sum_j lambda_j h_j^2 S_j, and optionally its x-gradient added to `grad`
  /// with factor `scale`.
  double penalty_term(const ConstVecRef& x, const Vec& activation, double scale = 0.0,
                      Vec* grad = nullptr) const {
    double total = 0.0;
    const double alpha = smoothing_.alpha;
    for (std::size_t j = 0; j < constraints_.size(); ++j) {
      const double b = activation[j];
      if (b <= kInactive) continue;
      const auto& c = constraints_[j];
      const double h = c.value(x);
      if (c.is_equality()) {
        total += c.weight * h * h * b;
        if (grad) c.accumulate_gradient(x, scale * c.weight * 2.0 * h * b, *grad);
      } else {
        const double s = smooth_heaviside(h, alpha);
        total += c.weight * h * h * s * b;
        if (grad) {
          const double ds = smooth_heaviside_slope(h, alpha);
          c.accumulate_gradient(x, scale * c.weight * (2.0 * h * s + h * h * ds) * b, *grad);
        }
      }
    }
    return total;
  }

  double penalty_term(double t, const ConstVecRef& x) const {
    return penalty_term(x, activations(t));
  }

  double lagrangian(double t, const ConstVecRef& x, const ConstVecRef& xdot) const {
    const Vec d = penalty_.diagonal(t);
    Vec r = xdot - system_->drift(x);
    if (!system_->identity_frame()) r = frame_inverse(*system_, x) * r;
    return r.dot(d.cwiseProduct(r)) + penalty_term(t, x);
  }

  /// Pointwise flow value
  ///   Psi = G^-1 [ d/dt(dL/dxdot) - dL/dx ]
  /// with d/dt(dL/dxdot) = 2 G (xddot - J xdot) + 2 Gdot (xdot - F_d) and
  /// dL/dx = -2 J^T G (xdot - F_d) + sum_j lambda_j d(h_j^2 S_j)/dx.
  /// Gdot comes from the Gaussian step derivative. Needs a constant frame.
  Vec euler_lagrange_rhs(double t, const ConstVecRef& x, const ConstVecRef& xdot,
                         const ConstVecRef& xddot) const {
    if (!system_->constant_frame())
      throw Error("pointwise Euler-Lagrange form needs an x-independent frame");
    const Vec d = penalty_.diagonal(t);
    if ((d.array() <= 0).any()) throw SingularMetric("penalty matrix has a nonpositive entry");
    const Vec ddot = penalty_.rate(t);
    const Mat inv = frame_inverse(*system_, x);
    const Mat g = inv.transpose() * d.asDiagonal() * inv;
    const Mat gdot = inv.transpose() * ddot.asDiagonal() * inv;
    const Mat jac = system_->drift_jacobian(x);
    const Vec r = xdot - system_->drift(x);

    Vec rhs = 2.0 * g * (xddot - jac * xdot) + 2.0 * gdot * r + 2.0 * jac.transpose() * (g * r);
    Vec pen = Vec::Zero(x.size());
    penalty_term(x, activations(t), 1.0, &pen);
    rhs -= pen;
    return g.ldlt().solve(rhs);
  }

  static constexpr double kInactive = 1e-14;

 private:
  std::shared_ptr<const ControlAffineSystem> system_;
  PenaltyMatrix penalty_;
  std::vector<ConstraintSpec> constraints_;
  ContactSchedule schedule_;
  SmoothingParams smoothing_;
};

/// The energy E = integral of L dt discretized on a fixed time grid:
/// midpoint rule on every cell for the quadratic part, trapezoid rule at the
/// nodes for the constraint penalties. `evaluate` returns E together with its
/// exact gradient and the flow direction
///   Psi_i = -Gbar_i^-1 (dE/dX_i) / w_i,
/// where w_i is the trapezoid weight and Gbar_i the average of the metric on
/// the cells adjacent to node i.
class DiscreteEnergy {
 public:
  DiscreteEnergy(const ActuatedLagrangian& lagrangian, Vec times)
      : lag_(&lagrangian), times_(std::move(times)) {
    const int nt = static_cast<int>(times_.size());
    if (nt < 2) throw ConfigError("nodes", "need at least two time nodes");
    const int n = lag_->system().state_dim();
    cell_penalty_.resize(nt - 1, n);
    for (int c = 0; c < nt - 1; ++c) {
      const double h = times_[c + 1] - times_[c];
      if (!(h > 0)) throw ConfigError("times", "must be strictly increasing");
      const Vec d = lag_->penalty().diagonal(0.5 * (times_[c] + times_[c + 1]));
      if ((d.array() <= 0).any()) throw SingularMetric("penalty matrix has a nonpositive entry");
      cell_penalty_.row(c) = d.transpose();
    }
    weights_.resize(nt);
    for (int i = 0; i < nt; ++i) {
      const double left = i > 0 ? times_[i] - times_[i - 1] : 0.0;
      const double right = i + 1 < nt ? times_[i + 1] - times_[i] : 0.0;
      weights_[i] = 0.5 * (left + right);
    }
    activation_.resize(nt, lag_->constraints().size());
    for (int i = 0; i < nt; ++i) activation_.row(i) = lag_->activations(times_[i]).transpose();
  }

  const Vec& times() const { return times_; }
  int nodes() const { return static_cast<int>(times_.size()); }
  const ActuatedLagrangian& lagrangian() const { return *lag_; }

  struct Result {
    double energy = 0.0;
    Trajectory gradient;  ///< dE/dX
    Trajectory flow;      ///< Psi
  };

  double energy(const Trajectory& states) const { return run(states, nullptr, nullptr); }

  Result evaluate(const Trajectory& states) const {
    Result r;
    r.energy = run(states, &r.gradient, &r.flow);
    return r;
  }

  /// Convex model of the Hessian of E (block tridiagonal, one n x n block
  /// per node) and the lumped metric mass w_i Gbar_i. The quadratic part is
  /// Gauss-Newton plus the positive semidefinite part of the drift curvature
  /// (identity frames only); the penalty part is exact per node, projected
  /// onto its positive semidefinite part. Inequalities within `margin` of
  /// becoming active get at least the curvature of an active one.
  struct Curvature {
    std::vector<Mat> diagonal;  ///< d2E/dX_i dX_i
    std::vector<Mat> upper;     ///< d2E/dX_i dX_{i+1}
    std::vector<Mat> mass;
  };

  Curvature curvature(const Trajectory& states, double margin = 0.0) const {
    const auto& sys = lag_->system();
    const int nt = nodes();
    const int n = sys.state_dim();
    const bool identity = sys.identity_frame();
    Curvature k;
    k.diagonal.assign(nt, Mat::Zero(n, n));
    k.upper.assign(nt - 1, Mat::Zero(n, n));
    k.mass.assign(nt, Mat::Zero(n, n));
    Vec mid(n), res(n);
    Mat jac = Mat::Zero(n, n), a(n, n), b(n, n), da(n, n), db(n, n), second(n, n), part(n, n);
    std::vector<Mat> cell_metric(nt - 1);
    for (int c = 0; c < nt - 1; ++c) {
      const double h = times_[c + 1] - times_[c];
      mid = 0.5 * (states.row(c) + states.row(c + 1)).transpose();
      const auto d = cell_penalty_.row(c).transpose();
      sys.drift_jacobian(mid, jac);
      if (identity) {
        // dr/dx_c = -I/h - J/2, dr/dx_{c+1} = I/h - J/2
        a = -0.5 * jac;
        a.diagonal().array() -= 1.0 / h;
        b = -0.5 * jac;
        b.diagonal().array() += 1.0 / h;
        cell_metric[c] = d.asDiagonal();
      } else {
        const Mat inv = frame_inverse(sys, mid);
        sys.drift(mid, res);
        res = (states.row(c + 1) - states.row(c)).transpose() / h - res;
        const Vec w = inv * res;
        Mat wx = jac;
        for (int j = 0; j < n; ++j) wx.col(j) += sys.frame_derivative(mid, j) * w;
        wx = -inv * wx;
        a = -inv / h + 0.5 * wx;
        b = inv / h + 0.5 * wx;
        cell_metric[c] = inv.transpose() * d.asDiagonal() * inv;
      }
      if (identity) {
        // r-weighted drift curvature, -(h/4) sum_k q_k d2F_k on all four
        // blocks, keeping only its positive semidefinite part
        sys.drift(mid, res);
        res = (states.row(c + 1) - states.row(c)).transpose() / h - res;
        sys.drift_second_order(mid, Vec(2.0 * d.cwiseProduct(res)), second);
        if (!second.isZero(0.0)) {
          part.setZero();
          add_psd_part(Mat(-0.25 * h * second), 1.0, part);
          k.diagonal[c] += part;
          k.diagonal[c + 1] += part;
          k.upper[c] += part;
        }
      }
      da.noalias() = 2.0 * h * d.asDiagonal() * a;
      db.noalias() = 2.0 * h * d.asDiagonal() * b;
      k.diagonal[c].noalias() += a.transpose() * da;
      k.diagonal[c + 1].noalias() += b.transpose() * db;
      k.upper[c].noalias() += a.transpose() * db;
    }
    for (int i = 0; i < nt; ++i) {
      double span = 0.0;
      if (i > 0) {
        const double h = times_[i] - times_[i - 1];
        k.mass[i] += h * cell_metric[i - 1];
        span += h;
      }
      if (i + 1 < nt) {
        const double h = times_[i + 1] - times_[i];
        k.mass[i] += h * cell_metric[i];
        span += h;
      }
      k.mass[i] *= weights_[i] / span;
    }

    const double alpha = lag_->smoothing().alpha;
    const auto& specs = lag_->constraints();
    Mat node(n, n), dh(n, n);
    Vec g(n), xp(n), xm(n), gp(n), gm(n);
    std::vector<int> all(n);
    for (int a = 0; a < n; ++a) all[a] = a;
    for (int i = 0; i < nt && !specs.empty(); ++i) {
      const Vec x = states.row(i).transpose();
      node.setZero();
      bool any = false;
      for (std::size_t j = 0; j < specs.size(); ++j) {
        const double act = activation_(i, j);
        if (act <= ActuatedLagrangian::kInactive) continue;
        const auto& c = specs[j];
        const double h = c.value(x);
        // rho(h) = h^2 S: first and second derivative in h
        double d1 = 2.0 * h;
        double d2 = 2.0;
        if (!c.is_equality()) {
          const double s = smooth_heaviside(h, alpha);
          const double ds = alpha * s * (1.0 - s);
          const double dds = alpha * ds * (1.0 - 2.0 * s);
          d1 = 2.0 * h * s + h * h * ds;
          d2 = 2.0 * s + 4.0 * h * ds + h * h * dds;
          if (margin > 0.0 && h > -margin) d2 = std::max(d2, 2.0);
        }
        const double coeff = weights_[i] * c.weight * act;
        if (coeff * (std::abs(d1) + std::abs(d2)) == 0.0) continue;
        any = true;
        g.setZero();
        c.accumulate_gradient(x, 1.0, g);
        node.noalias() += coeff * d2 * g * g.transpose();
        if (d1 == 0.0) continue;
        // d2h/dx2 by central differences of the analytic gradient
        const auto& support = c.support.empty() ? all : c.support;
        dh.setZero();
        for (const int a : support) {
          const double eps = 1e-6 * std::max(1.0, std::abs(x[a]));
          xp = x;
          xm = x;
          xp[a] += eps;
          xm[a] -= eps;
          gp.setZero();
          gm.setZero();
          c.accumulate_gradient(xp, 1.0, gp);
          c.accumulate_gradient(xm, 1.0, gm);
          dh.col(a) = (gp - gm) / (2.0 * eps);
        }
        node.noalias() += coeff * d1 * 0.5 * (dh + dh.transpose());
      }
      if (!any) continue;
      // keep the model convex: clip negative eigenvalues
      add_psd_part(node, 1.0, k.diagonal[i]);
    }
    return k;
  }

  /// Apply the lumped preconditioner to an arbitrary gradient (for oracle checks).
  Trajectory precondition(const Trajectory& states, const Trajectory& gradient) const {
    Trajectory flow(gradient.rows(), gradient.cols());
    apply_metric_inverse(states, gradient, flow);
    return flow;
  }

 private:
  double run(const Trajectory& states, Trajectory* grad_out, Trajectory* flow_out) const {
    const auto& sys = lag_->system();
    const int nt = nodes();
    const int n = sys.state_dim();
    const bool identity = sys.identity_frame();
    const bool want_grad = grad_out != nullptr;
    Trajectory local_grad;
    Trajectory& grad = grad_out ? *grad_out : local_grad;
    if (want_grad) grad.setZero(nt, n);

    Vec mid(n), rate(n), res(n), q(n), jtq(n), curv(n), pen_grad(n), act;
    Mat jac = Mat::Zero(n, n);
    double total = 0.0;

    for (int c = 0; c < nt - 1; ++c) {
      const double h = times_[c + 1] - times_[c];
      mid = 0.5 * (states.row(c) + states.row(c + 1)).transpose();
      rate = (states.row(c + 1) - states.row(c)).transpose() / h;
      sys.drift(mid, res);
      res = rate - res;
      const auto d = cell_penalty_.row(c).transpose();
      if (identity) {
        total += h * res.dot(d.cwiseProduct(res));
        if (!want_grad) continue;
        q = 2.0 * d.cwiseProduct(res);
        curv.setZero();
      } else {
        const Mat fbar = sys.frame(mid);
        Eigen::PartialPivLU<Mat> lu(fbar);
        const Vec w = lu.solve(res);
        total += h * w.dot(d.cwiseProduct(w));
        if (!want_grad) continue;
        q = lu.transpose().solve(Vec(2.0 * d.cwiseProduct(w)));
        for (int k = 0; k < n; ++k) curv[k] = q.dot(sys.frame_derivative(mid, k) * w);
      }
      sys.drift_jacobian(mid, jac);
      jtq.noalias() = jac.transpose() * q;
      jtq += curv;
      grad.row(c) += (-q - 0.5 * h * jtq).transpose();
      grad.row(c + 1) += (q - 0.5 * h * jtq).transpose();
    }

    if (!lag_->constraints().empty()) {
      for (int i = 0; i < nt; ++i) {
        act = activation_.row(i).transpose();
        const auto x = states.row(i).transpose();
        if (want_grad) {
          pen_grad.setZero();
          total += weights_[i] * lag_->penalty_term(x, act, weights_[i], &pen_grad);
          grad.row(i) += pen_grad.transpose();
        } else {
          total += weights_[i] * lag_->penalty_term(x, act);
        }
      }
    }

    if (flow_out) apply_metric_inverse(states, grad, *flow_out);
    return total;
  }

  void apply_metric_inverse(const Trajectory& states, const Trajectory& grad,
                            Trajectory& flow) const {
    const auto& sys = lag_->system();
    const int nt = nodes();
    const int n = sys.state_dim();
    flow.resize(nt, n);
    if (sys.identity_frame()) {
      for (int i = 0; i < nt; ++i) {
        Vec g = Vec::Zero(n);
        double span = 0.0;
        if (i > 0) {
          const double h = times_[i] - times_[i - 1];
          g += h * cell_penalty_.row(i - 1).transpose();
          span += h;
        }
        if (i + 1 < nt) {
          const double h = times_[i + 1] - times_[i];
          g += h * cell_penalty_.row(i).transpose();
          span += h;
        }
        g /= span;
        flow.row(i) = -(grad.row(i).transpose().cwiseQuotient(g) / weights_[i]).transpose();
      }
      return;
    }
    std::vector<Mat> cell_metric(nt - 1);
    for (int c = 0; c < nt - 1; ++c) {
      const Vec mid = 0.5 * (states.row(c) + states.row(c + 1)).transpose();
      const Mat inv = frame_inverse(sys, mid);
      cell_metric[c] = inv.transpose() * cell_penalty_.row(c).transpose().asDiagonal() * inv;
    }
    for (int i = 0; i < nt; ++i) {
      Mat g = Mat::Zero(n, n);
      double span = 0.0;
      if (i > 0) {
        const double h = times_[i] - times_[i - 1];
        g += h * cell_metric[i - 1];
        span += h;
      }
      if (i + 1 < nt) {
        const double h = times_[i + 1] - times_[i];
        g += h * cell_metric[i];
        span += h;
      }
      g /= span;
      flow.row(i) = -(g.ldlt().solve(Vec(grad.row(i).transpose())) / weights_[i]).transpose();
    }
  }

  const ActuatedLagrangian* lag_;
  Vec times_;
  Trajectory cell_penalty_;  ///< D at cell midpoints
  Vec weights_;
  Trajectory activation_;  ///< B_j at nodes
};

}  // namespace aghf
