#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "aghf/metric.hpp"
#include "support.hpp"

using namespace aghf;
using aghf::testing::random_legged_state;
using aghf::testing::random_smooth_curve;

namespace {

ContactSchedule hops(int legs) {
  std::vector<std::vector<StanceInterval>> s(legs, equal_ratio_stances(3, 2.0, 0.0, true));
  return ContactSchedule(2.0, s);
}

/// xdot = u on R^3 with a constant identity frame.
class Driftless final : public ControlAffineSystem {
 public:
  using ControlAffineSystem::drift;
  using ControlAffineSystem::drift_jacobian;
  int state_dim() const override { return 3; }
  int control_dim() const override { return 3; }
  void drift(const ConstVecRef&, VecRef out) const override { out.setZero(); }
  void drift_jacobian(const ConstVecRef&, MatRef out) const override { out.setZero(); }
  void drift_second_order(const ConstVecRef&, const ConstVecRef&, MatRef out) const override {
    out.setZero();
  }
  Mat control_matrix(const ConstVecRef&) const override { return Mat::Identity(3, 3); }
  Mat completion(const ConstVecRef&) const override { return Mat(3, 0); }
  Mat frame_derivative(const ConstVecRef&, int) const override { return Mat::Zero(3, 3); }
  bool constant_frame() const override { return true; }
  bool identity_frame() const override { return true; }
};

struct LeggedFixture {
  RobotParams params;
  std::shared_ptr<LeggedSystem> system;
  std::shared_ptr<const Terrain> terrain;
  ContactSchedule schedule;
  std::unique_ptr<ActuatedLagrangian> lagrangian;

  explicit LeggedFixture(int legs, double lambda = 1e3, double weight = 1e4,
                         std::optional<ContactSchedule> sched = std::nullopt) {
    params.legs = legs;
    system = std::make_shared<LeggedSystem>(params);
    terrain = std::make_shared<Terrain>(Terrain::sinusoid(0.1, 4 * std::numbers::pi));
    schedule = sched ? *sched : hops(legs);
    LocomotionConstraintOptions opt;
    opt.weight = weight;
    auto specs = build_locomotion_constraints(params, terrain, opt);
    lagrangian = std::make_unique<ActuatedLagrangian>(
        system, PenaltyMatrix::legged(legs, lambda, schedule, {}), weight > 0 ? specs : std::vector<ConstraintSpec>{},
        schedule, SmoothingParams{});
  }
};

}  // namespace

TEST(PenaltyMatrix, StanceAndFlightEntries) {
  const auto sched = hops(1);
  const Mat stance = penalty_matrix(0.1, 1e5, sched, 5000);
  const Mat flight = penalty_matrix(3.0 / 7, 1e5, sched, 5000);
  for (int k = 0; k < 6; ++k) EXPECT_EQ(stance(k, k), 1e5);
  EXPECT_EQ(stance(6, 6), 1.0);
  EXPECT_EQ(stance(7, 7), 1.0);
  EXPECT_NEAR(stance(8, 8), 1.0 + 1e5, 1e-6);
  EXPECT_NEAR(stance(9, 9), 1.0 + 1e5, 1e-6);
  EXPECT_NEAR(flight(8, 8), 1.0, 1e-6);
  EXPECT_TRUE(Mat(stance - Mat(stance.diagonal().asDiagonal())).isZero(0.0));
}

TEST(PenaltyMatrix, RejectsNonpositiveLambda) {
  EXPECT_THROW(PenaltyMatrix::uniform(2, 1, 0.0), ConfigError);
  EXPECT_THROW(PenaltyMatrix::legged(2, 1.0, hops(1), {}), ConfigError);
}

TEST(Metric, LeggedMetricIsThePenaltyMatrix) {
  std::mt19937 rng(37);
  std::uniform_real_distribution<double> t(0.0, 2.0);
  const auto sched = hops(2);
  RobotParams params;
  params.legs = 2;
  const LeggedSystem sys(params);
  const auto pen = PenaltyMatrix::legged(2, 1e5, sched, {});
  for (int k = 0; k < 100; ++k) {
    const double tk = t(rng);
    const Vec x = random_legged_state(rng, 2);
    EXPECT_EQ(metric(sys, pen, tk, x), penalty_matrix(tk, 1e5, sched, 5000));
  }
}

TEST(Metric, OrthonormalFrameGivesCongruence) {
  const UnicycleSystem sys;
  const auto pen = PenaltyMatrix::uniform(3, 2, 50.0);
  std::mt19937 rng(41);
  for (int k = 0; k < 50; ++k) {
    const Vec x = aghf::testing::random_vec(rng, 3, -3, 3);
    const Mat fbar = sys.frame(x);
    const Mat g = metric(sys, pen, 0.0, x);
    EXPECT_LT((g - fbar * pen.matrix(0.0) * fbar.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat> eig(g);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 1.0 - 1e-12);
  }
}

TEST(Metric, UnitLambdaEigenvaluesAreBounded) {
  const auto sched = hops(2);
  const auto pen = PenaltyMatrix::legged(2, 1.0, sched, {});
  for (double t = 0.0; t <= 2.0; t += 0.001) {
    const Vec d = pen.diagonal(t);
    EXPECT_GE(d.minCoeff(), 1.0);
    EXPECT_LE(d.maxCoeff(), 2.0);
  }
}

TEST(Metric, SpdOverTheHorizon) {
  const auto sched = hops(2);
  for (const double lambda : {0.5, 1.0, 1e6}) {
    const auto pen = PenaltyMatrix::legged(2, lambda, sched, {});
    for (double t = 0.0; t <= 2.0; t += 0.0005)
      EXPECT_GE(pen.diagonal(t).minCoeff(), std::min(1.0, lambda) - 1e-12);
  }
}

TEST(Lagrangian, ZeroOnDriftWithoutViolations) {
  LeggedFixture fx(1);
  Vec x = Vec::Zero(10);
  x[1] = 0.75;
  x[7] = 19.62;
  x[8] = 0.0;
  x[9] = 0.1;  // on the crest of the terrain at c_x = 0
  const Vec xdot = fx.system->drift(x);
  EXPECT_NEAR(fx.lagrangian->lagrangian(0.1, x, xdot), 0.0, 1e-9);
}

TEST(Lagrangian, NonnegativeAndQuadraticScaling) {
  LeggedFixture fx(2, 1e3, 0.0);
  std::mt19937 rng(43);
  std::uniform_real_distribution<double> t(0.0, 2.0);
  for (int k = 0; k < 200; ++k) {
    const double tk = t(rng);
    const Vec x = random_legged_state(rng, 2);
    const Vec v = aghf::testing::random_vec(rng, 14, -3, 3);
    const Vec f = fx.system->drift(x);
    const double base = fx.lagrangian->lagrangian(tk, x, f + v);
    EXPECT_GE(base, 0.0);
    EXPECT_NEAR(fx.lagrangian->lagrangian(tk, x, f + 3.0 * v), 9.0 * base, 1e-9 * base);
  }
}

TEST(Lagrangian, FlightFootMoveCostsControlNorm) {
  LeggedFixture fx(1, 1e5, 0.0);
  Vec x = Vec::Zero(10);
  x[1] = 0.75;
  Vec u = Vec::Zero(4);
  u[2] = 0.3;
  u[3] = -0.4;
  const Vec xdot = fx.system->drift(x) + legged_control_matrix(1) * u;
  EXPECT_NEAR(fx.lagrangian->lagrangian(3.0 / 7, x, xdot), u.squaredNorm(), 1e-8);
  // in stance the same move is penalized by 1 + lambda
  EXPECT_NEAR(fx.lagrangian->lagrangian(0.1, x, xdot), (1.0 + 1e5) * u.squaredNorm(), 1e-3);
}

TEST(Lagrangian, ViolatedInequalityPenalty) {
  auto terrain = std::make_shared<Terrain>(Terrain::flat());
  RobotParams params;
  auto specs = build_locomotion_constraints(params, terrain);
  std::vector<ConstraintSpec> c1;
  for (auto& s : specs)
    if (s.id == "C1") c1.push_back(s);
  c1[0].weight = 1e6;
  const ActuatedLagrangian lag(std::make_shared<LeggedSystem>(params),
                               PenaltyMatrix::legged(1, 1.0, hops(1), {}), c1, hops(1), {});
  Vec x = Vec::Zero(10);
  x[1] = 0.2;  // h = 0.1
  const double s = smooth_heaviside(0.1, 5000);
  EXPECT_NEAR(lag.penalty_term(0.5, x), 1e4 * s, 1e-6);
}

TEST(EulerLagrange, StraightLineOfDriftlessSystemIsSteady) {
  const auto sys = std::make_shared<Driftless>();
  const ActuatedLagrangian lag(sys, PenaltyMatrix::uniform(3, 3, 7.0), {}, ContactSchedule(), {});
  Vec x(3), v(3);
  x << 1, 2, 3;
  v << 0.5, -1, 2;
  EXPECT_LT(lag.euler_lagrange_rhs(0.3, x, v, Vec::Zero(3)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(EulerLagrange, MatchesDiscreteFlowOnSmoothCurves) {
  // constant stance so D is smooth in t; tight grid so the two forms agree
  const ContactSchedule stance(2.0, {{{0.0, 2.0}}});
  LeggedFixture fx(1, 10.0, 0.0, stance);
  const Vec times = Vec::LinSpaced(2001, 0.0, 2.0);
  std::mt19937 rng(47);
  Vec a = random_legged_state(rng, 1), b = random_legged_state(rng, 1);
  const Trajectory x = random_smooth_curve(rng, times, a, b, Vec::Constant(10, 0.3));
  const DiscreteEnergy energy(*fx.lagrangian, times);
  const auto r = energy.evaluate(x);
  const double h = times[1] - times[0];
  double worst = 0.0, scale = 0.0;
  for (int i = 100; i < 1900; i += 50) {
    const Vec xi = x.row(i).transpose();
    const Vec xdot = (x.row(i + 1) - x.row(i - 1)).transpose() / (2 * h);
    const Vec xddot = (x.row(i + 1) - 2 * x.row(i) + x.row(i - 1)).transpose() / (h * h);
    const Vec psi = fx.lagrangian->euler_lagrange_rhs(times[i], xi, xdot, xddot);
    worst = std::max(worst, (psi - r.flow.row(i).transpose()).cwiseAbs().maxCoeff());
    scale = std::max(scale, psi.cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-3 * scale);
}

TEST(DiscreteEnergy, GradientMatchesCentralDifferences) {
  LeggedFixture fx(2, 1e3, 1e4);
  const Vec times = Vec::LinSpaced(41, 0.0, 2.0);
  std::mt19937 rng(53);
  const Trajectory x = random_smooth_curve(rng, times, random_legged_state(rng, 2),
                                           random_legged_state(rng, 2), Vec::Constant(14, 0.2));
  const DiscreteEnergy energy(*fx.lagrangian, times);
  const auto r = energy.evaluate(x);
  double worst = 0.0;
  for (int i = 0; i < x.rows(); ++i) {
    for (int k = 0; k < x.cols(); ++k) {
      Trajectory xp = x, xm = x;
      const double e = 1e-6 * std::max(1.0, std::abs(x(i, k)));
      xp(i, k) += e;
      xm(i, k) -= e;
      const double fd = (energy.energy(xp) - energy.energy(xm)) / (2 * e);
      worst = std::max(worst, std::abs(fd - r.gradient(i, k)));
    }
  }
  EXPECT_LT(worst, 1e-5 * r.gradient.cwiseAbs().maxCoeff());
  EXPECT_NEAR(r.energy, energy.energy(x), 0.0);
}

TEST(DiscreteEnergy, NonIdentityFrameGradient) {
  const auto sys = std::make_shared<UnicycleSystem>();
  const ActuatedLagrangian lag(sys, PenaltyMatrix::uniform(3, 2, 100.0), {}, ContactSchedule(), {});
  const Vec times = Vec::LinSpaced(21, 0.0, 1.0);
  std::mt19937 rng(59);
  const Trajectory x = random_smooth_curve(rng, times, Vec::Zero(3), Vec::Ones(3), Vec::Constant(3, 0.5));
  const DiscreteEnergy energy(lag, times);
  const auto r = energy.evaluate(x);
  for (int i = 1; i < 20; i += 3) {
    for (int k = 0; k < 3; ++k) {
      Trajectory xp = x, xm = x;
      xp(i, k) += 1e-6;
      xm(i, k) -= 1e-6;
      EXPECT_NEAR((energy.energy(xp) - energy.energy(xm)) / 2e-6, r.gradient(i, k),
                  1e-5 * r.gradient.cwiseAbs().maxCoeff());
    }
  }
}

TEST(DiscreteEnergy, CurvatureModelIsPositiveSemidefinite) {
  LeggedFixture fx(1, 1e3, 1e4);
  const Vec times = Vec::LinSpaced(15, 0.0, 2.0);
  std::mt19937 rng(61);
  const Trajectory x = random_smooth_curve(rng, times, random_legged_state(rng, 1),
                                           random_legged_state(rng, 1), Vec::Constant(10, 0.3));
  const DiscreteEnergy energy(*fx.lagrangian, times);
  for (const double margin : {0.0, 0.1}) {
    const auto k = energy.curvature(x, margin);
    const int nt = 15, n = 10;
    Mat h = Mat::Zero(nt * n, nt * n);
    for (int i = 0; i < nt; ++i) {
      h.block(i * n, i * n, n, n) = k.diagonal[i];
      if (i + 1 < nt) {
        h.block(i * n, (i + 1) * n, n, n) = k.upper[i];
        h.block((i + 1) * n, i * n, n, n) = k.upper[i].transpose();
      }
      Eigen::SelfAdjointEigenSolver<Mat> mass(k.mass[i]);
      EXPECT_GT(mass.eigenvalues().minCoeff(), 0.0);
    }
    EXPECT_LT((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-9 * h.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Mat> eig(h);
    EXPECT_GT(eig.eigenvalues().minCoeff(), -1e-9 * eig.eigenvalues().cwiseAbs().maxCoeff());
  }
}

TEST(DiscreteEnergy, SmallExplicitStepDescends) {
  LeggedFixture fx(1, 1e3, 1e4);
  const Vec times = Vec::LinSpaced(41, 0.0, 2.0);
  std::mt19937 rng(67);
  Trajectory x = random_smooth_curve(rng, times, random_legged_state(rng, 1),
                                     random_legged_state(rng, 1), Vec::Constant(10, 0.3));
  const DiscreteEnergy energy(*fx.lagrangian, times);
  const auto r = energy.evaluate(x);
  Trajectory flow = r.flow;
  flow.row(0).setZero();
  flow.row(40).setZero();
  EXPECT_LT(energy.energy(x + 1e-10 * flow), r.energy);
}

TEST(AddPsdPart, ClipsNegativeEigenvalues) {
  Mat m(3, 3);
  m << 2, 0, 0, 0, -1, 0, 0, 0, 0;
  Mat out = Mat::Zero(3, 3);
  add_psd_part(m, 2.0, out);
  Mat expected = Mat::Zero(3, 3);
  expected(0, 0) = 4.0;
  EXPECT_LT((out - expected).cwiseAbs().maxCoeff(), 1e-14);
}
