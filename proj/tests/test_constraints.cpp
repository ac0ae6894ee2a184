#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "aghf/constraints.hpp"
#include "support.hpp"

using namespace aghf;
using aghf::testing::random_legged_state;

namespace {

std::shared_ptr<const Terrain> sinusoid() {
  return std::make_shared<Terrain>(Terrain::sinusoid(0.1, 4 * std::numbers::pi));
}

const ConstraintSpec& by_id(const std::vector<ConstraintSpec>& specs, const std::string& id) {
  for (const auto& s : specs)
    if (s.id == id) return s;
  throw std::runtime_error("no constraint " + id);
}

ContactSchedule hop_schedule(int legs) {
  std::vector<std::vector<StanceInterval>> s(legs, equal_ratio_stances(3, 2.0, 0.0, true));
  return ContactSchedule(2.0, s);
}

}  // namespace

TEST(LocomotionConstraints, Counts) {
  RobotParams one;
  EXPECT_EQ(build_locomotion_constraints(one, sinusoid()).size(), 9u);
  RobotParams two;
  two.legs = 2;
  const auto specs = build_locomotion_constraints(two, sinusoid());
  EXPECT_EQ(specs.size(), 17u);
  EXPECT_EQ(specs.back().id, "C1");
  EXPECT_NO_THROW(by_id(specs, "S3b_2"));
  EXPECT_NO_THROW(by_id(specs, "K1_1"));
}

TEST(LocomotionConstraints, GradientsMatchDifferences) {
  std::mt19937 rng(23);
  for (const bool torso : {false, true}) {
    RobotParams params;
    params.legs = 2;
    LocomotionConstraintOptions opt;
    opt.torso_collision = torso;
    const auto specs = build_locomotion_constraints(params, sinusoid(), opt);
    for (int k = 0; k < 100; ++k) {
      const Vec x = random_legged_state(rng, 2);
      for (const auto& s : specs) {
        const Vec g = s.gradient(x);
        Vec fd(x.size());
        for (int c = 0; c < x.size(); ++c) {
          Vec xp = x, xm = x;
          xp[c] += 1e-6;
          xm[c] -= 1e-6;
          fd[c] = (s.value(xp) - s.value(xm)) / 2e-6;
        }
        EXPECT_LE((g - fd).norm(), 1e-5 * std::max(1.0, fd.norm())) << s.id;
        for (int c = 0; c < x.size(); ++c) {
          const bool listed = std::find(s.support.begin(), s.support.end(), c) != s.support.end();
          if (!listed) {
            EXPECT_EQ(g[c], 0.0) << s.id << " depends on " << c;
          }
        }
      }
    }
  }
}

TEST(LocomotionConstraints, FrictionPairIsTheCone) {
  std::mt19937 rng(29);
  RobotParams params;
  params.friction = 0.7;
  const auto terrain = sinusoid();
  const auto specs = build_locomotion_constraints(params, terrain);
  const auto& a = by_id(specs, "S3a_1");
  const auto& b = by_id(specs, "S3b_1");
  std::uniform_real_distribution<double> u(-20, 20);
  int inside = 0;
  for (int k = 0; k < 2000; ++k) {
    Vec x = random_legged_state(rng, 1);
    x[6] = u(rng);
    x[7] = u(rng);
    const auto frame = terrain_frame(*terrain, {x[8], x[9]});
    const Vec2 f(x[6], x[7]);
    const bool cone = std::abs(f.dot(frame.tangent)) <= 0.7 * f.dot(frame.normal);
    const bool pair = a.value(x) <= 0 && b.value(x) <= 0;
    EXPECT_EQ(cone, pair);
    inside += cone;
  }
  EXPECT_GT(inside, 100);
}

TEST(LocomotionConstraints, ReachIsTranslationInvariant) {
  std::mt19937 rng(31);
  RobotParams params;
  const auto specs = build_locomotion_constraints(params, sinusoid());
  const auto& k1 = by_id(specs, "K1_1");
  for (int k = 0; k < 100; ++k) {
    Vec x = random_legged_state(rng, 1);
    const double before = k1.value(x);
    const Vec2 shift = aghf::testing::random_vec(rng, 2, -4, 4);
    x.segment<2>(0) += shift;
    x.segment<2>(8) += shift;
    EXPECT_NEAR(k1.value(x), before, 1e-12);
  }
}

TEST(ConstraintActivation, Phases) {
  RobotParams params;
  const auto specs = build_locomotion_constraints(params, sinusoid());
  const auto sched = hop_schedule(1);
  const double stance = 0.1;
  const double flight = 3.0 / 7;
  EXPECT_EQ(constraint_activation(by_id(specs, "K1_1"), sched, flight, 5000), 1.0);
  EXPECT_NEAR(constraint_activation(by_id(specs, "F1_1"), sched, stance, 5000), 0.0, 1e-12);
  EXPECT_NEAR(constraint_activation(by_id(specs, "F1_1"), sched, flight, 5000), 1.0, 1e-12);
  EXPECT_NEAR(constraint_activation(by_id(specs, "S1_1"), sched, stance, 5000), 1.0, 1e-12);
}

TEST(Switch, InequalityAndEquality) {
  ConstraintSpec ineq;
  ineq.kind = ConstraintKind::kInequality;
  EXPECT_NEAR(switch_from(ineq, 1.0, -0.5, 5000), 0.0, 1e-12);
  EXPECT_NEAR(switch_from(ineq, 1.0, 0.5, 5000), 1.0, 1e-12);
  ConstraintSpec eq;
  EXPECT_EQ(switch_from(eq, 1.0, 123.0, 5000), 1.0);
  EXPECT_EQ(switch_from(eq, 1.0, -7.0, 5000), 1.0);
}

TEST(Switch, FromScheduleAndState) {
  RobotParams params;
  const auto specs = build_locomotion_constraints(params, sinusoid());
  const auto sched = hop_schedule(1);
  Vec x = Vec::Zero(10);
  x[1] = 0.1;  // CoM below the clearance
  EXPECT_NEAR(switch_value(by_id(specs, "C1"), sched, 0.5, x, 5000), 1.0, 1e-12);
  x[1] = 0.75;
  EXPECT_NEAR(switch_value(by_id(specs, "C1"), sched, 0.5, x, 5000), 0.0, 1e-12);
}

TEST(Augment, AccumulatorsVanishOnFeasiblePath) {
  RobotParams params;
  const auto terrain = std::make_shared<Terrain>(Terrain::flat());
  auto specs = build_locomotion_constraints(params, terrain);
  const ContactSchedule sched(2.0, {{{0.0, 2.0}}});
  const auto aug = augment(std::make_shared<LeggedSystem>(params), specs, sched, 5000);
  EXPECT_EQ(aug.state_dim(), 19);
  EXPECT_EQ(aug.control_dim(), 13);
  const Vec times = Vec::LinSpaced(2001, 0.0, 2.0);
  Trajectory x = Trajectory::Zero(times.size(), 10);
  for (int i = 0; i < times.size(); ++i) {
    x(i, 0) = 0.75 * times[i];
    x(i, 1) = 0.75;
    x(i, 7) = 19.62;
    x(i, 8) = 0.75 * times[i];
  }
  const Trajectory zeta = aug.accumulate(times, x);
  EXPECT_LT(zeta.row(times.size() - 1).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Augment, ConstantViolationAccumulates) {
  RobotParams params;
  const auto terrain = std::make_shared<Terrain>(Terrain::flat());
  const auto specs = build_locomotion_constraints(params, terrain);
  const auto aug = augment(std::make_shared<LeggedSystem>(params), {by_id(specs, "C1")},
                           hop_schedule(1), 5000);
  const Vec times = Vec::LinSpaced(101, 0.0, 2.0);
  Trajectory x = Trajectory::Zero(101, 10);
  x.col(1).setConstant(0.2);  // h = 0.3 - 0.2
  EXPECT_NEAR(aug.accumulate(times, x)(100, 0), 0.1 * 2.0, 1e-9);
}

TEST(Augment, InactivePhaseDoesNotAccumulate) {
  RobotParams params;
  const auto terrain = std::make_shared<Terrain>(Terrain::flat());
  const auto specs = build_locomotion_constraints(params, terrain);
  // stance over the whole horizon, flight constraint never active
  const ContactSchedule always(2.0, {{{0.0, 2.0}}});
  const auto aug = augment(std::make_shared<LeggedSystem>(params), {by_id(specs, "F2_1")}, always, 5000);
  const Vec times = Vec::LinSpaced(101, 0.0, 2.0);
  Trajectory x = Trajectory::Zero(101, 10);
  x.col(7).setConstant(50.0);
  EXPECT_NEAR(aug.accumulate(times, x)(100, 0), 0.0, 1e-12);
  const Vec xhat = Vec::Ones(aug.state_dim());
  EXPECT_TRUE(aug.drift(xhat).tail(1).isZero(0.0));
  EXPECT_EQ(aug.control_matrix(xhat).bottomRightCorner(1, 1)(0, 0), 1.0);
}
