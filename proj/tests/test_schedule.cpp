#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aghf/schedule.hpp"

using namespace aghf;

TEST(SmoothHeaviside, Midpoint) { EXPECT_DOUBLE_EQ(smooth_heaviside(0.0, 5000.0), 0.5); }

TEST(SmoothHeaviside, KnownValue) {
  EXPECT_NEAR(smooth_heaviside(0.1, 100.0), 1.0 / (1.0 + std::exp(-10.0)), 1e-15);
  EXPECT_NEAR(smooth_heaviside(0.1, 100.0), 0.9999546, 1e-7);
}

TEST(SmoothHeaviside, SaturatesWithoutOverflow) {
  EXPECT_EQ(smooth_heaviside(-1e6, 5000.0), smooth_heaviside(-1e6, 5000.0));
  EXPECT_LT(smooth_heaviside(-1e6, 5000.0), 1e-300);
  EXPECT_DOUBLE_EQ(smooth_heaviside(1e6, 5000.0), 1.0);
  EXPECT_TRUE(std::isfinite(smooth_heaviside_slope(-1e6, 5000.0)));
}

TEST(SmoothHeaviside, MonotoneOnRandomPairs) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> c(-0.01, 0.01);
  std::uniform_real_distribution<double> a(1.0, 1e4);
  for (int k = 0; k < 1000; ++k) {
    double c1 = c(rng), c2 = c(rng);
    if (c1 > c2) std::swap(c1, c2);
    const double alpha = a(rng);
    EXPECT_LE(smooth_heaviside(c1, alpha), smooth_heaviside(c2, alpha));
  }
}

TEST(SmoothHeaviside, SlopeMatchesDifference) {
  for (const double c : {-1e-3, -2e-4, 0.0, 3e-4}) {
    const double e = 1e-8;
    const double fd = (smooth_heaviside(c + e, 5000.0) - smooth_heaviside(c - e, 5000.0)) / (2 * e);
    EXPECT_NEAR(smooth_heaviside_slope(c, 5000.0), fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(SmoothHeavisideDerivative, PeakValue) {
  EXPECT_NEAR(smooth_heaviside_derivative(0.0, 0.01), 39.894, 1e-3);
}

TEST(SmoothHeavisideDerivative, EvenAndDecaying) {
  EXPECT_DOUBLE_EQ(smooth_heaviside_derivative(0.01, 0.01), smooth_heaviside_derivative(-0.01, 0.01));
  EXPECT_LT(smooth_heaviside_derivative(0.2, 0.01), 1e-50);
  EXPECT_GE(smooth_heaviside_derivative(0.5, 0.01), 0.0);
}

namespace {
ContactSchedule figure_schedule() {
  return ContactSchedule(6.0, {{{0.0, 1.0}, {2.0, 3.0}, {4.0, 5.0}}});
}
}  // namespace

TEST(Activation, StanceAndFlight) {
  const auto s = figure_schedule();
  EXPECT_NEAR(activation(s, 0, 0.5, 5000.0), 1.0, 1e-12);
  EXPECT_NEAR(activation(s, 0, 1.5, 5000.0), 0.0, 1e-12);
  EXPECT_NEAR(activation(s, 0, 1.0, 5000.0), 0.5, 1e-12);
  EXPECT_NEAR(activation(s, 0, 2.0, 5000.0), 0.5, 1e-12);
}

TEST(Activation, StaysInUnitInterval) {
  const auto s = figure_schedule();
  for (double t = 0.0; t <= 6.0; t += 1e-3) {
    const double a = activation(s, 0, t, 5000.0);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(Activation, ConvergesToIndicator) {
  const auto s = figure_schedule();
  for (const double t : {0.3, 0.97, 1.03, 2.5, 3.9, 4.2, 5.5}) {
    const double indicator = s.in_stance(0, t) ? 1.0 : 0.0;
    double previous = 1.0;
    for (const double alpha : {10.0, 100.0, 1000.0, 1e5}) {
      const double gap = std::abs(activation(s, 0, t, alpha) - indicator);
      EXPECT_LE(gap, previous + 1e-15);
      previous = gap;
    }
    EXPECT_LT(previous, 1e-12);
  }
}

TEST(ActivationTimeDerivative, SignsAtSwitches) {
  const auto s = figure_schedule();
  const double peak = 1.0 / (0.005 * std::sqrt(2.0 * std::numbers::pi));
  EXPECT_NEAR(activation_time_derivative(s, 0, 0.5, 0.005), 0.0, 1e-12);
  EXPECT_NEAR(activation_time_derivative(s, 0, 2.0, 0.005), peak, 1e-9);
  EXPECT_NEAR(activation_time_derivative(s, 0, 3.0, 0.005), -peak, 1e-9);
}

TEST(ActivationTimeDerivative, IntegratesToNetLandings) {
  // one interior landing, two interior takeoffs
  const ContactSchedule s(6.0, {{{0.0, 1.0}, {2.0, 3.0}, {4.0, 6.0}}});
  for (const double beta : {0.005, 0.01, 0.05}) {
    const int n = 600001;
    const double h = 6.0 / (n - 1);
    double integral = 0.0;
    for (int i = 0; i < n; ++i) {
      const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
      integral += w * h * activation_time_derivative(s, 0, i * h, beta);
    }
    EXPECT_NEAR(integral, 2.0 - 2.0, 0.02);
  }
  const ContactSchedule one(2.0, {{{0.5, 2.0}}});
  double integral = 0.0;
  for (int i = 0; i <= 200000; ++i)
    integral += (i == 0 || i == 200000 ? 0.5 : 1.0) * 1e-5 * activation_time_derivative(one, 0, i * 1e-5, 0.01);
  EXPECT_NEAR(integral, 1.0, 0.02);
}

TEST(EqualRatioSchedule, ThreeHops) {
  const auto s = equal_ratio_stances(3, 2.0, 0.0);
  ASSERT_EQ(s.size(), 3u);
  const double expected[3][2] = {{0.0, 1.0 / 3}, {2.0 / 3, 1.0}, {4.0 / 3, 5.0 / 3}};
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(s[j].landing, expected[j][0], 1e-15);
    EXPECT_NEAR(s[j].takeoff, expected[j][1], 1e-15);
  }
}

TEST(EqualRatioSchedule, NegativeOffsetShiftsAndClips) {
  const auto base = equal_ratio_stances(3, 2.0, 0.0);
  const auto s = equal_ratio_stances(3, 2.0, -0.05);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_DOUBLE_EQ(s[0].landing, 0.0);
  EXPECT_NEAR(s[0].takeoff, base[0].takeoff - 0.05, 1e-15);
  for (int j = 1; j < 3; ++j) {
    EXPECT_NEAR(s[j].landing, base[j].landing - 0.05, 1e-15);
    EXPECT_NEAR(s[j].takeoff, base[j].takeoff - 0.05, 1e-15);
  }
}

TEST(EqualRatioSchedule, LandAtEndFinishesInStance) {
  const auto s = equal_ratio_stances(3, 2.0, -0.05, true);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_DOUBLE_EQ(s.back().takeoff, 2.0);
  EXPECT_NEAR(s.back().landing, 6.0 * 2.0 / 7 - 0.05, 1e-15);
  const ContactSchedule sched(2.0, {s});
  EXPECT_NEAR(sched.activation(0, 2.0, 5000.0), 1.0, 1e-12);
}

TEST(EqualRatioSchedule, OffsetAtLeastHorizonThrows) {
  EXPECT_THROW(equal_ratio_stances(3, 2.0, 2.0), InvalidOffset);
  EXPECT_THROW(equal_ratio_stances(3, 2.0, -2.5), InvalidOffset);
  EXPECT_THROW(equal_ratio_stances(0, 2.0, 0.0), ConfigError);
}

TEST(ContactSchedule, RejectsOverlappingIntervals) {
  EXPECT_THROW(ContactSchedule(2.0, {{{0.0, 1.0}, {0.5, 1.5}}}), ConfigError);
  EXPECT_THROW(ContactSchedule(2.0, {{{0.0, 2.5}}}), ConfigError);
  EXPECT_THROW(ContactSchedule(2.0, {{{1.0, 1.0}}}), ConfigError);
}

TEST(SmoothingParams, Validation) {
  SmoothingParams p;
  p.alpha = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  p.alpha = 1;
  p.beta = -1;
  EXPECT_THROW(p.validate(), ConfigError);
}
