#pragma once

// Hand-rolled generators shared by the test suites.

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include "aghf/aghf.hpp"

namespace aghf::testing {

inline Vec random_vec(std::mt19937& rng, int n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

/// A one-leg state near a plausible hopping configuration.
inline Vec random_legged_state(std::mt19937& rng, int legs) {
  const StateLayout layout(legs);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec x(layout.state_dim());
  x[StateLayout::kPx] = 1.0 + u(rng);
  x[StateLayout::kPy] = 0.75 + 0.2 * u(rng);
  x[StateLayout::kTheta] = 0.3 * u(rng);
  x[StateLayout::kVx] = u(rng);
  x[StateLayout::kVy] = u(rng);
  x[StateLayout::kOmega] = u(rng);
  for (int i = 0; i < legs; ++i) {
    x[layout.force(i)] = 5.0 * u(rng);
    x[layout.force(i) + 1] = 10.0 + 5.0 * u(rng);
    x[layout.foot(i)] = x[StateLayout::kPx] + 0.5 * u(rng);
    x[layout.foot(i) + 1] = 0.1 * u(rng);
  }
  return x;
}

/// Line between two states plus a few random sine modes that vanish at both
/// ends.
inline Trajectory random_smooth_curve(std::mt19937& rng, const Vec& times, const Vec& a,
                                      const Vec& b, const Vec& scale, int modes = 3) {
  const int nt = static_cast<int>(times.size());
  const int n = static_cast<int>(a.size());
  const double horizon = times[nt - 1] - times[0];
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Trajectory x(nt, n);
  for (int k = 0; k < n; ++k) {
    std::vector<double> amp(modes);
    for (auto& c : amp) c = scale[k] * u(rng);
    for (int i = 0; i < nt; ++i) {
      const double r = (times[i] - times[0]) / horizon;
      double v = (1.0 - r) * a[k] + r * b[k];
      for (int j = 0; j < modes; ++j) v += amp[j] * std::sin((j + 1) * std::numbers::pi * r);
      x(i, k) = v;
    }
  }
  return x;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("aghf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace aghf::testing
