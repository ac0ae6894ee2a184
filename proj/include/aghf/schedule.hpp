#pragma once

// Predefined stance/flight timing per leg and the smoothed step functions
// that turn it into activation weights.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "aghf/errors.hpp"

namespace aghf {

struct SmoothingParams {
  double alpha = 5000.0;  ///< logistic sharpness
  double beta = 0.005;    ///< width of the step-derivative bump

  void validate() const {
    if (!(alpha > 0)) throw ConfigError("alpha", "must be positive");
    if (!(beta > 0)) throw ConfigError("beta", "must be positive");
  }
};

/// Logistic step 1/(1+exp(-alpha c)), evaluated without overflow.
inline double smooth_heaviside(double c, double alpha) {
  const double z = std::clamp(alpha * c, -745.0, 745.0);
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Exact derivative of `smooth_heaviside` with respect to c, alpha H (1 - H).
inline double smooth_heaviside_slope(double c, double alpha) {
  const double h = smooth_heaviside(c, alpha);
  return alpha * h * (1.0 - h);
}

/// Zero-centred normal density of standard deviation beta, used in place of
/// the logistic derivative when differentiating step functions in time.
inline double smooth_heaviside_derivative(double c, double beta) {
  const double z = c / beta;
  return std::exp(-0.5 * z * z) / (beta * std::sqrt(2.0 * std::numbers::pi));
}

struct StanceInterval {
  double landing;
  double takeoff;
};

/// Per-leg ordered stance intervals over [0, horizon]. Everything outside an
/// interval is flight.
class ContactSchedule {
 public:
  ContactSchedule() = default;
  ContactSchedule(double horizon, std::vector<std::vector<StanceInterval>> stances)
      : horizon_(horizon), stances_(std::move(stances)) {
    validate();
  }

  double horizon() const { return horizon_; }
  int legs() const { return static_cast<int>(stances_.size()); }
  const std::vector<StanceInterval>& stances(int leg) const { return stances_.at(leg); }

  bool in_stance(int leg, double t) const {
    for (const auto& s : stances_.at(leg))
      if (t >= s.landing && t <= s.takeoff) return true;
    return false;
  }

  /// Smoothed stance indicator A_i(t). Landings at or before t=0 and takeoffs
  /// at or after the horizon are treated as lying outside the window, so a
  /// leg that starts (ends) in stance is fully active at t=0 (t=T).
  double activation(int leg, double t, double alpha) const {
    double a = 0.0;
    for (const auto& s : stances_.at(leg)) {
      const double on = s.landing <= 0.0 ? 1.0 : smooth_heaviside(t - s.landing, alpha);
      const double off = s.takeoff >= horizon_ ? 0.0 : smooth_heaviside(t - s.takeoff, alpha);
      a += on - off;
    }
    return a;
  }

  /// dA_i/dt built from the Gaussian step derivative.
  double activation_time_derivative(int leg, double t, double beta) const {
    double d = 0.0;
    for (const auto& s : stances_.at(leg)) {
      if (s.landing > 0.0) d += smooth_heaviside_derivative(t - s.landing, beta);
      if (s.takeoff < horizon_) d -= smooth_heaviside_derivative(t - s.takeoff, beta);
    }
    return d;
  }

 private:
  void validate() const {
    if (!(horizon_ > 0)) throw ConfigError("horizon", "must be positive");
    for (std::size_t leg = 0; leg < stances_.size(); ++leg) {
      const auto& list = stances_[leg];
      const std::string field = "stance" + std::to_string(leg + 1);
      for (std::size_t j = 0; j < list.size(); ++j) {
        const auto& s = list[j];
        if (!(s.landing >= 0 && s.landing < s.takeoff && s.takeoff <= horizon_))
          throw ConfigError(field, "interval must satisfy 0 <= landing < takeoff <= horizon");
        if (j > 0 && !(list[j - 1].takeoff < s.landing))
          throw ConfigError(field, "intervals must be sorted and disjoint");
      }
    }
  }

  double horizon_ = 1.0;
  std::vector<std::vector<StanceInterval>> stances_;
};

inline double activation(const ContactSchedule& schedule, int leg, double t, double alpha) {
  return schedule.activation(leg, t, alpha);
}

inline double activation_time_derivative(const ContactSchedule& schedule, int leg, double t,
                                         double beta) {
  return schedule.activation_time_derivative(leg, t, beta);
}

/// Stance intervals of one leg for `hops` equal-length stance/flight pairs
/// starting in stance at t=0, shifted by `offset` and clipped to [0, T].
///
/// With `land_at_end` the horizon is split into 2*hops+1 equal phases so the
/// last phase is a landing, and the final stance is stretched to T after the
/// shift.
inline std::vector<StanceInterval> equal_ratio_stances(int hops, double horizon, double offset,
                                                       bool land_at_end = false) {
  if (hops < 1) throw ConfigError("hops", "must be at least 1");
  if (!(horizon > 0)) throw ConfigError("horizon", "must be positive");
  if (std::abs(offset) >= horizon) throw InvalidOffset("|offset| must be smaller than the horizon");
  const int phases = land_at_end ? 2 * hops + 1 : 2 * hops;
  const double d = horizon / phases;
  const int stances = land_at_end ? hops + 1 : hops;
  std::vector<StanceInterval> out;
  for (int j = 0; j < stances; ++j) {
    double a = 2 * j * d + offset;
    double b = (2 * j + 1) * d + offset;
    if (land_at_end && j == stances - 1) b = horizon;
    a = std::clamp(a, 0.0, horizon);
    b = std::clamp(b, 0.0, horizon);
    if (b - a > 1e-12) out.push_back({a, b});
  }
  return out;
}

inline ContactSchedule equal_ratio_schedule(int hops, double horizon, double offset,
                                            bool land_at_end = false) {
  return ContactSchedule(horizon, {equal_ratio_stances(hops, horizon, offset, land_at_end)});
}

}  // namespace aghf
