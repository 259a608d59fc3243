#pragma once

#include <cmath>
#include <numbers>

namespace tcbf {

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::remainder(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  return a;
}

/// Pose on the terrain. Pitch is positive nose-up, roll positive when the
/// left side is higher.
struct RobotState {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;

  bool operator==(const RobotState&) const = default;
};

/// Translational velocity (m/s) and angular velocity (rad/s).
struct Control {
  double v = 0.0;
  double omega = 0.0;

  double norm() const { return std::hypot(v, omega); }
  bool operator==(const Control&) const = default;
};

/// Admissible control box. The velocity floor keeps commanded motion above
/// the immobilization displacement threshold on flat ground.
struct ControlBounds {
  double v_min = 0.25;
  double v_max = 1.0;
  double omega_min = -1.0;
  double omega_max = 1.0;

  bool contains(const Control& u) const {
    return u.v >= v_min && u.v <= v_max && u.omega >= omega_min && u.omega <= omega_max;
  }
  void validate() const;
};

}  // namespace tcbf
