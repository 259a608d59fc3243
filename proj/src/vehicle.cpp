#include "tcbf/vehicle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "tcbf/errors.hpp"

namespace tcbf {

void ControlBounds::validate() const {
  if (!(v_min <= v_max) || !(omega_min <= omega_max)) throw ValidationError("control bounds are inverted");
  if (!std::isfinite(v_min) || !std::isfinite(v_max) || !std::isfinite(omega_min) || !std::isfinite(omega_max)) {
    throw ValidationError("control bounds must be finite");
  }
}

void VehicleGeometry::validate() const {
  if (!(length > 0 && width > 0 && height > 0 && wheelbase > 0 && clearance > 0)) {
    throw ValidationError("vehicle dimensions must be positive");
  }
  if (!(wheelbase < length)) throw ValidationError("wheelbase must be shorter than the chassis");
}

void TractionParams::validate() const {
  if (!(0.0 < slip_onset && slip_onset < stall_angle && stall_angle < std::numbers::pi / 2)) {
    throw ValidationError("traction requires 0 < slip_onset < stall_angle < pi/2");
  }
  if (!(dt > 0.0)) throw ValidationError("dt must be positive");
}

Contact settle_contact(const Heightfield& hf, double x, double y, double yaw, const VehicleGeometry& geom) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double a = 0.5 * geom.wheelbase;
  const double b = 0.5 * geom.width;
  // Wheels in robot frame: (forward, left).
  constexpr std::array<std::array<double, 2>, 4> kSigns = {{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};

  std::array<double, 4> z{};
  for (std::size_t k = 0; k < 4; ++k) {
    const double fwd = kSigns[k][0] * a;
    const double lft = kSigns[k][1] * b;
    const auto h = hf.try_elevation_at(x + fwd * c - lft * s, y + fwd * s + lft * c);
    if (!h) throw DomainError("wheel contact outside terrain");
    z[k] = *h;
  }

  // The contacts are symmetric about the centre, so the normal equations decouple.
  const double mean = 0.25 * (z[0] + z[1] + z[2] + z[3]);
  const double slope_fwd = (z[0] + z[1] - z[2] - z[3]) / (4.0 * a);
  const double slope_left = (z[0] - z[1] + z[2] - z[3]) / (4.0 * b);

  double residual = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double fit = mean + slope_fwd * kSigns[k][0] * a + slope_left * kSigns[k][1] * b;
    residual = std::max(residual, std::abs(z[k] - fit));
  }

  Contact out;
  out.pose.x = x;
  out.pose.y = y;
  out.pose.z = mean + geom.clearance;
  out.pose.yaw = normalize_angle(yaw);
  out.pose.pitch = std::atan(slope_fwd);
  // Z-Y-X Euler roll of the chassis whose x axis follows the heading on the plane.
  out.pose.roll = std::atan2(slope_left, std::sqrt(1.0 + slope_fwd * slope_fwd));
  out.max_residual = residual;
  return out;
}

RobotState settle_pose(const Heightfield& hf, double x, double y, double yaw, const VehicleGeometry& geom) {
  return settle_contact(hf, x, y, yaw, geom).pose;
}

StepResult step(const Heightfield& hf, const RobotState& state, const Control& u, const TractionParams& params,
                const VehicleGeometry& geom) {
  const double yaw = normalize_angle(state.yaw + u.omega * params.dt);
  const RobotState turned = settle_pose(hf, state.x, state.y, yaw, geom);

  StepResult out;
  const double uphill = u.v > 0.0 ? turned.pitch : (u.v < 0.0 ? -turned.pitch : 0.0);
  if (u.v != 0.0) {
    out.slip = std::clamp((uphill - params.slip_onset) / (params.stall_angle - params.slip_onset), 0.0, 1.0);
  }
  if (out.slip >= 1.0) {
    out.next = state;
    out.immobilized = true;
    return out;
  }

  // Travel v_eff * dt along the slope; its planar projection shrinks by cos(pitch).
  const double planar = u.v * (1.0 - out.slip) * params.dt * std::cos(turned.pitch);
  const Contact contact =
      settle_contact(hf, state.x + planar * std::cos(yaw), state.y + planar * std::sin(yaw), yaw, geom);
  if (contact.max_residual > geom.clearance) {
    out.next = state;
    out.immobilized = true;
    return out;
  }
  out.next = contact.pose;
  return out;
}

Trajectory rollout(const Heightfield& hf, const RobotState& start, std::span<const Control> controls,
                   const TractionParams& params, const VehicleGeometry& geom) {
  Trajectory traj;
  traj.dt = params.dt;
  traj.states.reserve(controls.size() + 1);
  traj.controls.reserve(controls.size());
  traj.states.push_back(start);
  for (const Control& u : controls) {
    StepResult r;
    try {
      r = step(hf, traj.states.back(), u, params, geom);
    } catch (const DomainError&) {
      traj.out_of_bounds = true;
      break;
    }
    traj.states.push_back(r.next);
    traj.controls.push_back(u);
    if (r.immobilized) {
      traj.immobilized = true;
      break;
    }
  }
  return traj;
}

}  // namespace tcbf
