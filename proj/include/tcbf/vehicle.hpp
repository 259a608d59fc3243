#pragma once

#include <span>
#include <vector>

#include "tcbf/heightfield.hpp"
#include "tcbf/types.hpp"

namespace tcbf {

/// Chassis dimensions in metres (1/10th-scale four-wheeler).
struct VehicleGeometry {
  double length = 0.523;
  double width = 0.249;
  double height = 0.2;
  double wheelbase = 0.312;
  double clearance = 0.05;

  void validate() const;
};

/// Uphill slip ramps linearly from zero at `slip_onset` to full stall at
/// `stall_angle` (both pitch, radians).
struct TractionParams {
  double slip_onset = 0.35;
  double stall_angle = 0.6;
  double dt = 0.1;

  void validate() const;
};

/// Pose settled on terrain plus the largest wheel distance from the fitted plane.
struct Contact {
  RobotState pose;
  double max_residual = 0.0;
};

/// Least-squares plane through the four wheel contacts. Throws DomainError
/// if a wheel lies outside the terrain.
Contact settle_contact(const Heightfield& hf, double x, double y, double yaw, const VehicleGeometry& geom);

RobotState settle_pose(const Heightfield& hf, double x, double y, double yaw, const VehicleGeometry& geom);

struct StepResult {
  RobotState next;
  bool immobilized = false;
  double slip = 0.0;
};

/// One unicycle step on terrain. When immobilized the state is returned unchanged.
StepResult step(const Heightfield& hf, const RobotState& state, const Control& u, const TractionParams& params,
                const VehicleGeometry& geom);

/// State sequence with the controls that produced it. `h` is either empty
/// or holds one barrier value per state (NaN where no observation exists).
struct Trajectory {
  std::vector<RobotState> states;
  std::vector<Control> controls;
  std::vector<double> h;
  bool immobilized = false;
  bool out_of_bounds = false;
  bool infeasible = false;
  double dt = 0.1;

  bool terminated() const { return immobilized || out_of_bounds; }
  double elapsed() const { return double(controls.size()) * dt; }
};

/// Applies `controls` in order, stopping at the first immobilized step
/// (which is recorded) or the first step that leaves the terrain (which is not).
Trajectory rollout(const Heightfield& hf, const RobotState& start, std::span<const Control> controls,
                   const TractionParams& params, const VehicleGeometry& geom);

}  // namespace tcbf
