#pragma once

#include <optional>
#include <string_view>

#include "tcbf/barrier.hpp"
#include "tcbf/heightfield.hpp"
#include "tcbf/safety.hpp"
#include "tcbf/vehicle.hpp"

namespace tcbf {

/// `paper`:  h(o_next) * u_e + gamma * h(o_t) >= 0 (the trained decrease form).
/// `strict`: h(o_next) >= (1 - gamma) * h(o_t).
enum class CbfForm { paper, strict };

std::string_view to_string(CbfForm f);
CbfForm parse_cbf_form(std::string_view s);

struct PlannerConfig {
  double lambda_effort = 1.0;
  double lambda_goal = 0.1;
  double lambda_stab = 0.01;
  double w_x = 50.0;
  double w_y = 50.0;
  double w_roll = 1.0;
  double w_pitch = 1.0;
  int horizon = 10;
  double goal_tol = 0.1;
  ControlBounds bounds;
  int v_samples = 11;
  int omega_samples = 11;
  double alpha_gamma = 0.5;
  CbfForm cbf_form = CbfForm::paper;
  /// When false every candidate passes the barrier check (unconstrained baseline).
  bool use_cbf = true;
  int max_steps = 400;

  VehicleGeometry vehicle;
  TractionParams traction;
  PatchGeometry patch;

  void validate() const;
};

double goal_cost(const RobotState& s, const Point2& goal, const PlannerConfig& cfg);
double stab_cost(const RobotState& s, const PlannerConfig& cfg);

/// Joint Euclidean norm of the control with each component divided by its
/// largest admissible magnitude.
double effort(const Control& u, const ControlBounds& bounds);

bool cbf_condition(double h_t, double h_next, double u_e, double alpha_gamma, CbfForm form);
bool cbf_feasible(const Barrier& barrier, const ObservationPatch& o_t, const ObservationPatch& o_next,
                  const Control& u, const PlannerConfig& cfg);

/// The candidate grid over the control bounds, v-major.
std::vector<Control> candidate_controls(const PlannerConfig& cfg);

struct PlanResult {
  std::optional<Control> control;  // nullopt: no feasible candidate
  double cost = 0.0;
  double h_current = 0.0;
  std::size_t feasible = 0;
  std::size_t evaluated = 0;
};

/// One receding-horizon decision. `barrier` may be null only when
/// cfg.use_cbf is false.
PlanResult plan_step(const Heightfield& hf, const Barrier* barrier, const RobotState& state, const Point2& goal,
                     const PlannerConfig& cfg);

enum class Outcome { reached, paused_infeasible, immobilized, budget_exhausted };

std::string_view to_string(Outcome o);
Outcome parse_outcome(std::string_view s);

struct NavigationResult {
  Trajectory trajectory;
  Outcome outcome = Outcome::budget_exhausted;
};

NavigationResult navigate(const Heightfield& hf, const Barrier* barrier, const RobotState& start, const Point2& goal,
                          const PlannerConfig& cfg);

}  // namespace tcbf
