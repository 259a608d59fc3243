#include "tcbf/planner.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include "tcbf/errors.hpp"

namespace tcbf {

std::string_view to_string(CbfForm f) { return f == CbfForm::paper ? "paper" : "strict"; }

CbfForm parse_cbf_form(std::string_view s) {
  if (s == "paper") return CbfForm::paper;
  if (s == "strict") return CbfForm::strict;
  throw ValidationError("unknown cbf form '" + std::string(s) + "'");
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::reached: return "reached";
    case Outcome::paused_infeasible: return "paused_infeasible";
    case Outcome::immobilized: return "immobilized";
    case Outcome::budget_exhausted: return "budget_exhausted";
  }
  return "unknown";
}

Outcome parse_outcome(std::string_view s) {
  for (Outcome o : {Outcome::reached, Outcome::paused_infeasible, Outcome::immobilized, Outcome::budget_exhausted}) {
    if (to_string(o) == s) return o;
  }
  throw ValidationError("unknown outcome '" + std::string(s) + "'");
}

void PlannerConfig::validate() const {
  if (horizon < 1) throw ValidationError("planning horizon must be >= 1");
  if (!(goal_tol > 0)) throw ValidationError("goal tolerance must be positive");
  if (!(lambda_effort >= 0 && lambda_goal >= 0 && lambda_stab >= 0 && w_x >= 0 && w_y >= 0 && w_roll >= 0 &&
        w_pitch >= 0)) {
    throw ValidationError("planner weights must be nonnegative");
  }
  if (v_samples < 1 || omega_samples < 1) throw ValidationError("candidate grid must be nonempty");
  if (!(alpha_gamma >= 0 && alpha_gamma < 1)) throw ValidationError("alpha_gamma must lie in [0, 1)");
  if (max_steps < 0) throw ValidationError("step budget must be nonnegative");
  bounds.validate();
  vehicle.validate();
  traction.validate();
}

double goal_cost(const RobotState& s, const Point2& goal, const PlannerConfig& cfg) {
  return cfg.w_x * std::abs(s.x - goal.x) + cfg.w_y * std::abs(s.y - goal.y);
}

double stab_cost(const RobotState& s, const PlannerConfig& cfg) {
  return cfg.w_roll * std::abs(s.roll) + cfg.w_pitch * std::abs(s.pitch);
}

double effort(const Control& u, const ControlBounds& bounds) {
  const double v_scale = std::max(std::abs(bounds.v_min), std::abs(bounds.v_max));
  const double w_scale = std::max(std::abs(bounds.omega_min), std::abs(bounds.omega_max));
  const double v = v_scale > 0 ? u.v / v_scale : 0.0;
  const double w = w_scale > 0 ? u.omega / w_scale : 0.0;
  return std::hypot(v, w);
}

bool cbf_condition(double h_t, double h_next, double u_e, double alpha_gamma, CbfForm form) {
  if (form == CbfForm::paper) return h_next * u_e + alpha_gamma * h_t >= 0.0;
  return h_next >= (1.0 - alpha_gamma) * h_t;
}

bool cbf_feasible(const Barrier& barrier, const ObservationPatch& o_t, const ObservationPatch& o_next,
                  const Control& u, const PlannerConfig& cfg) {
  return cbf_condition(barrier.h(o_t), barrier.h(o_next), barrier.encode_control(u), cfg.alpha_gamma, cfg.cbf_form);
}

std::vector<Control> candidate_controls(const PlannerConfig& cfg) {
  auto axis = [](double lo, double hi, int n, int k) {
    return n == 1 ? 0.5 * (lo + hi) : (k == n - 1 ? hi : lo + (hi - lo) * double(k) / double(n - 1));
  };
  std::vector<Control> out;
  out.reserve(std::size_t(cfg.v_samples * cfg.omega_samples));
  for (int i = 0; i < cfg.v_samples; ++i) {
    for (int j = 0; j < cfg.omega_samples; ++j) {
      out.push_back({axis(cfg.bounds.v_min, cfg.bounds.v_max, cfg.v_samples, i),
                     axis(cfg.bounds.omega_min, cfg.bounds.omega_max, cfg.omega_samples, j)});
    }
  }
  return out;
}

PlanResult plan_step(const Heightfield& hf, const Barrier* barrier, const RobotState& state, const Point2& goal,
                     const PlannerConfig& cfg) {
  if (cfg.use_cbf && barrier == nullptr) throw ValidationError("plan_step: CBF constraint enabled without a barrier");
  PlanResult result;

  std::optional<ObservationPatch> o_t;
  if (barrier != nullptr) o_t = try_extract_patch(hf, state, cfg.patch);
  if (cfg.use_cbf && !o_t) return result;
  if (barrier != nullptr && o_t) result.h_current = barrier->h(*o_t);

  struct Candidate {
    Control u;
    double cost;
    double effort;
  };
  std::vector<Candidate> survivors;
  std::vector<ObservationPatch> next_patches;

  const auto controls = candidate_controls(cfg);
  std::vector<Control> held(std::size_t(cfg.horizon));
  for (const Control& u : controls) {
    ++result.evaluated;
    std::fill(held.begin(), held.end(), u);
    const Trajectory r = rollout(hf, state, held, cfg.traction, cfg.vehicle);
    if (r.terminated()) continue;
    auto o_next = try_extract_patch(hf, r.states[1], cfg.patch);
    if (!o_next) continue;

    const double e = effort(u, cfg.bounds);
    double stab = 0.0;
    for (std::size_t k = 1; k < r.states.size(); ++k) stab += stab_cost(r.states[k], cfg);
    const double cost =
        cfg.lambda_effort * e + cfg.lambda_goal * goal_cost(r.states.back(), goal, cfg) + cfg.lambda_stab * stab;
    survivors.push_back({u, cost, e});
    if (cfg.use_cbf) next_patches.push_back(std::move(*o_next));
  }

  std::vector<double> h_next;
  if (cfg.use_cbf && !next_patches.empty()) h_next = barrier->evaluate(next_patches);

  const Candidate* best = nullptr;
  auto key = [](const Candidate& c) { return std::make_tuple(c.cost, c.effort, std::abs(c.u.omega), c.u.v, c.u.omega); };
  for (std::size_t k = 0; k < survivors.size(); ++k) {
    const Candidate& c = survivors[k];
    if (cfg.use_cbf &&
        !cbf_condition(result.h_current, h_next[k], barrier->encode_control(c.u), cfg.alpha_gamma, cfg.cbf_form)) {
      continue;
    }
    ++result.feasible;
    if (best == nullptr || key(c) < key(*best)) best = &c;
  }
  if (best != nullptr) {
    result.control = best->u;
    result.cost = best->cost;
  }
  return result;
}

NavigationResult navigate(const Heightfield& hf, const Barrier* barrier, const RobotState& start, const Point2& goal,
                          const PlannerConfig& cfg) {
  cfg.validate();
  NavigationResult out;
  Trajectory& traj = out.trajectory;
  traj.dt = cfg.traction.dt;
  auto barrier_value = [&](const RobotState& s) {
    if (barrier == nullptr) return std::numeric_limits<double>::quiet_NaN();
    const auto patch = try_extract_patch(hf, s, cfg.patch);
    return patch ? barrier->h(*patch) : std::numeric_limits<double>::quiet_NaN();
  };
  traj.states.push_back(start);
  traj.h.push_back(barrier_value(start));

  for (;;) {
    const RobotState& s = traj.states.back();
    if (std::hypot(s.x - goal.x, s.y - goal.y) < cfg.goal_tol) {
      out.outcome = Outcome::reached;
      return out;
    }
    if (int(traj.controls.size()) >= cfg.max_steps) {
      out.outcome = Outcome::budget_exhausted;
      return out;
    }
    const PlanResult plan = plan_step(hf, barrier, s, goal, cfg);
    if (!plan.control) {
      traj.infeasible = true;
      out.outcome = Outcome::paused_infeasible;
      return out;
    }
    const StepResult r = step(hf, s, *plan.control, cfg.traction, cfg.vehicle);
    traj.controls.push_back(*plan.control);
    traj.states.push_back(r.next);
    traj.h.push_back(barrier_value(r.next));
    if (r.immobilized) {
      traj.immobilized = true;
      out.outcome = Outcome::immobilized;
      return out;
    }
  }
}

}  // namespace tcbf
