#pragma once

#include <chrono>
#include <optional>

#include "wbc/control_laws.hpp"
#include "wbc/qp_solver.hpp"
#include "wbc/task_stack.hpp"

namespace wbc {

enum class PriorityMode { Strict, Weighted };

/// Gains for every task, as scheduled by the gait for the current state.
struct TaskGains {
  GainsLinear com;
  GainsAngular root;
  GainsLinear foot_linear;
  GainsAngular foot_angular;
  double posture_kp = 0.0;
  double posture_kd = 0.0;
};

/// Setpoints for one control step.
struct TaskReferences {
  PoseReference com;    // position part used
  PoseReference root;   // orientation part used
  PoseReference left_foot;
  PoseReference right_foot;
  VecX posture;
  VecX posture_velocity;
  TaskGains gains;
  // Upper bound on each foot's normal force; lets the gait unload a foot
  // before its contact is released.
  double left_fz_max = kInf;
  double right_fz_max = kInf;
};

struct ControllerConfig {
  PriorityMode mode = PriorityMode::Weighted;
  double w_posture = 1e-2;
  double w_task = 1.0;
  double w_reg = 1e-4;
  double mu = 0.5;
  double mu_torsion = -1.0;  // m; negative selects 0.1 * mean foot half-dimension
  double cop_margin = 0.005;
  double fz_min = 5.0;
  double torque_rate_max = 1000.0;
  double dt = 0.001;
  bool torque_rate_limit = true;
};

/// Rows lower <= A u <= upper over the full input u = (tau, F_L, F_R).
struct ConstraintRows {
  MatX a;
  VecX lower;
  VecX upper;

  int rows() const { return static_cast<int>(a.rows()); }

  /// Largest bound violation at u (<= 0 when satisfied).
  double max_violation(const VecX& u) const {
    double worst = -kInf;
    const VecX au = a * u;
    for (int i = 0; i < rows(); ++i) worst = std::max({worst, lower[i] - au[i], au[i] - upper[i]});
    return rows() > 0 ? worst : 0.0;
  }

  void append(const ConstraintRows& other) {
    if (other.rows() == 0) return;
    const int cols = static_cast<int>(other.a.cols());
    MatX a2(rows() + other.rows(), cols);
    if (rows() > 0) a2.topRows(rows()) = a;
    a2.bottomRows(other.rows()) = other.a;
    VecX lo(rows() + other.rows()), up(rows() + other.rows());
    lo << lower, other.lower;
    up << upper, other.upper;
    a = std::move(a2);
    lower = std::move(lo);
    upper = std::move(up);
  }
};

inline double torsion_coefficient(const FootGeometry& foot, const ControllerConfig& cfg) {
  return cfg.mu_torsion >= 0.0 ? cfg.mu_torsion : 0.1 * 0.5 * (foot.half_length + foot.half_width);
}

/// Linearized friction pyramid, CoP rectangle and yaw-torque bound for each
/// active foot (11 rows each); six zero-equality rows for each inactive foot.
/// Wrench components are (fx, fy, fz, tx, ty, tz) in inertial-aligned axes
/// with z along the ground normal.
inline ConstraintRows friction_cone_constraints(int n, const ContactState& contacts, const FootGeometry& left,
                                                const FootGeometry& right, const ControllerConfig& cfg,
                                                double left_fz_max = kInf, double right_fz_max = kInf) {
  const int cols = n + 12;
  const int rows = (contacts.left ? 11 : 6) + (contacts.right ? 11 : 6);
  ConstraintRows c{MatX::Zero(rows, cols), VecX::Constant(rows, -kInf), VecX::Zero(rows)};
  int r = 0;
  auto foot_rows = [&](bool active, int offset, const FootGeometry& foot, double fz_max) {
    if (!active) {
      for (int k = 0; k < 6; ++k, ++r) {
        c.a(r, offset + k) = 1.0;
        c.lower[r] = 0.0;
        c.upper[r] = 0.0;
      }
      return;
    }
    const int fx = offset, fy = offset + 1, fz = offset + 2, tx = offset + 3, ty = offset + 4, tz = offset + 5;
    const double lx = foot.half_length - cfg.cop_margin;
    const double ly = foot.half_width - cfg.cop_margin;
    const double mt = torsion_coefficient(foot, cfg);
    auto row = [&](int var, double sign, double fz_coeff) {
      c.a(r, var) = sign;
      c.a(r, fz) = -fz_coeff;
      ++r;
    };
    row(fx, 1.0, cfg.mu);
    row(fx, -1.0, cfg.mu);
    row(fy, 1.0, cfg.mu);
    row(fy, -1.0, cfg.mu);
    c.a(r, fz) = 1.0;
    c.lower[r] = cfg.fz_min;
    c.upper[r] = fz_max;
    ++r;
    row(ty, 1.0, lx);
    row(ty, -1.0, lx);
    row(tx, 1.0, ly);
    row(tx, -1.0, ly);
    row(tz, 1.0, mt);
    row(tz, -1.0, mt);
  };
  foot_rows(contacts.left, n, left, left_fz_max);
  foot_rows(contacts.right, n + 6, right, right_fz_max);
  return c;
}

/// |tau - tau_prev| <= tau_dot_max * dt, one row per joint.
inline ConstraintRows torque_rate_rows(const ControlInput& u_prev, const ControllerConfig& cfg) {
  const int n = static_cast<int>(u_prev.torques.size());
  ConstraintRows c{MatX::Zero(n, n + 12), VecX(n), VecX(n)};
  c.a.leftCols(n).setIdentity();
  const double step = cfg.torque_rate_max * cfg.dt;
  c.lower = u_prev.torques.array() - step;
  c.upper = u_prev.torques.array() + step;
  return c;
}

/// Desired accelerations from the control laws.
struct DesiredAccelerations {
  VecX task;     // 18, stacked CoM, root angular, left, right
  VecX posture;  // n
};

inline DesiredAccelerations desired_accelerations(const TaskModel& tm, const TaskReferences& refs) {
  const TaskMeasurements& m = tm.measured;
  const TaskGains& g = refs.gains;
  DesiredAccelerations out;
  out.task.resize(kTaskRows);
  out.task.segment<3>(kComRows) = linear_pd(m.com, m.com_velocity, refs.com, g.com);
  out.task.segment<3>(kRootRows) = rotational_pd(m.root.rotation, m.root_twist.angular, refs.root, g.root);
  out.task.segment<6>(kLeftFootRows) = se3_pd(m.left_sole, m.left_twist, refs.left_foot, g.foot_linear, g.foot_angular);
  out.task.segment<6>(kRightFootRows) =
      se3_pd(m.right_sole, m.right_twist, refs.right_foot, g.foot_linear, g.foot_angular);
  const VecX kp = VecX::Constant(tm.n, g.posture_kp);
  const VecX kd = VecX::Constant(tm.n, g.posture_kd);
  out.posture = postural_pd(tm.joint_positions, tm.joint_velocities, refs.posture, refs.posture_velocity, kp, kd);
  return out;
}

namespace detail {

inline void check_reference_dimensions(const TaskModel& tm, const TaskReferences& refs) {
  if (refs.posture.size() != tm.n || refs.posture_velocity.size() != tm.n)
    throw InfeasibleDimensions("posture reference has the wrong dimension");
}

inline void check_prev(const TaskModel& tm, const std::optional<ControlInput>& u_prev) {
  if (u_prev && u_prev->torques.size() != tm.n) throw InfeasibleDimensions("previous input has the wrong dimension");
}

// Inactive wrenches have no effect on the dynamics; pin the Hessian there.
inline void regularize_inactive(const TaskModel& tm, double weight, MatX& h) {
  const double w = weight > 0.0 ? weight : 1e-6;
  if (!tm.contacts.left) h.block(tm.n, tm.n, 6, 6).diagonal().array() += w;
  if (!tm.contacts.right) h.block(tm.n + 6, tm.n + 6, 6, 6).diagonal().array() += w;
}

// With both task weights at zero the active wrench block is empty; a small
// floor keeps the Hessian factorizable without moving a well-posed optimum.
inline void floor_active_wrenches(const TaskModel& tm, MatX& h) {
  if (Eigen::LLT<MatX>(h).info() == Eigen::Success) return;
  constexpr double floor = 1e-10;
  if (tm.contacts.left) h.block(tm.n, tm.n, 6, 6).diagonal().array() += floor;
  if (tm.contacts.right) h.block(tm.n + 6, tm.n + 6, 6, 6).diagonal().array() += floor;
}

inline ConstraintRows inequality_rows(const TaskModel& tm, const RobotModel& model, const TaskReferences& refs,
                                      const std::optional<ControlInput>& u_prev, const ControllerConfig& cfg) {
  ConstraintRows rows = friction_cone_constraints(tm.n, tm.contacts, *model.frame("l_sole").foot,
                                                  *model.frame("r_sole").foot, cfg, refs.left_fz_max,
                                                  refs.right_fz_max);
  if (u_prev && cfg.torque_rate_limit) rows.append(torque_rate_rows(*u_prev, cfg));
  return rows;
}

}  // namespace detail

/// Soft priorities:
///   w_s/2 |s_ddot(u) - s_ddot*|^2 + w_task/2 |Ups_dot(u) - Ups_dot*|^2 + w_reg/2 |tau|^2
/// subject to the contact rows and, given u_prev, the torque-rate rows.
inline QpProblem assemble_weighted(const RobotModel& model, const TaskModel& tm, const TaskReferences& refs,
                                   const std::optional<ControlInput>& u_prev, const ControllerConfig& cfg) {
  detail::check_reference_dimensions(tm, refs);
  detail::check_prev(tm, u_prev);
  const DesiredAccelerations des = desired_accelerations(tm, refs);
  const AffineMap task = task_acceleration_map(tm);
  const AffineMap joint = joint_acceleration_map(tm);
  const int nu = tm.num_inputs();

  QpProblem p;
  p.hessian = cfg.w_posture * joint.matrix.transpose() * joint.matrix +
              cfg.w_task * task.matrix.transpose() * task.matrix;
  p.hessian.topLeftCorner(tm.n, tm.n).diagonal().array() += cfg.w_reg;
  detail::regularize_inactive(tm, cfg.w_reg, p.hessian);
  p.hessian = 0.5 * (p.hessian + p.hessian.transpose()).eval();
  detail::floor_active_wrenches(tm, p.hessian);
  p.gradient = cfg.w_posture * joint.matrix.transpose() * (joint.offset - des.posture) +
               cfg.w_task * task.matrix.transpose() * (task.offset - des.task);

  const ConstraintRows rows = detail::inequality_rows(tm, model, refs, u_prev, cfg);
  p.constraints = rows.a;
  p.lower = rows.lower;
  p.upper = rows.upper;
  if (p.constraints.cols() != nu) throw InfeasibleDimensions("constraint width does not match the input");
  return p;
}

/// Strict priorities: 1/2 |s_ddot(u) - s_ddot*|^2 (+ torque regularizer)
/// subject to Ups_dot(u) = Ups_dot* as equality rows plus the weighted-mode rows.
inline QpProblem assemble_strict(const RobotModel& model, const TaskModel& tm, const TaskReferences& refs,
                                 const std::optional<ControlInput>& u_prev, const ControllerConfig& cfg) {
  detail::check_reference_dimensions(tm, refs);
  detail::check_prev(tm, u_prev);
  const DesiredAccelerations des = desired_accelerations(tm, refs);
  const AffineMap task = task_acceleration_map(tm);
  const AffineMap joint = joint_acceleration_map(tm);

  QpProblem p;
  p.hessian = joint.matrix.transpose() * joint.matrix;
  p.hessian.topLeftCorner(tm.n, tm.n).diagonal().array() += cfg.w_reg;
  detail::regularize_inactive(tm, cfg.w_reg, p.hessian);
  p.hessian = 0.5 * (p.hessian + p.hessian.transpose()).eval();
  detail::floor_active_wrenches(tm, p.hessian);
  p.gradient = joint.matrix.transpose() * (joint.offset - des.posture);

  const VecX target = des.task - task.offset;
  ConstraintRows rows{task.matrix, target, target};
  rows.append(detail::inequality_rows(tm, model, refs, u_prev, cfg));
  p.constraints = rows.a;
  p.lower = rows.lower;
  p.upper = rows.upper;
  return p;
}

struct ControlDiagnostics {
  double cost = 0.0;
  double max_friction_residual = 0.0;  // max(lower - Au, Au - upper) over contact rows
  double max_rate_residual = 0.0;
  double max_inactive_wrench = 0.0;
  double task_residual = 0.0;  // |Ups_dot(u*) - Ups_dot*|
  double solve_time_us = 0.0;
  double step_time_us = 0.0;
  int active_set = 0;
  int iterations = 0;
  KktResiduals kkt;
  QpStatus status = QpStatus::Optimal;
};

class SolverFailure : public Error {
 public:
  SolverFailure(const std::string& what, ControlInput last_feasible, QpStatus status)
      : Error(what), last_feasible_(std::move(last_feasible)), status_(status) {}
  const ControlInput& last_feasible() const { return last_feasible_; }
  QpStatus status() const { return status_; }

 private:
  ControlInput last_feasible_;
  QpStatus status_;
};

struct ControlOutput {
  ControlInput input;
  ControlDiagnostics diagnostics;
};

/// One controller instance: owns the solver workspace and the previous input.
class WholeBodyController {
 public:
  WholeBodyController(const RobotModel& model, ControllerConfig cfg) : model_(&model), cfg_(cfg) {}

  const ControllerConfig& config() const { return cfg_; }
  const std::optional<ControlInput>& previous_input() const { return u_prev_; }
  void reset() { u_prev_.reset(); }
  void seed_previous(const ControlInput& u) { u_prev_ = u; }

  ControlOutput step(const Configuration& q, const Velocity& nu, const ContactState& contacts,
                     const TaskReferences& refs) {
    const auto t0 = std::chrono::steady_clock::now();
    const TaskModel tm = build_task_model(*model_, q, nu, contacts);
    ControlOutput out = solve_task_model(tm, refs);
    out.diagnostics.step_time_us =
        std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }

  ControlOutput solve_task_model(const TaskModel& tm, const TaskReferences& refs) {
    const QpProblem p = cfg_.mode == PriorityMode::Weighted ? assemble_weighted(*model_, tm, refs, u_prev_, cfg_)
                                                             : assemble_strict(*model_, tm, refs, u_prev_, cfg_);
    std::optional<VecX> warm;
    if (u_prev_) warm = u_prev_->stacked();
    const auto t0 = std::chrono::steady_clock::now();
    const QpSolution sol = solver_.solve(p, warm);
    const double solve_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    if (!sol.optimal()) {
      throw SolverFailure(std::string("QP ") + to_string(sol.status),
                          u_prev_ ? *u_prev_ : ControlInput::zero(tm.n), sol.status);
    }

    ControlOutput out;
    out.input = ControlInput::from_stacked(sol.u);
    ControlDiagnostics& d = out.diagnostics;
    d.cost = sol.objective;
    d.solve_time_us = solve_us;
    d.active_set = sol.active_rows;
    d.iterations = sol.iterations;
    d.kkt = sol.kkt;
    d.status = sol.status;
    const ConstraintRows friction =
        friction_cone_constraints(tm.n, tm.contacts, *model_->frame("l_sole").foot, *model_->frame("r_sole").foot,
                                  cfg_, refs.left_fz_max, refs.right_fz_max);
    d.max_friction_residual = friction.max_violation(sol.u);
    if (u_prev_ && cfg_.torque_rate_limit) d.max_rate_residual = torque_rate_rows(*u_prev_, cfg_).max_violation(sol.u);
    if (!tm.contacts.left) d.max_inactive_wrench = std::max(d.max_inactive_wrench, out.input.left_wrench.cwiseAbs().maxCoeff());
    if (!tm.contacts.right)
      d.max_inactive_wrench = std::max(d.max_inactive_wrench, out.input.right_wrench.cwiseAbs().maxCoeff());
    const DesiredAccelerations des = desired_accelerations(tm, refs);
    d.task_residual = (task_acceleration_from_input(tm, out.input) - des.task).norm();
    u_prev_ = out.input;
    return out;
  }

 private:
  const RobotModel* model_;
  ControllerConfig cfg_;
  QpSolver solver_;
  std::optional<ControlInput> u_prev_;
};

/// Stateless form: one step given the previous input (none on the first step,
/// which then runs without torque-rate rows).
inline ControlOutput control_step(const RobotModel& model, const Configuration& q, const Velocity& nu,
                                  const ContactState& contacts, const TaskReferences& refs,
                                  const ControllerConfig& cfg, const std::optional<ControlInput>& u_prev) {
  WholeBodyController c(model, cfg);
  if (u_prev) c.seed_previous(*u_prev);
  return c.step(q, nu, contacts, refs);
}

}  // namespace wbc
