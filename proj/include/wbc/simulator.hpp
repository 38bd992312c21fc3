#pragma once

#include <string>

#include "wbc/dynamics.hpp"
#include "wbc/task_stack.hpp"

namespace wbc {

enum class Foot { Left, Right };

struct SimConfig {
  double dt = 0.001;
  double alpha = 20.0;   // Baumgarte velocity gain, 1/s
  double beta = 100.0;   // Baumgarte position gain, 1/s^2
  Vec3 gravity = kDefaultGravity;
  double blowup_velocity = 1e3;
};

struct SimState {
  Configuration q;
  Velocity nu;
  double t = 0.0;
  ContactState contacts;
  Vec6 left_wrench = Vec6::Zero();
  Vec6 right_wrench = Vec6::Zero();
  // Sole poses the holonomic constraints hold each active foot to.
  Pose left_anchor;
  Pose right_anchor;
};

struct ForwardDynamicsResult {
  VecX nu_dot;
  Vec6 left_wrench = Vec6::Zero();
  Vec6 right_wrench = Vec6::Zero();
};

namespace detail {

// Holonomic residual c(q) of a sole held at `anchor`: position error over the
// small-angle orientation error, matching the mixed twist rows.
inline Vec6 contact_residual(const Pose& sole, const Pose& anchor) {
  Vec6 c;
  c << sole.position - anchor.position, skew_vee(sole.rotation * anchor.rotation.transpose());
  return c;
}

struct ContactRows {
  MatX jacobian;  // 6k x nv
  VecX bias;      // J_dot nu
  VecX residual;  // c(q)
};

inline ContactRows contact_rows(const KinematicsState& ks, const ContactState& contacts,
                                const Pose& left_anchor, const Pose& right_anchor) {
  const RobotModel& model = ks.model();
  const int k = (contacts.left ? 1 : 0) + (contacts.right ? 1 : 0);
  ContactRows rows{MatX(6 * k, model.nv()), VecX(6 * k), VecX(6 * k)};
  int r = 0;
  auto add = [&](const char* frame, const Pose& anchor) {
    const int f = model.frame_index(frame);
    const int link = model.frames()[f].link;
    const Pose sole = ks.frame_pose(f);
    rows.jacobian.middleRows<6>(r) = ks.point_jacobian(link, sole.position);
    rows.bias.segment<3>(r) = ks.point_bias_acceleration(link, sole.position);
    rows.bias.segment<3>(r + 3) = ks.link_bias_angular_acceleration(link);
    rows.residual.segment<6>(r) = contact_residual(sole, anchor);
    r += 6;
  };
  if (contacts.left) add("l_sole", left_anchor);
  if (contacts.right) add("r_sole", right_anchor);
  return rows;
}

}  // namespace detail

/// Solves [M, -J^T; J, 0] [nu_dot; f] = [zeta tau - h; -J_dot nu - alpha J nu - beta c]
/// through the contact-space Schur complement. Wrenches are (force; torque)
/// at the sole origin, inertial-aligned.
inline ForwardDynamicsResult constrained_forward_dynamics(const RobotModel& model, const Configuration& q,
                                                          const Velocity& nu, const VecX& tau,
                                                          const ContactState& contacts, const Pose& left_anchor,
                                                          const Pose& right_anchor, const SimConfig& cfg) {
  const int n = model.num_joints();
  if (tau.size() != n) throw DimensionMismatch("torque vector has the wrong dimension");
  const KinematicsState ks(model, q, nu);
  const MatX m = compute_mass_matrix(ks);
  const VecX h = compute_bias(ks, cfg.gravity);
  const Eigen::LLT<MatX> llt(m);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("mass matrix factorization failed");

  VecX generalized = -h;
  generalized.tail(n) += tau;
  ForwardDynamicsResult out;
  const VecX free_acc = llt.solve(generalized);
  if (!contacts.any()) {
    out.nu_dot = free_acc;
    return out;
  }

  const VecX v = nu.stacked();
  const detail::ContactRows rows = detail::contact_rows(ks, contacts, left_anchor, right_anchor);
  const MatX minv_jt = llt.solve(rows.jacobian.transpose());
  const MatX schur = rows.jacobian * minv_jt;
  const Eigen::LDLT<MatX> ldlt(schur);
  const double scale = schur.diagonal().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-12 * scale)
    throw SingularKkt("contact Jacobian is rank deficient");
  const VecX target = -rows.bias - cfg.alpha * rows.jacobian * v - cfg.beta * rows.residual;
  const VecX f = ldlt.solve(target - rows.jacobian * free_acc);
  out.nu_dot = free_acc + minv_jt * f;
  int r = 0;
  if (contacts.left) {
    out.left_wrench = f.segment<6>(r);
    r += 6;
  }
  if (contacts.right) out.right_wrench = f.segment<6>(r);
  return out;
}

/// Velocity after a perfectly plastic impact on the active contacts:
/// nu+ = nu - M^-1 J^T (J M^-1 J^T)^-1 J nu.
inline VecX impact_projection(const RobotModel& model, const Configuration& q, const VecX& nu,
                              const ContactState& contacts) {
  if (!contacts.any()) return nu;
  const KinematicsState ks(model, q, Velocity::from_stacked(nu));
  const MatX m = compute_mass_matrix(ks);
  const Eigen::LLT<MatX> llt(m);
  const detail::ContactRows rows = detail::contact_rows(ks, contacts, Pose{}, Pose{});
  const MatX minv_jt = llt.solve(rows.jacobian.transpose());
  const MatX schur = rows.jacobian * minv_jt;
  const Eigen::LDLT<MatX> ldlt(schur);
  const double scale = schur.diagonal().cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-12 * scale)
    throw SingularKkt("contact Jacobian is rank deficient");
  return nu - minv_jt * ldlt.solve(rows.jacobian * nu);
}

/// Rigid-contact multibody simulator, semi-implicit Euler at a fixed step.
class Simulator {
 public:
  Simulator(const RobotModel& model, SimConfig cfg, const Configuration& q0, ContactState contacts = {true, true})
      : model_(&model), cfg_(cfg) {
    if (!(cfg_.dt > 0.0) || cfg_.alpha < 0.0 || cfg_.beta < 0.0) throw Error("invalid simulator configuration");
    state_.q = q0;
    state_.nu = Velocity::zero(model.num_joints());
    state_.contacts = contacts;
    const KinematicsState ks(model, q0);
    state_.left_anchor = ks.frame_pose(model.frame_index("l_sole"));
    state_.right_anchor = ks.frame_pose(model.frame_index("r_sole"));
  }

  const SimState& state() const { return state_; }
  SimState& mutable_state() { return state_; }
  const SimConfig& config() const { return cfg_; }
  const RobotModel& model() const { return *model_; }

  /// Clamps to the model's torque limits (0 means unlimited).
  VecX clamp_torques(const VecX& tau) const {
    VecX out = tau;
    for (int j = 0; j < model_->num_joints(); ++j) {
      const double lim = model_->joints()[j].torque_limit;
      if (lim > 0.0) out[j] = std::clamp(out[j], -lim, lim);
    }
    return out;
  }

  /// Last accelerations, as used by the most recent step.
  const VecX& last_acceleration() const { return last_nu_dot_; }

  const SimState& step(const VecX& tau) {
    const VecX applied = clamp_torques(tau);
    const ForwardDynamicsResult fd = constrained_forward_dynamics(
        *model_, state_.q, state_.nu, applied, state_.contacts, state_.left_anchor, state_.right_anchor, cfg_);
    last_nu_dot_ = fd.nu_dot;
    const VecX v = state_.nu.stacked() + fd.nu_dot * cfg_.dt;
    if (!v.allFinite() || v.cwiseAbs().maxCoeff() > cfg_.blowup_velocity)
      throw NumericalBlowup("velocity exceeded " + std::to_string(cfg_.blowup_velocity) + " at t=" +
                            std::to_string(state_.t));
    state_.nu = Velocity::from_stacked(v);
    state_.q = integrate(state_.q, v, cfg_.dt);
    state_.t += cfg_.dt;
    state_.left_wrench = fd.left_wrench;
    state_.right_wrench = fd.right_wrench;
    return state_;
  }

  /// Activation anchors the sole where it is and removes the constraint-space
  /// velocity of all active contacts; deactivation only drops the rows.
  const SimState& switch_contact(Foot foot, bool activate) {
    bool& flag = foot == Foot::Left ? state_.contacts.left : state_.contacts.right;
    if (flag == activate) return state_;
    flag = activate;
    if (foot == Foot::Left) state_.left_wrench.setZero();
    else state_.right_wrench.setZero();
    if (!activate) return state_;
    const char* frame = foot == Foot::Left ? "l_sole" : "r_sole";
    const Pose sole = frame_pose(*model_, state_.q, frame);
    (foot == Foot::Left ? state_.left_anchor : state_.right_anchor) = sole;
    state_.nu = Velocity::from_stacked(impact_projection(*model_, state_.q, state_.nu.stacked(), state_.contacts));
    return state_;
  }

  /// Contact velocity J_C nu of the active contacts.
  VecX contact_velocity() const {
    const KinematicsState ks(*model_, state_.q, state_.nu);
    const detail::ContactRows rows =
        detail::contact_rows(ks, state_.contacts, state_.left_anchor, state_.right_anchor);
    return rows.jacobian * state_.nu.stacked();
  }

  /// Holonomic residual of the active contacts.
  VecX contact_drift() const {
    const KinematicsState ks(*model_, state_.q);
    return detail::contact_rows(ks, state_.contacts, state_.left_anchor, state_.right_anchor)
        .residual;
  }

 private:
  const RobotModel* model_;
  SimConfig cfg_;
  SimState state_;
  VecX last_nu_dot_;
};

}  // namespace wbc
