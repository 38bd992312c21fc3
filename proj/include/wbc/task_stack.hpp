#pragma once

#include "wbc/dynamics.hpp"

namespace wbc {

struct ContactState {
  bool left = true;
  bool right = true;

  bool any() const { return left || right; }
  bool operator==(const ContactState&) const = default;
};

/// u = (tau, F_L, F_R). Wrenches are (force; torque) at the sole origin in
/// inertial-aligned axes.
struct ControlInput {
  VecX torques;
  Vec6 left_wrench = Vec6::Zero();
  Vec6 right_wrench = Vec6::Zero();

  static ControlInput zero(int n) { return {VecX::Zero(n), Vec6::Zero(), Vec6::Zero()}; }

  VecX stacked() const {
    VecX u(torques.size() + 12);
    u << torques, left_wrench, right_wrench;
    return u;
  }
  static ControlInput from_stacked(const VecX& u) {
    const auto n = u.size() - 12;
    return {u.head(n), u.segment<6>(n), u.segment<6>(n + 6)};
  }
};

// Row blocks of the task stack.
inline constexpr int kTaskRows = 18;
inline constexpr int kComRows = 0;
inline constexpr int kRootRows = 3;
inline constexpr int kLeftFootRows = 6;
inline constexpr int kRightFootRows = 12;

/// Measured task-space state, taken from the same kinematics as the Jacobians.
struct TaskMeasurements {
  Vec3 com = Vec3::Zero();
  Vec3 com_velocity = Vec3::Zero();
  Pose root;
  Twist root_twist;
  Pose left_sole;
  Twist left_twist;
  Pose right_sole;
  Twist right_twist;
};

/// Per-step snapshot of everything the QP needs to map u to accelerations.
///
/// Task rows, in order: CoM linear (3), root angular (3), left sole (6),
/// right sole (6). Input matrix B = [zeta, J_C^T] with zeta = (0_{n x 6}, 1_n)^T.
/// Contact Jacobian rows of an inactive foot are zero.
struct TaskModel {
  int n = 0;
  ContactState contacts;
  MatX task_jacobian;   // 18 x (n+6)
  VecX task_bias;       // 18, J_dot nu
  MatX contact_jacobian;  // 12 x (n+6)
  MatX input_matrix;    // (n+6) x (n+12)
  MatX mass_matrix;
  VecX bias;
  Eigen::LLT<MatX> mass_llt;
  MatX minv_b;  // M^-1 B
  VecX minv_h;  // M^-1 h
  TaskMeasurements measured;
  VecX joint_positions;
  VecX joint_velocities;

  int num_inputs() const { return n + 12; }
};

inline TaskModel build_task_model(const RobotModel& model, const Configuration& q, const Velocity& nu,
                                  const ContactState& contacts, const Vec3& gravity = kDefaultGravity) {
  const KinematicsState ks(model, q, nu);
  const int n = model.num_joints();
  const int nv = n + 6;
  TaskModel tm;
  tm.n = n;
  tm.contacts = contacts;
  tm.mass_matrix = compute_mass_matrix(ks);
  tm.bias = compute_bias(ks, gravity);
  tm.mass_llt.compute(tm.mass_matrix);
  if (tm.mass_llt.info() != Eigen::Success) throw NotPositiveDefinite("mass matrix factorization failed");

  const int root = model.frame_index("root");
  const int lsole = model.frame_index("l_sole");
  const int rsole = model.frame_index("r_sole");
  const int root_link = model.frames()[root].link;
  const int l_link = model.frames()[lsole].link;
  const int r_link = model.frames()[rsole].link;
  const Pose root_pose = ks.frame_pose(root);
  const Pose l_pose = ks.frame_pose(lsole);
  const Pose r_pose = ks.frame_pose(rsole);

  const MatX j_com = compute_com_jacobian(ks);
  const MatX j_root = ks.point_jacobian(root_link, root_pose.position);
  const MatX j_left = ks.point_jacobian(l_link, l_pose.position);
  const MatX j_right = ks.point_jacobian(r_link, r_pose.position);

  tm.task_jacobian.resize(kTaskRows, nv);
  tm.task_jacobian << j_com, j_root.bottomRows<3>(), j_left, j_right;
  tm.task_bias.resize(kTaskRows);
  tm.task_bias << compute_com_jdot_nu(ks), ks.link_bias_angular_acceleration(root_link),
      ks.point_bias_acceleration(l_link, l_pose.position), ks.link_bias_angular_acceleration(l_link),
      ks.point_bias_acceleration(r_link, r_pose.position), ks.link_bias_angular_acceleration(r_link);

  tm.contact_jacobian = MatX::Zero(12, nv);
  if (contacts.left) tm.contact_jacobian.topRows<6>() = j_left;
  if (contacts.right) tm.contact_jacobian.bottomRows<6>() = j_right;

  tm.input_matrix = MatX::Zero(nv, n + 12);
  tm.input_matrix.block(6, 0, n, n).setIdentity();
  tm.input_matrix.rightCols(12) = tm.contact_jacobian.transpose();
  tm.minv_b = tm.mass_llt.solve(tm.input_matrix);
  tm.minv_h = tm.mass_llt.solve(tm.bias);

  const VecX v = nu.stacked();
  TaskMeasurements& m = tm.measured;
  m.com = compute_com(ks);
  m.com_velocity = j_com * v;
  m.root = root_pose;
  m.root_twist = {j_root.topRows<3>() * v, j_root.bottomRows<3>() * v};
  m.left_sole = l_pose;
  m.left_twist = {j_left.topRows<3>() * v, j_left.bottomRows<3>() * v};
  m.right_sole = r_pose;
  m.right_twist = {j_right.topRows<3>() * v, j_right.bottomRows<3>() * v};
  tm.joint_positions = q.joints;
  tm.joint_velocities = nu.joints;
  return tm;
}

/// nu_dot(u) = M^-1 (B u - h).
inline VecX generalized_acceleration_from_input(const TaskModel& tm, const VecX& u) {
  return tm.minv_b * u - tm.minv_h;
}

/// Upsilon_dot(u) = J_dot nu + J M^-1 (B u - h).
inline VecX task_acceleration_from_input(const TaskModel& tm, const ControlInput& u) {
  return tm.task_bias + tm.task_jacobian * generalized_acceleration_from_input(tm, u.stacked());
}

/// s_ddot(u) = zeta^T M^-1 (B u - h).
inline VecX joint_acceleration_from_input(const TaskModel& tm, const ControlInput& u) {
  return generalized_acceleration_from_input(tm, u.stacked()).tail(tm.n);
}

/// Affine maps u -> (Upsilon_dot, s_ddot) as (matrix, offset) pairs.
struct AffineMap {
  MatX matrix;
  VecX offset;
};

inline AffineMap task_acceleration_map(const TaskModel& tm) {
  return {tm.task_jacobian * tm.minv_b, tm.task_bias - tm.task_jacobian * tm.minv_h};
}

inline AffineMap joint_acceleration_map(const TaskModel& tm) {
  return {tm.minv_b.bottomRows(tm.n), -tm.minv_h.tail(tm.n)};
}

}  // namespace wbc
