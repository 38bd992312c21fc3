#pragma once

#include <string>
#include <vector>

#include "wbc/model.hpp"

namespace wbc {

inline const Vec3 kDefaultGravity{0.0, 0.0, -9.81};

/// Forward kinematics, velocities and zero-acceleration bias terms for one
/// state (q, nu). All vectors are in inertial coordinates. Link "origin" is
/// the link frame origin, which coincides with the parent joint's pivot.
///
/// Velocity convention is mixed throughout: frame twists are the inertial
/// linear velocity of the frame origin stacked over the inertial angular
/// velocity.
class KinematicsState {
 public:
  KinematicsState(const RobotModel& model, const Configuration& q)
      : KinematicsState(model, q, Velocity::zero(model.num_joints())) {}

  KinematicsState(const RobotModel& model, const Configuration& q, const Velocity& nu) : model_(&model) {
    if (q.joints.size() != model.num_joints() || nu.joints.size() != model.num_joints())
      throw DimensionMismatch("state dimension does not match the model");
    const int nl = model.num_links();
    pose_.resize(nl);
    com_.resize(nl);
    omega_.resize(nl);
    vel_.resize(nl);
    alpha_.resize(nl);
    acc_.resize(nl);
    axis_.resize(model.num_joints());

    const int b = model.base();
    pose_[b] = q.base;
    omega_[b] = nu.base_angular;
    vel_[b] = nu.base_linear;
    alpha_[b].setZero();
    acc_[b].setZero();

    for (int j : model.joint_order()) {
      const Joint& jt = model.joints()[j];
      const int p = jt.parent;
      const int c = jt.child;
      const double angle = q.joints[j];
      const double rate = nu.joints[j];
      Pose child = pose_[p] * jt.origin;
      axis_[j] = child.rotation * jt.axis;
      child.rotation = child.rotation * exp_so3(jt.axis * angle);
      pose_[c] = child;

      const Vec3 r = child.position - pose_[p].position;
      const Vec3 spin = axis_[j] * rate;
      omega_[c] = omega_[p] + spin;
      vel_[c] = vel_[p] + omega_[p].cross(r);
      alpha_[c] = alpha_[p] + omega_[p].cross(spin);
      acc_[c] = acc_[p] + alpha_[p].cross(r) + omega_[p].cross(omega_[p].cross(r));
    }
    for (int i = 0; i < nl; ++i) com_[i] = pose_[i].transform(model.links()[i].com);
  }

  const RobotModel& model() const { return *model_; }
  const Pose& link_pose(int link) const { return pose_[link]; }
  const Vec3& link_com(int link) const { return com_[link]; }
  const Vec3& link_angular_velocity(int link) const { return omega_[link]; }
  const Vec3& joint_axis(int joint) const { return axis_[joint]; }
  const Vec3& joint_point(int joint) const { return pose_[model_->joints()[joint].child].position; }

  Pose frame_pose(int frame) const {
    const Frame& f = model_->frames()[frame];
    return pose_[f.link] * f.offset;
  }

  /// Velocity of a point rigidly attached to `link`.
  Vec3 point_velocity(int link, const Vec3& x) const { return vel_[link] + omega_[link].cross(x - pose_[link].position); }

  /// Acceleration of a point rigidly attached to `link` when nu_dot = 0.
  Vec3 point_bias_acceleration(int link, const Vec3& x) const {
    const Vec3 r = x - pose_[link].position;
    return acc_[link] + alpha_[link].cross(r) + omega_[link].cross(omega_[link].cross(r));
  }
  const Vec3& link_bias_angular_acceleration(int link) const { return alpha_[link]; }

  /// 6 x nv mixed Jacobian of a point attached to `link`, angular rows are
  /// the link's angular velocity.
  MatX point_jacobian(int link, const Vec3& x) const {
    const int n = model_->num_joints();
    MatX jac = MatX::Zero(6, n + 6);
    const Vec3& pb = pose_[model_->base()].position;
    jac.block<3, 3>(0, 0).setIdentity();
    jac.block<3, 3>(0, 3) = -skew(x - pb);
    jac.block<3, 3>(3, 3).setIdentity();
    for (int j : model_->support(link)) {
      jac.block<3, 1>(0, 6 + j) = axis_[j].cross(x - joint_point(j));
      jac.block<3, 1>(3, 6 + j) = axis_[j];
    }
    return jac;
  }

 private:
  const RobotModel* model_;
  std::vector<Pose> pose_;
  std::vector<Vec3> com_;
  std::vector<Vec3> omega_;
  std::vector<Vec3> vel_;
  std::vector<Vec3> alpha_;
  std::vector<Vec3> acc_;
  std::vector<Vec3> axis_;
};

struct FrameJacobian {
  std::string frame;
  MatX matrix;  // 6 x (n+6)
};

struct DynamicsQuantities {
  MatX mass_matrix;
  VecX bias;
  Vec3 gravity = kDefaultGravity;
};

namespace detail {

// Spatial inertia about the inertial origin for motion vectors [omega; v_O].
inline Mat6 spatial_inertia(double mass, const Mat3& inertia_com_world, const Vec3& com) {
  const Mat3 c = skew(com);
  Mat6 out;
  out.topLeftCorner<3, 3>() = inertia_com_world - mass * c * c;
  out.topRightCorner<3, 3>() = mass * c;
  out.bottomLeftCorner<3, 3>() = -mass * c;
  out.bottomRightCorner<3, 3>() = mass * Mat3::Identity();
  return out;
}

}  // namespace detail

/// Composite-rigid-body algorithm in inertial-origin spatial coordinates.
inline MatX compute_mass_matrix(const KinematicsState& ks) {
  const RobotModel& model = ks.model();
  const int n = model.num_joints();
  const int nl = model.num_links();
  std::vector<Mat6> composite(nl);
  for (int i = 0; i < nl; ++i) {
    const Link& l = model.links()[i];
    const Mat3& r = ks.link_pose(i).rotation;
    composite[i] = detail::spatial_inertia(l.mass, r * l.inertia * r.transpose(), ks.link_com(i));
  }
  const auto& order = model.joint_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Joint& jt = model.joints()[*it];
    composite[jt.parent] += composite[jt.child];
  }

  Eigen::Matrix<double, 6, Eigen::Dynamic> motion(6, n);
  for (int j = 0; j < n; ++j) {
    motion.block<3, 1>(0, j) = ks.joint_axis(j);
    motion.block<3, 1>(3, j) = ks.joint_point(j).cross(ks.joint_axis(j));
  }
  Mat6 base_motion = Mat6::Zero();
  base_motion.block<3, 3>(0, 3).setIdentity();
  base_motion.block<3, 3>(3, 0).setIdentity();
  base_motion.block<3, 3>(3, 3) = skew(ks.link_pose(model.base()).position);

  MatX m = MatX::Zero(n + 6, n + 6);
  m.topLeftCorner<6, 6>() = base_motion.transpose() * composite[model.base()] * base_motion;
  for (int j = 0; j < n; ++j) {
    const Vec6 force = composite[model.joints()[j].child] * motion.col(j);
    for (int k : model.support(model.joints()[j].child)) {
      const double v = motion.col(k).dot(force);
      m(6 + k, 6 + j) = v;
      m(6 + j, 6 + k) = v;
    }
    const Vec6 base_col = base_motion.transpose() * force;
    m.block<6, 1>(0, 6 + j) = base_col;
    m.block<1, 6>(6 + j, 0) = base_col.transpose();
  }
  return m;
}

/// Recursive Newton-Euler with nu_dot = 0: Coriolis, centrifugal and gravity
/// generalized forces.
inline VecX compute_bias(const KinematicsState& ks, const Vec3& gravity = kDefaultGravity) {
  const RobotModel& model = ks.model();
  const int n = model.num_joints();
  const int nl = model.num_links();
  std::vector<Vec3> force(nl), moment(nl);  // subtree wrench, moment about link origin
  for (int i = 0; i < nl; ++i) {
    const Link& l = model.links()[i];
    const Mat3& r = ks.link_pose(i).rotation;
    const Mat3 inertia = r * l.inertia * r.transpose();
    const Vec3& w = ks.link_angular_velocity(i);
    const Vec3& c = ks.link_com(i);
    force[i] = l.mass * (ks.point_bias_acceleration(i, c) - gravity);
    moment[i] = inertia * ks.link_bias_angular_acceleration(i) + w.cross(inertia * w) +
                (c - ks.link_pose(i).position).cross(force[i]);
  }
  const auto& order = model.joint_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Joint& jt = model.joints()[*it];
    const Vec3 arm = ks.link_pose(jt.child).position - ks.link_pose(jt.parent).position;
    force[jt.parent] += force[jt.child];
    moment[jt.parent] += moment[jt.child] + arm.cross(force[jt.child]);
  }
  VecX h(n + 6);
  h.segment<3>(0) = force[model.base()];
  h.segment<3>(3) = moment[model.base()];
  for (int j = 0; j < n; ++j) h[6 + j] = ks.joint_axis(j).dot(moment[model.joints()[j].child]);
  return h;
}

inline FrameJacobian compute_frame_jacobian(const KinematicsState& ks, const std::string& frame) {
  const int f = ks.model().frame_index(frame);
  return {frame, ks.point_jacobian(ks.model().frames()[f].link, ks.frame_pose(f).position)};
}

/// J_dot * nu of a frame: [linear acceleration of origin; angular acceleration].
inline Vec6 compute_jdot_nu(const KinematicsState& ks, const std::string& frame) {
  const int f = ks.model().frame_index(frame);
  const int link = ks.model().frames()[f].link;
  Vec6 out;
  out << ks.point_bias_acceleration(link, ks.frame_pose(f).position), ks.link_bias_angular_acceleration(link);
  return out;
}

inline Vec3 compute_com(const KinematicsState& ks) {
  Vec3 acc = Vec3::Zero();
  double mass = 0.0;
  for (int i = 0; i < ks.model().num_links(); ++i) {
    acc += ks.model().links()[i].mass * ks.link_com(i);
    mass += ks.model().links()[i].mass;
  }
  return acc / mass;
}

inline MatX compute_com_jacobian(const KinematicsState& ks) {
  const RobotModel& model = ks.model();
  MatX jac = MatX::Zero(3, model.nv());
  for (int i = 0; i < model.num_links(); ++i)
    jac += model.links()[i].mass * ks.point_jacobian(i, ks.link_com(i)).topRows<3>();
  return jac / model.total_mass();
}

inline Vec3 compute_com_jdot_nu(const KinematicsState& ks) {
  Vec3 acc = Vec3::Zero();
  for (int i = 0; i < ks.model().num_links(); ++i)
    acc += ks.model().links()[i].mass * ks.point_bias_acceleration(i, ks.link_com(i));
  return acc / ks.model().total_mass();
}

// Convenience overloads taking the raw state.

inline Pose frame_pose(const RobotModel& model, const Configuration& q, const std::string& frame) {
  return KinematicsState(model, q).frame_pose(model.frame_index(frame));
}

inline MatX compute_mass_matrix(const RobotModel& model, const Configuration& q) {
  return compute_mass_matrix(KinematicsState(model, q));
}

inline VecX compute_bias(const RobotModel& model, const Configuration& q, const Velocity& nu,
                         const Vec3& gravity = kDefaultGravity) {
  return compute_bias(KinematicsState(model, q, nu), gravity);
}

inline FrameJacobian compute_frame_jacobian(const RobotModel& model, const Configuration& q, const std::string& frame) {
  return compute_frame_jacobian(KinematicsState(model, q), frame);
}

inline Vec6 compute_jdot_nu(const RobotModel& model, const Configuration& q, const Velocity& nu,
                            const std::string& frame) {
  return compute_jdot_nu(KinematicsState(model, q, nu), frame);
}

inline Vec3 compute_com(const RobotModel& model, const Configuration& q) { return compute_com(KinematicsState(model, q)); }

inline MatX compute_com_jacobian(const RobotModel& model, const Configuration& q) {
  return compute_com_jacobian(KinematicsState(model, q));
}

inline Vec3 compute_com_jdot_nu(const RobotModel& model, const Configuration& q, const Velocity& nu) {
  return compute_com_jdot_nu(KinematicsState(model, q, nu));
}

inline DynamicsQuantities compute_dynamics(const RobotModel& model, const Configuration& q, const Velocity& nu,
                                           const Vec3& gravity = kDefaultGravity) {
  const KinematicsState ks(model, q, nu);
  return {compute_mass_matrix(ks), compute_bias(ks, gravity), gravity};
}

}  // namespace wbc
