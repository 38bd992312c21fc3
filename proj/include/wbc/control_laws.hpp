#pragma once

#include "wbc/lie.hpp"

namespace wbc {

struct GainsLinear {
  Vec3 kp = Vec3::Zero();  // diagonal, 1/s^2
  Vec3 kd = Vec3::Zero();  // diagonal, 1/s
};

struct GainsAngular {
  double kp = 0.0;
  double kd = 0.0;
};

struct PoseReference {
  Pose pose;
  Twist velocity;
  Twist acceleration;
};

inline Vec3 linear_pd(const Vec3& p, const Vec3& p_dot, const PoseReference& ref, const GainsLinear& g) {
  return ref.acceleration.linear - g.kp.cwiseProduct(p - ref.pose.position) -
         g.kd.cwiseProduct(p_dot - ref.velocity.linear);
}

/// Attitude PD on SO(3), quasi-globally stabilizing (R, omega) -> (R_d, omega_d).
/// Angular velocities and the result are in inertial coordinates; the law is
/// evaluated on body-frame velocities omega_b = R^T omega, omega_db = R_d^T omega_d.
/// The "hat" in the cross term is taken as skew().
inline Vec3 rotational_pd(const Rotation& r, const Vec3& omega, const PoseReference& ref, const GainsAngular& g) {
  const Rotation& rd = ref.pose.rotation;
  const Vec3 omega_db = rd.transpose() * ref.velocity.angular;
  const Vec3 omega_b = r.transpose() * omega;
  const Mat3 err = rd.transpose() * r;
  const Vec3 body_acc = -g.kp * g.kd * skew_vee(err) - g.kd * (omega_b - omega_db) -
                        g.kp * skew_vee(err * skew(omega_b) - skew(omega_db) * err);
  return r * body_acc + ref.acceleration.angular;
}

inline Vec6 se3_pd(const Pose& pose, const Twist& twist, const PoseReference& ref, const GainsLinear& gl,
                   const GainsAngular& ga) {
  Vec6 out;
  out << linear_pd(pose.position, twist.linear, ref, gl), rotational_pd(pose.rotation, twist.angular, ref, ga);
  return out;
}

/// Joint-space PD: s_ddot* = -Kp (s - s_d) - Kd (s_dot - s_dot_d), diagonal gains.
inline VecX postural_pd(const VecX& s, const VecX& s_dot, const VecX& s_des, const VecX& s_dot_des, const VecX& kp,
                        const VecX& kd) {
  const auto n = s.size();
  if (s_dot.size() != n || s_des.size() != n || s_dot_des.size() != n || kp.size() != n || kd.size() != n)
    throw DimensionMismatch("postural_pd: inconsistent dimensions");
  return -kp.cwiseProduct(s - s_des) - kd.cwiseProduct(s_dot - s_dot_des);
}

}  // namespace wbc
