#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "wbc/errors.hpp"

namespace wbc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Rotation matrix in SO(3). Construction from an arbitrary matrix is explicit
/// and unchecked; use is_valid_rotation() when the source is untrusted.
using Rotation = Mat3;

struct Pose {
  Rotation rotation = Rotation::Identity();
  Vec3 position = Vec3::Zero();

  static Pose identity() { return {}; }

  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, position + rotation * other.position};
  }
  Vec3 transform(const Vec3& p) const { return position + rotation * p; }
  Pose inverse() const {
    Pose out;
    out.rotation = rotation.transpose();
    out.position = -(out.rotation * position);
    return out;
  }
};

struct Twist {
  Vec3 linear = Vec3::Zero();
  Vec3 angular = Vec3::Zero();

  Vec6 stacked() const {
    Vec6 v;
    v << linear, angular;
    return v;
  }
};

/// Cross-product matrix: skew(v) * w == v.cross(w).
inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

inline Vec3 vee(const Mat3& s) {
  if ((s + s.transpose()).norm() >= 1e-8) {
    throw NotSkewSymmetric("vee: matrix is not skew-symmetric");
  }
  return {s(2, 1), s(0, 2), s(1, 0)};
}

/// skew(A) = (A - A^T)/2 followed by vee, without the symmetry check.
inline Vec3 skew_vee(const Mat3& a) {
  return 0.5 * Vec3(a(2, 1) - a(1, 2), a(0, 2) - a(2, 0), a(1, 0) - a(0, 1));
}

inline bool is_valid_rotation(const Mat3& r, double tol = 1e-9) {
  return (r.transpose() * r - Mat3::Identity()).norm() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

/// Nearest rotation in the Frobenius sense (polar factor via SVD).
inline Rotation reorthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
  return u * v.transpose();
}

/// exp(skew(axis_angle)) by Rodrigues' formula.
inline Rotation exp_so3(const Vec3& axis_angle) {
  const double theta = axis_angle.norm();
  const Mat3 k = skew(axis_angle);
  if (theta < 1e-8) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * k + b * k * k;
}

/// Rotation reached after holding the angular velocity omega for dt seconds.
inline Rotation rotation_exp(const Vec3& omega, double dt) {
  Rotation r = exp_so3(omega * dt);
  if ((r.transpose() * r - Mat3::Identity()).norm() > 1e-9) r = reorthonormalize(r);
  return r;
}

/// |R R_d^T - I| in the Frobenius norm. Ranges over [0, 2 sqrt(2)].
inline double orientation_error_norm(const Rotation& r, const Rotation& r_des) {
  return (r * r_des.transpose() - Mat3::Identity()).norm();
}

inline Rotation rot_x(double a) { return exp_so3(Vec3::UnitX() * a); }
inline Rotation rot_y(double a) { return exp_so3(Vec3::UnitY() * a); }
inline Rotation rot_z(double a) { return exp_so3(Vec3::UnitZ() * a); }

}  // namespace wbc
