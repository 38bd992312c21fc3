#include <random>

#include <gtest/gtest.h>

#include "wbc/verify.hpp"

using namespace wbc;

namespace {

PoseReference random_reference(std::mt19937_64& rng) {
  PoseReference r;
  r.pose = {verify::random_rotation(rng), verify::random_vector(rng, 3)};
  r.velocity = {verify::random_vector(rng, 3), verify::random_vector(rng, 3)};
  r.acceleration = {verify::random_vector(rng, 3), verify::random_vector(rng, 3)};
  return r;
}

GainsLinear linear_gains(double kp, double kd) { return {Vec3::Constant(kp), Vec3::Constant(kd)}; }

}  // namespace

TEST(LinearPd, ZeroErrorGivesFeedforward) {
  std::mt19937_64 rng(1);
  const PoseReference ref = random_reference(rng);
  const Vec3 out = linear_pd(ref.pose.position, ref.velocity.linear, ref, linear_gains(10, 3));
  EXPECT_LT((out - ref.acceleration.linear).norm(), 1e-14);
}

TEST(LinearPd, UnitStiffness) {
  PoseReference ref;
  EXPECT_EQ(linear_pd(Vec3(1, 0, 0), Vec3::Zero(), ref, linear_gains(1, 0)), Vec3(-1, 0, 0));
}

TEST(LinearPd, AffineInError) {
  std::mt19937_64 rng(2);
  PoseReference ref;
  ref.pose.position = verify::random_vector(rng, 3);
  const Vec3 e = verify::random_vector(rng, 3);
  const GainsLinear g{Vec3(3, 5, 7), Vec3(1, 2, 3)};
  const Vec3 a = linear_pd(ref.pose.position + e, Vec3::Zero(), ref, g);
  const Vec3 b = linear_pd(ref.pose.position + 2 * e, Vec3::Zero(), ref, g);
  EXPECT_LT((b - 2 * a).norm(), 1e-12);
}

TEST(LinearPd, CriticallyDampedConvergence) {
  // x_ddot = -4 x - 4 x_dot from unit error, integrated with RK4.
  PoseReference ref;
  Vec3 p(1, 0, 0), v = Vec3::Zero();
  const double dt = 1e-3;
  const GainsLinear g = linear_gains(4, 4);
  for (int k = 0; k < 5000; ++k) {
    auto acc = [&](const Vec3& pp, const Vec3& vv) { return linear_pd(pp, vv, ref, g); };
    const Vec3 k1v = acc(p, v), k1p = v;
    const Vec3 k2v = acc(p + 0.5 * dt * k1p, v + 0.5 * dt * k1v), k2p = v + 0.5 * dt * k1v;
    const Vec3 k3v = acc(p + 0.5 * dt * k2p, v + 0.5 * dt * k2v), k3p = v + 0.5 * dt * k2v;
    const Vec3 k4v = acc(p + dt * k3p, v + dt * k3v), k4p = v + dt * k3v;
    p += dt / 6 * (k1p + 2 * k2p + 2 * k3p + k4p);
    v += dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
  }
  EXPECT_LT(p.norm(), 1e-3);
  // Closed form (1 + 2t) e^{-2t} at t = 5.
  EXPECT_NEAR(p.x(), 11.0 * std::exp(-10.0), 1e-9);
}

TEST(RotationalPd, EquilibriumIsZero) {
  std::mt19937_64 rng(3);
  PoseReference ref = random_reference(rng);
  ref.acceleration.angular.setZero();
  EXPECT_LT(rotational_pd(ref.pose.rotation, ref.velocity.angular, ref, {5, 2}).norm(), 1e-13);
}

TEST(RotationalPd, SmallYawError) {
  PoseReference ref;
  const GainsAngular g{3.0, 2.0};
  for (double theta : {1e-3, 0.05, 0.3}) {
    const Vec3 out = rotational_pd(rot_z(theta), Vec3::Zero(), ref, g);
    // skew(R)^vee = (0, 0, sin theta); R maps the body result back to world, leaving z unchanged.
    EXPECT_LT((out - Vec3(0, 0, -g.kp * g.kd * std::sin(theta))).norm(), 1e-12);
  }
}

TEST(RotationalPd, LeftRotationEquivariance) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 100; ++k) {
    const PoseReference ref = random_reference(rng);
    const Rotation r = verify::random_rotation(rng);
    const Vec3 w = verify::random_vector(rng, 3);
    const Rotation q = verify::random_rotation(rng);
    PoseReference qref = ref;
    qref.pose.rotation = q * ref.pose.rotation;
    qref.velocity.angular = q * ref.velocity.angular;
    qref.acceleration.angular = q * ref.acceleration.angular;
    const GainsAngular g{2.5, 1.5};
    const Vec3 a = rotational_pd(r, w, ref, g);
    const Vec3 b = rotational_pd(q * r, q * w, qref, g);
    EXPECT_LT((b - q * a).norm(), 1e-10);
  }
}

TEST(RotationalPd, MonteCarloConvergence) {
  const verify::RotationMonteCarloReport r = verify::rotation_monte_carlo(100, 5);
  EXPECT_EQ(r.converged, 100);
  EXPECT_EQ(r.diverged, 0);
  EXPECT_LT(r.worst_final_error, 1e-3);
  EXPECT_LT(r.worst_initial_error, 2.8);
}

TEST(Se3Pd, AtReferenceGivesFeedforward) {
  std::mt19937_64 rng(6);
  const PoseReference ref = random_reference(rng);
  const Vec6 out = se3_pd(ref.pose, ref.velocity, ref, linear_gains(5, 2), {4, 3});
  EXPECT_LT((out - ref.acceleration.stacked()).norm(), 1e-12);
}

TEST(Se3Pd, ConcatenatesAndDecouples) {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 50; ++k) {
    const PoseReference ref = random_reference(rng);
    const Pose pose{verify::random_rotation(rng), verify::random_vector(rng, 3)};
    const Twist tw{verify::random_vector(rng, 3), verify::random_vector(rng, 3)};
    const GainsLinear gl = linear_gains(6, 3);
    const GainsAngular ga{4, 2};
    const Vec6 out = se3_pd(pose, tw, ref, gl, ga);
    EXPECT_EQ(out.head<3>(), linear_pd(pose.position, tw.linear, ref, gl));
    EXPECT_EQ(out.tail<3>(), rotational_pd(pose.rotation, tw.angular, ref, ga));
    // Changing the orientation leaves the linear part untouched and vice versa.
    Pose rotated = pose;
    rotated.rotation = verify::random_rotation(rng);
    EXPECT_EQ(se3_pd(rotated, tw, ref, gl, ga).head<3>(), out.head<3>());
    Pose moved = pose;
    moved.position += Vec3(1, 1, 1);
    EXPECT_EQ(se3_pd(moved, tw, ref, gl, ga).tail<3>(), out.tail<3>());
  }
}

TEST(PosturalPd, ZeroErrorAndUnitGain) {
  const VecX s = VecX::LinSpaced(5, -1, 1), z = VecX::Zero(5);
  EXPECT_TRUE(postural_pd(s, z, s, z, VecX::Ones(5), VecX::Ones(5)).isZero(0.0));
  const VecX e = VecX::LinSpaced(5, 0.1, 0.5);
  EXPECT_LT((postural_pd(s + e, z, s, z, VecX::Ones(5), z) + e).norm(), 1e-15);
}

TEST(PosturalPd, DimensionMismatch) {
  EXPECT_THROW(postural_pd(VecX::Zero(3), VecX::Zero(3), VecX::Zero(4), VecX::Zero(3), VecX::Ones(3), VecX::Ones(3)),
               DimensionMismatch);
}

TEST(PosturalPd, ClosedLoopConverges) {
  std::mt19937_64 rng(8);
  const int n = 12;
  VecX s = verify::random_vector(rng, n), sd = VecX::Zero(n);
  const VecX target = verify::random_vector(rng, n);
  const VecX kp = (verify::random_vector(rng, n).cwiseAbs().array() + 1.0).matrix();
  const VecX kd = (2.0 * kp.cwiseSqrt().array()).matrix();
  const double dt = 1e-3;
  for (int k = 0; k < 20000; ++k) {
    const VecX acc = postural_pd(s, sd, target, VecX::Zero(n), kp, kd);
    sd += dt * acc;
    s += dt * sd;
  }
  EXPECT_LT((s - target).cwiseAbs().maxCoeff(), 1e-4);
}
