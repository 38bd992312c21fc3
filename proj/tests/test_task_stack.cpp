#include <random>

#include "support.hpp"
#include "wbc/verify.hpp"

using namespace wbc;
using wbc::test::mini_biped;

namespace {

ControlInput random_input(std::mt19937_64& rng) {
  return {verify::random_vector(rng, 12, 10.0), verify::random_vector(rng, 6, 50.0),
          verify::random_vector(rng, 6, 50.0)};
}

ControlInput add(const ControlInput& a, const ControlInput& b) {
  return {a.torques + b.torques, a.left_wrench + b.left_wrench, a.right_wrench + b.right_wrench};
}

}  // namespace

TEST(TaskModel, InputMatrixWrenchColumns) {
  std::mt19937_64 rng(1);
  const auto [q, nu] = test::perturbed_state(rng);
  const TaskModel both = build_task_model(mini_biped(), q, nu, {true, true});
  for (int c = 12; c < 24; ++c) EXPECT_GT(both.input_matrix.col(c).norm(), 0.0) << c;
  const TaskModel left = build_task_model(mini_biped(), q, nu, {true, false});
  for (int c = 12; c < 18; ++c) EXPECT_GT(left.input_matrix.col(c).norm(), 0.0);
  EXPECT_TRUE(left.input_matrix.rightCols(6).isZero(0.0));
  EXPECT_TRUE(left.contact_jacobian.bottomRows(6).isZero(0.0));
}

TEST(TaskModel, TorquesNeverActOnTheBase) {
  std::mt19937_64 rng(2);
  const auto [q, nu] = test::perturbed_state(rng);
  const TaskModel tm = build_task_model(mini_biped(), q, nu, {true, true});
  EXPECT_TRUE(tm.input_matrix.topLeftCorner(6, 12).isZero(0.0));
  EXPECT_EQ(tm.input_matrix.block(6, 0, 12, 12), MatX::Identity(12, 12));
  EXPECT_EQ(tm.input_matrix.rightCols(12), tm.contact_jacobian.transpose());
}

TEST(TaskModel, RowOrder) {
  std::mt19937_64 rng(3);
  const auto [q, nu] = test::perturbed_state(rng);
  const RobotModel& model = mini_biped();
  const TaskModel tm = build_task_model(model, q, nu, {true, true});
  ASSERT_EQ(tm.task_jacobian.rows(), 18);
  EXPECT_EQ(tm.task_jacobian.middleRows(kComRows, 3), compute_com_jacobian(model, q));
  EXPECT_LT((tm.task_jacobian.middleRows(kRootRows, 3) - compute_frame_jacobian(model, q, "root").matrix.bottomRows(3)).norm(),
            1e-14);
  EXPECT_LT((tm.task_jacobian.middleRows(kLeftFootRows, 6) - compute_frame_jacobian(model, q, "l_sole").matrix).norm(), 1e-14);
  EXPECT_LT((tm.task_jacobian.middleRows(kRightFootRows, 6) - compute_frame_jacobian(model, q, "r_sole").matrix).norm(), 1e-14);
  EXPECT_LT((tm.task_bias.segment<3>(kComRows) - compute_com_jdot_nu(model, q, nu)).norm(), 1e-12);
  EXPECT_LT((tm.task_bias.segment<3>(kRootRows) - compute_jdot_nu(model, q, nu, "root").tail<3>()).norm(), 1e-12);
  EXPECT_LT((tm.task_bias.segment<6>(kLeftFootRows) - compute_jdot_nu(model, q, nu, "l_sole")).norm(), 1e-12);
  EXPECT_LT((tm.task_bias.segment<6>(kRightFootRows) - compute_jdot_nu(model, q, nu, "r_sole")).norm(), 1e-12);
}

TEST(TaskModel, TaskVelocityMatchesFrameTwists) {
  std::mt19937_64 rng(4);
  const RobotModel& model = mini_biped();
  for (int k = 0; k < 20; ++k) {
    const Configuration q = verify::random_configuration(model, rng);
    const VecX v = verify::random_vector(rng, model.nv());
    const TaskModel tm = build_task_model(model, q, Velocity::from_stacked(v), {true, true});
    const VecX ups = tm.task_jacobian * v;
    // Finite differences of forward kinematics along the flow of nu.
    const double h = 1e-6;
    const Vec3 com_rate = (compute_com(model, verify::oracle::flow(q, v, h)) -
                           compute_com(model, verify::oracle::flow(q, v, -h))) /
                          (2 * h);
    EXPECT_LT((ups.segment<3>(kComRows) - com_rate).norm(), 1e-6 * (1 + com_rate.norm()));
    const auto root = verify::oracle::point_motion(model, q, v, model.base(), Vec3::Zero());
    EXPECT_LT((ups.segment<3>(kRootRows) - root.omega).norm(), 1e-6 * (1 + root.omega.norm()));
    for (auto [name, row] : {std::pair{"l_sole", kLeftFootRows}, std::pair{"r_sole", kRightFootRows}}) {
      const Frame& f = model.frame(name);
      const auto pm = verify::oracle::point_motion(model, q, v, f.link, f.offset.position);
      EXPECT_LT((ups.segment<3>(row) - pm.velocity).norm(), 1e-6 * (1 + pm.velocity.norm()));
      EXPECT_LT((ups.segment<3>(row + 3) - pm.omega).norm(), 1e-6 * (1 + pm.omega.norm()));
    }
    // Measured twists are the same products.
    EXPECT_LT((tm.measured.left_twist.stacked() - ups.segment<6>(kLeftFootRows)).norm(), 1e-10);
    EXPECT_LT((tm.measured.com_velocity - ups.segment<3>(kComRows)).norm(), 1e-10);
  }
}

TEST(TaskModel, TaskAccelerationIsAffine) {
  std::mt19937_64 rng(5);
  const auto [q, nu] = test::perturbed_state(rng);
  const TaskModel tm = build_task_model(mini_biped(), q, nu, {true, true});
  const ControlInput u1 = random_input(rng), u2 = random_input(rng), zero = ControlInput::zero(12);
  const VecX lhs = task_acceleration_from_input(tm, add(u1, u2)) - task_acceleration_from_input(tm, u2);
  const VecX rhs = task_acceleration_from_input(tm, u1) - task_acceleration_from_input(tm, zero);
  EXPECT_LT((lhs - rhs).norm(), 1e-9 * (1 + rhs.norm()));
  const VecX jl = joint_acceleration_from_input(tm, add(u1, u2)) - joint_acceleration_from_input(tm, u2);
  const VecX jr = joint_acceleration_from_input(tm, u1) - joint_acceleration_from_input(tm, zero);
  EXPECT_LT((jl - jr).norm(), 1e-9 * (1 + jr.norm()));
  const AffineMap map = task_acceleration_map(tm);
  EXPECT_LT((map.matrix * u1.stacked() + map.offset - task_acceleration_from_input(tm, u1)).norm(), 1e-9);
}

TEST(TaskModel, JointAccelerationIsTailOfFullAcceleration) {
  std::mt19937_64 rng(6);
  const auto [q, nu] = test::perturbed_state(rng);
  const TaskModel tm = build_task_model(mini_biped(), q, nu, {true, false});
  const ControlInput u = random_input(rng);
  const VecX full = tm.mass_matrix.llt().solve(tm.input_matrix * u.stacked() - tm.bias);
  EXPECT_LT((joint_acceleration_from_input(tm, u) - full.tail(12)).norm(), 1e-9 * (1 + full.norm()));
}

TEST(TaskModel, ConsistentWithSimulatorDynamics) {
  std::mt19937_64 rng(7);
  const RobotModel& model = mini_biped();
  SimConfig sc;
  for (ContactState contacts : {ContactState{true, true}, ContactState{true, false}, ContactState{false, true}}) {
    for (int k = 0; k < 10; ++k) {
      const auto [q, nu] = test::perturbed_state(rng);
      const VecX tau = verify::random_vector(rng, 12, 5.0);
      const Pose la = frame_pose(model, q, "l_sole"), ra = frame_pose(model, q, "r_sole");
      const ForwardDynamicsResult fd = constrained_forward_dynamics(model, q, nu, tau, contacts, la, ra, sc);
      const TaskModel tm = build_task_model(model, q, nu, contacts);
      const ControlInput u{tau, fd.left_wrench, fd.right_wrench};
      const VecX measured = tm.task_jacobian * fd.nu_dot + tm.task_bias;
      const VecX predicted = task_acceleration_from_input(tm, u);
      EXPECT_LT((predicted - measured).norm(), 1e-8 * (1 + measured.norm()));
      EXPECT_LT((joint_acceleration_from_input(tm, u) - fd.nu_dot.tail(12)).norm(), 1e-8 * (1 + fd.nu_dot.norm()));
    }
  }
}

TEST(TaskModel, JointAccelerationMatchesSimulatorStep) {
  std::mt19937_64 rng(8);
  const RobotModel& model = mini_biped();
  const Configuration q = test::standing_configuration();
  Simulator sim(model, SimConfig{}, q);
  const VecX tau = verify::random_vector(rng, 12, 5.0);
  const VecX sd0 = sim.state().nu.joints;
  const TaskModel tm = build_task_model(model, q, sim.state().nu, {true, true});
  const SimState& next = sim.step(tau);
  const VecX fd = (next.nu.joints - sd0) / sim.config().dt;
  const ControlInput u{tau, next.left_wrench, next.right_wrench};
  EXPECT_LT((joint_acceleration_from_input(tm, u) - fd).norm(), 1e-6 * (1 + fd.norm()));
}

TEST(TaskModel, FootRowsVanishUnderContactConstraints) {
  // Without Baumgarte terms the simulator enforces J_C nu_dot = -J_C_dot nu exactly.
  std::mt19937_64 rng(9);
  const RobotModel& model = mini_biped();
  SimConfig sc;
  sc.alpha = sc.beta = 0.0;
  for (int k = 0; k < 10; ++k) {
    const auto [q, nu] = test::perturbed_state(rng);
    const VecX tau = verify::random_vector(rng, 12, 5.0);
    const ForwardDynamicsResult fd = constrained_forward_dynamics(
        model, q, nu, tau, {true, true}, frame_pose(model, q, "l_sole"), frame_pose(model, q, "r_sole"), sc);
    const TaskModel tm = build_task_model(model, q, nu, {true, true});
    const VecX acc = task_acceleration_from_input(tm, {tau, fd.left_wrench, fd.right_wrench});
    EXPECT_LT(acc.segment<6>(kLeftFootRows).norm(), 1e-8);
    EXPECT_LT(acc.segment<6>(kRightFootRows).norm(), 1e-8);
    const VecX jnu = tm.task_jacobian.middleRows(kLeftFootRows, 6) * fd.nu_dot;
    EXPECT_LT((jnu + tm.task_bias.segment<6>(kLeftFootRows)).norm(), 1e-8);
  }
}
