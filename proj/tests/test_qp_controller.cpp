#include <random>

#include "support.hpp"
#include "wbc/verify.hpp"

using namespace wbc;
using wbc::test::mini_biped;

namespace {

const FootGeometry& left_foot() { return *mini_biped().frame("l_sole").foot; }
const FootGeometry& right_foot() { return *mini_biped().frame("r_sole").foot; }

VecX with_left_wrench(const Vec6& w) {
  VecX u = VecX::Zero(24);
  u.segment<6>(12) = w;
  return u;
}

double weighted_cost(const TaskModel& tm, const TaskReferences& refs, const ControllerConfig& cfg, const VecX& u) {
  const DesiredAccelerations des = desired_accelerations(tm, refs);
  const ControlInput in = ControlInput::from_stacked(u);
  return 0.5 * cfg.w_posture * (joint_acceleration_from_input(tm, in) - des.posture).squaredNorm() +
         0.5 * cfg.w_task * (task_acceleration_from_input(tm, in) - des.task).squaredNorm() +
         0.5 * cfg.w_reg * in.torques.squaredNorm();
}

QpProblem without_rows(QpProblem p) {
  p.constraints.resize(0, p.num_variables());
  p.lower.resize(0);
  p.upper.resize(0);
  return p;
}

struct Scenario {
  Configuration q;
  Velocity nu;
  TaskReferences refs;
};

// A state near standing with references at the standing pose.
Scenario random_scenario(std::mt19937_64& rng, double spread = 0.3) {
  const RobotModel& model = mini_biped();
  const Configuration q0 = test::standing_configuration();
  Scenario s;
  s.refs = test::standing_references(model, q0, test::balance_gains());
  auto [q, nu] = test::perturbed_state(rng, 0.05 * spread, 0.2 * spread);
  // Keep the feet near their references.
  q.base.position = q0.base.position + (q.base.position - q0.base.position) * 0.1 * spread;
  s.q = q;
  s.nu = nu;
  return s;
}

double task_residual(const TaskModel& tm, const TaskReferences& refs, const VecX& u) {
  return (task_acceleration_from_input(tm, ControlInput::from_stacked(u)) - desired_accelerations(tm, refs).task).norm();
}

}  // namespace

TEST(FrictionCone, PureNormalForceIsInside) {
  ControllerConfig cfg;
  cfg.mu = 0.5;
  Vec6 w;
  w << 0, 0, 100, 0, 0, 0;
  const ConstraintRows c = friction_cone_constraints(12, {true, true}, left_foot(), right_foot(), cfg);
  EXPECT_EQ(c.rows(), 22);
  const VecX au = c.a * with_left_wrench(w);
  for (int i = 0; i < 11; ++i) {
    EXPECT_LE(au[i], c.upper[i]) << i;
    EXPECT_GE(au[i], c.lower[i]) << i;
  }
}

TEST(FrictionCone, TangentialForceViolatesPyramid) {
  ControllerConfig cfg;
  cfg.mu = 0.5;
  Vec6 w;
  w << 60, 0, 100, 0, 0, 0;
  const ConstraintRows c = friction_cone_constraints(12, {true, false}, left_foot(), right_foot(), cfg);
  const VecX au = c.a * with_left_wrench(w);
  EXPECT_NEAR(au[0] - c.upper[0], 10.0, 1e-12);  // 60 - 0.5 * 100
  EXPECT_GT(c.max_violation(with_left_wrench(w)), 0.0);
}

TEST(FrictionCone, AxisAlignedMatchesExactCone) {
  ControllerConfig cfg;
  cfg.mu = 0.7;
  cfg.fz_min = 0.0;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  const ConstraintRows c = friction_cone_constraints(12, {true, true}, left_foot(), right_foot(), cfg);
  for (int k = 0; k < 2000; ++k) {
    Vec6 w = Vec6::Zero();
    w[k % 2] = u(rng);
    w[2] = std::abs(u(rng));
    const bool exact = std::hypot(w[0], w[1]) <= cfg.mu * w[2];
    const VecX au = c.a * with_left_wrench(w);
    bool pyramid = true;
    for (int i = 0; i < 4; ++i) pyramid = pyramid && au[i] <= c.upper[i];
    EXPECT_EQ(pyramid, exact) << w.transpose();
  }
}

TEST(FrictionCone, CopAndTorsionRows) {
  ControllerConfig cfg;
  const FootGeometry& f = left_foot();
  const double lx = f.half_length - cfg.cop_margin;
  Vec6 w;
  w << 0, 0, 100, 0, 0.99 * lx * 100, 0;
  EXPECT_LE(friction_cone_constraints(12, {true, false}, f, right_foot(), cfg).max_violation(with_left_wrench(w)), 0.0);
  w[4] = 1.01 * lx * 100;
  EXPECT_GT(friction_cone_constraints(12, {true, false}, f, right_foot(), cfg).max_violation(with_left_wrench(w)), 0.0);
  w[4] = 0.0;
  w[5] = 1.01 * torsion_coefficient(f, cfg) * 100;
  EXPECT_GT(friction_cone_constraints(12, {true, false}, f, right_foot(), cfg).max_violation(with_left_wrench(w)), 0.0);
}

TEST(FrictionCone, InactiveFootRowsPinTheWrench) {
  ControllerConfig cfg;
  const ConstraintRows c = friction_cone_constraints(12, {false, true}, left_foot(), right_foot(), cfg);
  EXPECT_EQ(c.rows(), 17);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(c.lower[i], 0.0);
    EXPECT_EQ(c.upper[i], 0.0);
    EXPECT_EQ(c.a(i, 12 + i), 1.0);
  }
}

TEST(TorqueRate, DirectSubstitution) {
  ControllerConfig cfg;
  cfg.torque_rate_max = 100.0;
  cfg.dt = 0.001;
  ControlInput prev = ControlInput::zero(12);
  prev.torques.setConstant(5.0);
  const ConstraintRows c = torque_rate_rows(prev, cfg);
  ASSERT_EQ(c.rows(), 12);
  for (int i = 0; i < 12; ++i) {
    EXPECT_NEAR(c.lower[i], 4.9, 1e-12);
    EXPECT_NEAR(c.upper[i], 5.1, 1e-12);
    EXPECT_EQ(c.a(i, i), 1.0);
  }
  EXPECT_TRUE(c.a.rightCols(12).isZero(0.0));
  EXPECT_LE(c.max_violation(prev.stacked()), 0.0);
}

TEST(TorqueRate, FirstStepHasNoRateRows) {
  std::mt19937_64 rng(2);
  const Scenario s = random_scenario(rng);
  const TaskModel tm = build_task_model(mini_biped(), s.q, s.nu, {true, true});
  ControllerConfig cfg;
  EXPECT_EQ(assemble_weighted(mini_biped(), tm, s.refs, std::nullopt, cfg).num_rows(), 22);
  EXPECT_EQ(assemble_weighted(mini_biped(), tm, s.refs, ControlInput::zero(12), cfg).num_rows(), 34);
}

TEST(AssembleWeighted, MatchesFiniteDifferenceCost) {
  std::mt19937_64 rng(3);
  ControllerConfig cfg;
  cfg.w_task = 1.3;
  cfg.w_posture = 0.07;
  cfg.w_reg = 2e-3;
  for (int k = 0; k < 5; ++k) {
    const Scenario s = random_scenario(rng);
    const TaskModel tm = build_task_model(mini_biped(), s.q, s.nu, {true, true});
    const QpProblem p = assemble_weighted(mini_biped(), tm, s.refs, std::nullopt, cfg);
    const VecX u0 = verify::random_vector(rng, 24, 10.0);
    const double h = 1e-2;  // exact for a quadratic up to round-off
    VecX grad(24);
    MatX hess(24, 24);
    for (int i = 0; i < 24; ++i) {
      const VecX ei = VecX::Unit(24, i) * h;
      grad[i] = (weighted_cost(tm, s.refs, cfg, u0 + ei) - weighted_cost(tm, s.refs, cfg, u0 - ei)) / (2 * h);
      for (int j = 0; j < 24; ++j) {
        const VecX ej = VecX::Unit(24, j) * h;
        hess(i, j) = (weighted_cost(tm, s.refs, cfg, u0 + ei + ej) - weighted_cost(tm, s.refs, cfg, u0 + ei - ej) -
                      weighted_cost(tm, s.refs, cfg, u0 - ei + ej) + weighted_cost(tm, s.refs, cfg, u0 - ei - ej)) /
                     (4 * h * h);
      }
    }
    EXPECT_LT((p.hessian - hess).norm(), 1e-8 * (1 + p.hessian.norm()));
    const VecX g = p.hessian * u0 + p.gradient;
    EXPECT_LT((g - grad).norm(), 1e-8 * (1 + g.norm()));
  }
}

TEST(AssembleWeighted, RegularizerOnlyGivesZeroTorques) {
  std::mt19937_64 rng(4);
  const Scenario s = random_scenario(rng);
  const TaskModel tm = build_task_model(mini_biped(), s.q, s.nu, {true, true});
  ControllerConfig cfg;
  cfg.w_task = 0.0;
  cfg.w_posture = 0.0;
  cfg.w_reg = 1e-3;
  const QpSolution sol = QpSolver().solve(without_rows(assemble_weighted(mini_biped(), tm, s.refs, std::nullopt, cfg)));
  ASSERT_TRUE(sol.optimal());
  EXPECT_LT(sol.u.head(12).norm(), 1e-12);
}

TEST(AssembleWeighted, DoublingWeightsKeepsMinimizer) {
  std::mt19937_64 rng(5);
  const Scenario s = random_scenario(rng);
  const TaskModel tm = build_task_model(mini_biped(), s.q, s.nu, {true, true});
  ControllerConfig cfg;
  ControllerConfig twice = cfg;
  twice.w_task *= 2;
  twice.w_posture *= 2;
  twice.w_reg *= 2;
  const QpProblem a = assemble_weighted(mini_biped(), tm, s.refs, std::nullopt, cfg);
  const QpProblem b = assemble_weighted(mini_biped(), tm, s.refs, std::nullopt, twice);
  const VecX ua = -a.hessian.ldlt().solve(a.gradient), ub = -b.hessian.ldlt().solve(b.gradient);
  EXPECT_LT((ua - ub).norm(), 1e-8 * (1 + ua.norm()));
}

TEST(AssembleWeighted, HessianIsSymmetricPositiveDefinite) {
  std::mt19937_64 rng(6);
  const Scenario s = random_scenario(rng);
  for (ContactState c : {ContactState{true, true}, ContactState{true, false}, ContactState{false, true}}) {
    const TaskModel tm = build_task_model(mini_biped(), s.q, s.nu, c);
    for (PriorityMode mode : {PriorityMode::Weighted, PriorityMode::Strict}) {
      ControllerConfig cfg;
      cfg.mode = mode;
      const QpProblem p = mode == PriorityMode::Weighted ? assemble_weighted(mini_biped(), tm, s.refs, std::nullopt, cfg)
                                                         : assemble_strict(mini_biped(), tm, s.refs, std::nullopt, cfg);
      EXPECT_LT((p.hessian - p.hessian.transpose()).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatX>(p.hessian).eigenvalues().minCoeff(), 0.0);
      for (int i = 0; i < p.num_rows(); ++i) EXPECT_LE(p.lower[i], p.upper[i]);
    }
  }
}

TEST(AssembleWeighted, WrongPostureDimension) {
  std::mt19937_64 rng(7);
  Scenario s = random_scenario(rng);
  s.refs.posture = VecX::Zero(5);
  const TaskModel tm = build_task_model(mini_biped(), s.q, s.nu, {true, true});
  EXPECT_THROW(assemble_weighted(mini_biped(), tm, s.refs, std::nullopt, ControllerConfig{}), InfeasibleDimensions);
  EXPECT_THROW(assemble_strict(mini_biped(), tm, s.refs, std::nullopt, ControllerConfig{}), InfeasibleDimensions);
}

TEST(AssembleStrict, EqualityContractAndPairedComparison) {
  std::mt19937_64 rng(8);
  ControllerConfig strict;
  strict.mode = PriorityMode::Strict;
  const ControllerConfig weighted;
  int feasible = 0;
  for (int k = 0; k < 40 && feasible < 20; ++k) {
    const Scenario s = random_scenario(rng);
    const TaskModel tm = build_task_model(mini_biped(), s.q, s.nu, {true, true});
    const QpSolution a = QpSolver().solve(assemble_strict(mini_biped(), tm, s.refs, std::nullopt, strict));
    if (!a.optimal()) continue;
    ++feasible;
    const QpSolution b = QpSolver().solve(assemble_weighted(mini_biped(), tm, s.refs, std::nullopt, weighted));
    ASSERT_TRUE(b.optimal());
    const double ra = task_residual(tm, s.refs, a.u), rb = task_residual(tm, s.refs, b.u);
    EXPECT_LT(ra, 1e-7);
    EXPECT_LE(ra, rb);
  }
  EXPECT_EQ(feasible, 20);
}

TEST(AssembleStrict, ContradictoryTaskIsInfeasible) {
  // A downward CoM acceleration beyond gravity needs a negative total normal
  // force, which the contact rows forbid.
  const RobotModel& model = mini_biped();
  const Configuration q = test::standing_configuration();
  TaskReferences refs = test::standing_references(model, q, test::balance_gains());
  refs.com.acceleration.linear = Vec3(0, 0, -20.0);
  ControllerConfig cfg;
  cfg.mode = PriorityMode::Strict;
  const TaskModel tm = build_task_model(model, q, Velocity::zero(12), {true, true});
  EXPECT_EQ(QpSolver().solve(assemble_strict(model, tm, refs, std::nullopt, cfg)).status, QpStatus::Infeasible);

  WholeBodyController controller(model, cfg);
  ControlInput last = ControlInput::zero(12);
  last.torques.setConstant(1.5);
  controller.seed_previous(last);
  try {
    controller.step(q, Velocity::zero(12), {true, true}, refs);
    FAIL() << "expected SolverFailure";
  } catch (const SolverFailure& e) {
    EXPECT_EQ(e.status(), QpStatus::Infeasible);
    EXPECT_EQ(e.last_feasible().torques, last.torques);
  }
}

TEST(ControlStep, StandingEquilibriumStrict) {
  const RobotModel& model = mini_biped();
  const Configuration q = test::standing_configuration();
  const TaskReferences refs = test::standing_references(model, q, test::balance_gains());
  ControllerConfig cfg;
  cfg.mode = PriorityMode::Strict;
  const TaskModel tm = build_task_model(model, q, Velocity::zero(12), {true, true});
  EXPECT_LT(desired_accelerations(tm, refs).task.segment<3>(kComRows).norm(), 1e-12);
  const ControlOutput out = control_step(model, q, Velocity::zero(12), {true, true}, refs, cfg, std::nullopt);
  EXPECT_LT(task_acceleration_from_input(tm, out.input).norm(), 1e-4);
  const double fz = out.input.left_wrench[2] + out.input.right_wrench[2];
  EXPECT_NEAR(fz, model.total_mass() * 9.81, 1e-3);
  EXPECT_NEAR(out.input.left_wrench[2], out.input.right_wrench[2], 1e-3);
}

TEST(ControlStep, StandingEquilibriumWeighted) {
  // The torque regularizer pulls the weighted optimum off the exact
  // equilibrium by an amount proportional to w_reg.
  const RobotModel& model = mini_biped();
  const Configuration q = test::standing_configuration();
  const TaskReferences refs = test::standing_references(model, q, test::balance_gains());
  const TaskModel tm = build_task_model(model, q, Velocity::zero(12), {true, true});
  std::vector<double> residual;
  for (double w_reg : {1e-4, 1e-6, 1e-8}) {
    ControllerConfig cfg;
    cfg.w_reg = w_reg;
    const ControlOutput out = control_step(model, q, Velocity::zero(12), {true, true}, refs, cfg, std::nullopt);
    const VecX acc = task_acceleration_from_input(tm, out.input);
    const double fz = out.input.left_wrench[2] + out.input.right_wrench[2];
    // Newton's law on the CoM holds exactly for any input.
    EXPECT_NEAR(fz - model.total_mass() * 9.81, model.total_mass() * acc[kComRows + 2], 1e-8);
    residual.push_back(acc.norm());
    if (w_reg <= 1e-6) {
      EXPECT_LT(acc.norm(), 1e-4);
      EXPECT_NEAR(fz, model.total_mass() * 9.81, 1e-3);
    }
  }
  EXPECT_LT(residual[1], residual[0]);
  EXPECT_LT(residual[2], residual[1]);
}

TEST(ControlStep, SingleSupportZeroesTheInactiveWrench) {
  std::mt19937_64 rng(9);
  const Scenario s = random_scenario(rng);
  for (ContactState c : {ContactState{true, false}, ContactState{false, true}}) {
    const ControlOutput out = control_step(mini_biped(), s.q, s.nu, c, s.refs, ControllerConfig{}, std::nullopt);
    const Vec6& inactive = c.left ? out.input.right_wrench : out.input.left_wrench;
    EXPECT_LE(inactive.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE(out.diagnostics.max_inactive_wrench, 1e-9);
    EXPECT_LE(out.diagnostics.max_friction_residual, 1e-7);
  }
}

TEST(ControlStep, DiagnosticsAreConsistent) {
  std::mt19937_64 rng(10);
  const Scenario s = random_scenario(rng);
  ControllerConfig cfg;
  WholeBodyController controller(mini_biped(), cfg);
  const ControlOutput first = controller.step(s.q, s.nu, {true, true}, s.refs);
  ASSERT_TRUE(controller.previous_input().has_value());
  const ControlOutput second = controller.step(s.q, s.nu, {true, true}, s.refs);
  const double step = cfg.torque_rate_max * cfg.dt;
  EXPECT_LE((second.input.torques - first.input.torques).cwiseAbs().maxCoeff(), step + 1e-9);
  EXPECT_LE(second.diagnostics.max_rate_residual, 1e-9);
  EXPECT_LE(second.diagnostics.kkt.stationarity, 1e-8);
  EXPECT_GE(second.diagnostics.solve_time_us, 0.0);
  EXPECT_GE(second.diagnostics.step_time_us, second.diagnostics.solve_time_us);
  controller.reset();
  EXPECT_FALSE(controller.previous_input().has_value());
}

TEST(ControlStep, WeightedSolutionIsContinuousInReferences) {
  std::mt19937_64 rng(11);
  const Scenario s = random_scenario(rng);
  const ControllerConfig cfg;
  const ControlOutput a = control_step(mini_biped(), s.q, s.nu, {true, true}, s.refs, cfg, std::nullopt);
  for (int k = 0; k < 10; ++k) {
    const double eps = 1e-6;
    TaskReferences r = s.refs;
    r.com.pose.position += eps * verify::random_vector(rng, 3).normalized();
    r.left_foot.pose.position += eps * verify::random_vector(rng, 3).normalized();
    r.posture += eps * verify::random_vector(rng, 12).normalized();
    const ControlOutput b = control_step(mini_biped(), s.q, s.nu, {true, true}, r, cfg, std::nullopt);
    ASSERT_EQ(a.diagnostics.active_set, b.diagnostics.active_set);
    const double du = (b.input.stacked() - a.input.stacked()).norm();
    EXPECT_LT(du, 1e5 * eps);
    EXPECT_GT(du, 0.0);
  }
}

TEST(ControlStep, TaskPriorityRatio) {
  std::mt19937_64 rng(12);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const Scenario s = random_scenario(rng);
    const TaskModel tm = build_task_model(mini_biped(), s.q, s.nu, {true, true});
    double residual[2];
    for (int i = 0; i < 2; ++i) {
      ControllerConfig cfg;
      cfg.w_task = 1.0;
      cfg.w_posture = i == 0 ? 1.0 : 1e-3;
      const QpSolution sol = QpSolver().solve(assemble_weighted(mini_biped(), tm, s.refs, std::nullopt, cfg));
      ASSERT_TRUE(sol.optimal());
      residual[i] = task_residual(tm, s.refs, sol.u);
    }
    EXPECT_LT(residual[1], residual[0]);
    worst = std::max(worst, residual[1] / residual[0]);
  }
  std::printf("worst residual ratio at w_task/w_posture = 1e3: %.3g\n", worst);
  EXPECT_LE(worst, 1e-2);
}
