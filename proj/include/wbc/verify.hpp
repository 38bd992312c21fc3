#pragma once

#include <random>
#include <string>
#include <vector>

#include "wbc/control_laws.hpp"
#include "wbc/dynamics.hpp"
#include "wbc/qp_solver.hpp"

// Independent numerical oracles: finite differences over forward kinematics,
// Kane's equations, a closed-form double pendulum, a dual proximal-gradient QP
// solver and closed-loop SO(3) integration.
namespace wbc::verify {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

inline Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond qt(n(rng), n(rng), n(rng), n(rng));
  return qt.normalized().toRotationMatrix();
}

inline VecX random_vector(std::mt19937_64& rng, int size, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  VecX v(size);
  for (int i = 0; i < size; ++i) v[i] = n(rng);
  return v;
}

inline Configuration random_configuration(const RobotModel& model, std::mt19937_64& rng) {
  Configuration q = Configuration::neutral(model.num_joints());
  q.base.rotation = random_rotation(rng);
  q.base.position = random_vector(rng, 3);
  for (int j = 0; j < model.num_joints(); ++j) {
    const Joint& jt = model.joints()[j];
    std::uniform_real_distribution<double> u(std::max(jt.lower, -M_PI), std::min(jt.upper, M_PI));
    q.joints[j] = u(rng);
  }
  return q;
}

namespace oracle {

inline Vec3 vee_of_skew_part(const Mat3& x) {
  return {0.5 * (x(2, 1) - x(1, 2)), 0.5 * (x(0, 2) - x(2, 0)), 0.5 * (x(1, 0) - x(0, 1))};
}

// q advanced along the constant-velocity flow of nu for time t.
inline Configuration flow(const Configuration& q, const VecX& nu, double t) {
  Configuration out = q;
  out.base.position += nu.head<3>() * t;
  const Vec3 w = nu.segment<3>(3) * t;
  if (w.norm() > 0.0) out.base.rotation = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix() * q.base.rotation;
  out.joints += nu.tail(nu.size() - 6) * t;
  return out;
}

/// Twist of a point on a link (linear part) and the link's angular velocity
/// along direction nu, by central differences of forward kinematics.
struct PointMotion {
  Vec3 velocity;
  Vec3 omega;
  Vec3 acceleration;  // second derivative along the flow, nu_dot = 0
  Vec3 alpha;
};

// `local` is the point in link coordinates.
inline PointMotion point_motion(const RobotModel& model, const Configuration& q, const VecX& nu, int link,
                                const Vec3& local, double h1 = 1e-6, double h2 = 1e-4) {
  auto pose_at = [&](double t) { return KinematicsState(model, flow(q, nu, t)).link_pose(link); };
  const Pose p0 = pose_at(0.0);
  const Pose a = pose_at(h1), b = pose_at(-h1);
  PointMotion m;
  m.velocity = (a.transform(local) - b.transform(local)) / (2.0 * h1);
  m.omega = vee_of_skew_part((a.rotation - b.rotation) / (2.0 * h1) * p0.rotation.transpose());
  const Pose c = pose_at(h2), d = pose_at(-h2);
  m.acceleration = (c.transform(local) - 2.0 * p0.transform(local) + d.transform(local)) / (h2 * h2);
  // R_ddot = (S(alpha) + S(omega)^2) R
  const Mat3 rdd = (c.rotation - 2.0 * p0.rotation + d.rotation) / (h2 * h2);
  const Mat3 w = skew(m.omega);
  m.alpha = vee_of_skew_part(rdd * p0.rotation.transpose() - w * w);
  return m;
}

/// 6 x nv Jacobian of a point on a link by central differences, columns along unit velocities.
inline MatX point_jacobian_fd(const RobotModel& model, const Configuration& q, int link, const Vec3& local,
                              double h = 1e-6) {
  MatX j(6, model.nv());
  for (int k = 0; k < model.nv(); ++k) {
    const VecX e = VecX::Unit(model.nv(), k);
    const Pose a = KinematicsState(model, flow(q, e, h)).link_pose(link);
    const Pose b = KinematicsState(model, flow(q, e, -h)).link_pose(link);
    const Pose p0 = KinematicsState(model, q).link_pose(link);
    j.col(k).head<3>() = (a.transform(local) - b.transform(local)) / (2.0 * h);
    j.col(k).tail<3>() = vee_of_skew_part((a.rotation - b.rotation) / (2.0 * h) * p0.rotation.transpose());
  }
  return j;
}

/// M = sum_i m_i Jv_i^T Jv_i + Jw_i^T I_i Jw_i, the kinetic-energy form.
inline MatX mass_matrix(const RobotModel& model, const Configuration& q) {
  MatX m = MatX::Zero(model.nv(), model.nv());
  const KinematicsState ks(model, q);
  for (int i = 0; i < model.num_links(); ++i) {
    const Link& l = model.links()[i];
    const MatX j = point_jacobian_fd(model, q, i, l.com);
    const Mat3 r = ks.link_pose(i).rotation;
    const Mat3 iw = r * l.inertia * r.transpose();
    m += l.mass * j.topRows<3>().transpose() * j.topRows<3>() + j.bottomRows<3>().transpose() * iw * j.bottomRows<3>();
  }
  return m;
}

/// Kane's equations at nu_dot = 0: h = sum_i Jv_i^T m_i (a_i - g) + Jw_i^T (I_i alpha_i + w_i x I_i w_i).
inline VecX bias(const RobotModel& model, const Configuration& q, const VecX& nu, const Vec3& gravity) {
  VecX h = VecX::Zero(model.nv());
  const KinematicsState ks(model, q);
  for (int i = 0; i < model.num_links(); ++i) {
    const Link& l = model.links()[i];
    const MatX j = point_jacobian_fd(model, q, i, l.com);
    const PointMotion pm = point_motion(model, q, nu, i, l.com);
    const Mat3 r = ks.link_pose(i).rotation;
    const Mat3 iw = r * l.inertia * r.transpose();
    h += j.topRows<3>().transpose() * (l.mass * (pm.acceleration - gravity));
    h += j.bottomRows<3>().transpose() * (iw * pm.alpha + pm.omega.cross(iw * pm.omega));
  }
  return h;
}

}  // namespace oracle

inline double relative_error(const MatX& a, const MatX& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

struct DynamicsReport {
  int samples = 0;
  double mass_matrix = 0.0;  // max relative errors
  double bias = 0.0;
  double frame_jacobian = 0.0;
  double com_jacobian = 0.0;
  double jdot_nu = 0.0;
  double com_jdot_nu = 0.0;
  double symmetry = 0.0;  // max |M - M^T|
};

/// Compares the analytic quantities with the oracles at random states.
inline DynamicsReport dynamics_oracles(const RobotModel& model, int samples, std::uint64_t seed,
                                       const Vec3& gravity = kDefaultGravity) {
  std::mt19937_64 rng(seed);
  DynamicsReport r;
  r.samples = samples;
  const double h = 1e-6;
  for (int s = 0; s < samples; ++s) {
    const Configuration q = random_configuration(model, rng);
    const VecX nu = random_vector(rng, model.nv());
    const KinematicsState ks(model, q, Velocity::from_stacked(nu));

    const MatX m = compute_mass_matrix(ks);
    r.symmetry = std::max(r.symmetry, (m - m.transpose()).cwiseAbs().maxCoeff());
    r.mass_matrix = std::max(r.mass_matrix, relative_error(m, oracle::mass_matrix(model, q)));
    r.bias = std::max(r.bias, relative_error(compute_bias(ks, gravity), oracle::bias(model, q, nu, gravity)));

    for (const Frame& f : model.frames()) {
      const std::string& fi = f.name;
      const MatX j = compute_frame_jacobian(ks, fi).matrix;
      r.frame_jacobian =
          std::max(r.frame_jacobian, relative_error(j, oracle::point_jacobian_fd(model, q, f.link, f.offset.position)));
      // J_dot nu: derivative of J along the flow, applied to nu.
      const KinematicsState ka(model, oracle::flow(q, nu, h)), kb(model, oracle::flow(q, nu, -h));
      const VecX fd = (compute_frame_jacobian(ka, fi).matrix - compute_frame_jacobian(kb, fi).matrix) / (2.0 * h) * nu;
      r.jdot_nu = std::max(r.jdot_nu, relative_error(compute_jdot_nu(ks, fi), fd));
    }

    MatX jg_fd(3, model.nv());
    for (int k = 0; k < model.nv(); ++k) {
      const VecX e = VecX::Unit(model.nv(), k);
      jg_fd.col(k) = (compute_com(KinematicsState(model, oracle::flow(q, e, h))) -
                      compute_com(KinematicsState(model, oracle::flow(q, e, -h)))) /
                     (2.0 * h);
    }
    r.com_jacobian = std::max(r.com_jacobian, relative_error(compute_com_jacobian(ks), jg_fd));
    const KinematicsState ka(model, oracle::flow(q, nu, h)), kb(model, oracle::flow(q, nu, -h));
    const VecX com_fd = (compute_com_jacobian(ka) - compute_com_jacobian(kb)) / (2.0 * h) * nu;
    r.com_jdot_nu = std::max(r.com_jdot_nu, relative_error(compute_com_jdot_nu(ks), com_fd));
  }
  return r;
}

/// Planar two-link pendulum about y on a floating base, with sole frames on the
/// last link so it satisfies the model invariants.
struct DoublePendulum {
  double m1 = 1.3, m2 = 0.8, l1 = 0.45, c1 = 0.2, c2 = 0.3, i1 = 0.02, i2 = 0.011;

  RobotModel model() const {
    auto inertia = [](double iyy) { return Vec3(0.5 * iyy + 1e-3, iyy, 0.5 * iyy + 1e-3).asDiagonal().toDenseMatrix(); };
    std::vector<Link> links = {{"base", 2.0, Mat3::Identity() * 0.05, Vec3::Zero()},
                               {"upper", m1, inertia(i1), Vec3(0, 0, -c1)},
                               {"lower", m2, inertia(i2), Vec3(0, 0, -c2)}};
    Joint j1{"shoulder", 0, 1, Vec3::UnitY(), Pose::identity(), -M_PI, M_PI, 0.0};
    Joint j2{"elbow", 1, 2, Vec3::UnitY(), Pose{Mat3::Identity(), Vec3(0, 0, -l1)}, -M_PI, M_PI, 0.0};
    const FootGeometry foot{0.05, 0.03};
    std::vector<Frame> frames = {{"root", 0, Pose::identity(), std::nullopt},
                                 {"l_sole", 2, Pose{Mat3::Identity(), Vec3(0, 0.02, -0.4)}, foot},
                                 {"r_sole", 2, Pose{Mat3::Identity(), Vec3(0, -0.02, -0.4)}, foot}};
    return RobotModel(links, {j1, j2}, frames, 0);
  }

  /// Textbook fixed-base mass matrix.
  Eigen::Matrix2d mass_matrix(double q2) const {
    const double c = std::cos(q2);
    Eigen::Matrix2d m;
    m(0, 0) = i1 + i2 + m1 * c1 * c1 + m2 * (l1 * l1 + c2 * c2 + 2.0 * l1 * c2 * c);
    m(0, 1) = m(1, 0) = i2 + m2 * (c2 * c2 + l1 * c2 * c);
    m(1, 1) = i2 + m2 * c2 * c2;
    return m;
  }
};

/// Max relative error of the joint block of M against the closed form.
inline double double_pendulum_error(int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const DoublePendulum dp;
  const RobotModel model = dp.model();
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Configuration q = random_configuration(model, rng);
    const MatX m = compute_mass_matrix(model, q);
    const Eigen::Matrix2d ref = dp.mass_matrix(q.joints[1]);
    worst = std::max(worst, (m.bottomRightCorner<2, 2>() - ref).norm() / ref.norm());
  }
  return worst;
}

/// Dual proximal-gradient (FISTA with adaptive restart) on
/// min 1/2 (g + A^T y)^T H^-1 (g + A^T y) + sum_i max(y_i l_i, y_i u_i).
/// Returns the primal point u = -H^-1 (g + A^T y).
struct DualFistaResult {
  VecX u;
  double objective = 0.0;
  double primal_violation = 0.0;
  int iterations = 0;
};

inline DualFistaResult dual_fista(const QpProblem& p, int max_iterations = 400000, double tol = 1e-12) {
  const int m = p.num_rows();
  const Eigen::LLT<MatX> llt(p.hessian);
  DualFistaResult out;
  if (m == 0) {
    out.u = -llt.solve(p.gradient);
  } else {
    const MatX hinv_at = llt.solve(p.constraints.transpose());
    const MatX q = p.constraints * hinv_at;
    const double lip = Eigen::SelfAdjointEigenSolver<MatX>(q).eigenvalues().maxCoeff();
    const double step = 1.0 / lip;
    const VecX hinv_g = llt.solve(p.gradient);
    const VecX c = p.constraints * hinv_g;
    auto prox = [&](const VecX& v) {
      VecX y(m);
      for (int i = 0; i < m; ++i) {
        const double hi = v[i] - step * p.upper[i], lo = v[i] - step * p.lower[i];
        y[i] = hi > 0.0 ? hi : (lo < 0.0 ? lo : 0.0);
      }
      return y;
    };
    VecX y = VecX::Zero(m), z = y, y_prev = y;
    double t = 1.0;
    for (int it = 0; it < max_iterations; ++it) {
      y_prev = y;
      y = prox(z - step * (q * z + c));
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      if ((z - y).dot(y - y_prev) > 0.0) {  // restart
        t = 1.0;
        z = y;
      } else {
        z = y + (t - 1.0) / t_next * (y - y_prev);
        t = t_next;
      }
      out.iterations = it + 1;
      if ((y - y_prev).lpNorm<Eigen::Infinity>() < tol) break;
    }
    out.u = -(hinv_g + hinv_at * y);
  }
  out.objective = 0.5 * out.u.dot(p.hessian * out.u) + p.gradient.dot(out.u);
  if (m > 0) {
    const VecX au = p.constraints * out.u;
    out.primal_violation = std::max((p.lower - au).maxCoeff(), (au - p.upper).maxCoeff());
    out.primal_violation = std::max(0.0, out.primal_violation);
  }
  return out;
}

/// Random strictly convex QP with a known feasible point; a few equality and
/// one-sided rows.
inline QpProblem random_qp(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nd(2, 20);
  const int n = nd(rng);
  std::uniform_int_distribution<int> md(0, 40);
  const int m = md(rng);
  const MatX a0 = random_vector(rng, n * n).reshaped(n, n);
  QpProblem p;
  p.hessian = a0.transpose() * a0 + 0.5 * MatX::Identity(n, n);
  p.gradient = random_vector(rng, n, 3.0);
  p.constraints = random_vector(rng, m * n).reshaped(m, n);
  const VecX feasible = random_vector(rng, n);
  const VecX center = p.constraints * feasible;
  p.lower.resize(m);
  p.upper.resize(m);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int equalities = std::min(m, n / 3);
  for (int i = 0; i < m; ++i) {
    if (i < equalities) {
      p.lower[i] = p.upper[i] = center[i];
      continue;
    }
    const double kind = u01(rng);
    p.lower[i] = kind < 0.3 ? -kInf : center[i] - u01(rng);
    p.upper[i] = kind > 0.7 ? kInf : center[i] + u01(rng);
  }
  return p;
}

struct QpBatteryReport {
  int problems = 0;
  int optimal = 0;
  double max_objective_gap = 0.0;  // |f - f_oracle| / (1 + |f_oracle|)
  double max_stationarity = 0.0;
  double max_primal = 0.0;
  double max_complementarity = 0.0;
  bool deterministic = true;
};

inline QpBatteryReport qp_battery(int problems, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  QpBatteryReport r;
  r.problems = problems;
  for (int k = 0; k < problems; ++k) {
    const QpProblem p = random_qp(rng);
    QpSolver solver;
    const QpSolution a = solver.solve(p);
    const QpSolution b = QpSolver().solve(p);
    r.deterministic = r.deterministic && a.status == b.status && a.iterations == b.iterations && a.u == b.u &&
                      a.multipliers == b.multipliers;
    if (!a.optimal()) continue;
    ++r.optimal;
    const DualFistaResult o = dual_fista(p);
    r.max_objective_gap = std::max(r.max_objective_gap, std::abs(a.objective - o.objective) / (1.0 + std::abs(o.objective)));
    r.max_stationarity = std::max(r.max_stationarity, a.kkt.stationarity);
    r.max_primal = std::max(r.max_primal, a.kkt.primal);
    r.max_complementarity = std::max(r.max_complementarity, a.kkt.complementarity);
  }
  return r;
}

struct RotationMonteCarloReport {
  int trials = 0;
  int converged = 0;
  int diverged = 0;  // non-finite or error growing past its initial value by the end
  double worst_final_error = 0.0;
  double worst_initial_error = 0.0;
};

/// Kinematic closed loop R_dot = S(w) R, w_dot = rotational_pd(...) from random
/// initial orientations with error norm below `max_initial_error`, constant R_d.
inline RotationMonteCarloReport rotation_monte_carlo(int trials, std::uint64_t seed, double max_initial_error = 2.8,
                                                     double horizon = 10.0, double dt = 1e-3,
                                                     GainsAngular gains = {4.0, 4.0}) {
  std::mt19937_64 rng(seed);
  RotationMonteCarloReport r;
  r.trials = trials;
  for (int k = 0; k < trials; ++k) {
    PoseReference ref;
    ref.pose.rotation = random_rotation(rng);
    Rotation rot;
    do {
      rot = random_rotation(rng);
    } while (orientation_error_norm(rot, ref.pose.rotation) >= max_initial_error);
    Vec3 w = random_vector(rng, 3, 0.5);
    const double e0 = orientation_error_norm(rot, ref.pose.rotation);
    r.worst_initial_error = std::max(r.worst_initial_error, e0);
    // RK4 on (R, w) with the rotation advanced through the exponential map.
    auto accel = [&](const Rotation& rr, const Vec3& ww) { return rotational_pd(rr, ww, ref, gains); };
    const int steps = static_cast<int>(std::round(horizon / dt));
    for (int s = 0; s < steps; ++s) {
      const Vec3 k1w = accel(rot, w);
      const Rotation r2 = exp_so3(w * (0.5 * dt)) * rot;
      const Vec3 w2 = w + 0.5 * dt * k1w;
      const Vec3 k2w = accel(r2, w2);
      const Rotation r3 = exp_so3(w2 * (0.5 * dt)) * rot;
      const Vec3 w3 = w + 0.5 * dt * k2w;
      const Vec3 k3w = accel(r3, w3);
      const Rotation r4 = exp_so3(w3 * dt) * rot;
      const Vec3 w4 = w + dt * k3w;
      const Vec3 k4w = accel(r4, w4);
      const Vec3 w_mean = (w + 2.0 * w2 + 2.0 * w3 + w4) / 6.0;
      rot = reorthonormalize(exp_so3(w_mean * dt) * rot);
      w += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
    }
    const double e = orientation_error_norm(rot, ref.pose.rotation);
    if (!std::isfinite(e) || e > e0) ++r.diverged;
    else if (e < 1e-3) ++r.converged;
    r.worst_final_error = std::max(r.worst_final_error, std::isfinite(e) ? e : kInf);
  }
  return r;
}

/// The suites behind `wbc verify`, with their pass thresholds.
inline std::vector<SuiteResult> run_all(unsigned seed, const RobotModel* model = nullptr) {
  std::vector<SuiteResult> out;
  auto add = [&](const std::string& name, bool ok, const std::string& detail) { out.push_back({name, ok, detail}); };

  if (model) {
    const DynamicsReport d = dynamics_oracles(*model, 100, seed);
    add("dynamics.mass_matrix", d.mass_matrix < 1e-5 && d.symmetry < 1e-9,
        "rel err " + sci(d.mass_matrix) + ", asymmetry " + sci(d.symmetry) + " over 100 states");
    add("dynamics.bias", d.bias < 1e-5, "rel err " + sci(d.bias) + " vs Kane's equations");
    add("dynamics.frame_jacobians", d.frame_jacobian < 1e-5, "rel err " + sci(d.frame_jacobian));
    add("dynamics.com_jacobian", d.com_jacobian < 1e-5, "rel err " + sci(d.com_jacobian));
    add("dynamics.jdot_nu", d.jdot_nu < 1e-5 && d.com_jdot_nu < 1e-5,
        "rel err " + sci(d.jdot_nu) + " (frames), " + sci(d.com_jdot_nu) + " (CoM)");
  }
  const double dp = double_pendulum_error(100, seed);
  add("dynamics.double_pendulum", dp < 1e-8, "rel err " + sci(dp) + " vs closed-form Lagrangian");

  const QpBatteryReport q = qp_battery(50, seed);
  add("qp.random_battery", q.optimal == q.problems && q.max_objective_gap < 1e-6,
      std::to_string(q.optimal) + "/" + std::to_string(q.problems) + " optimal, objective gap " +
          sci(q.max_objective_gap));
  add("qp.kkt", q.max_stationarity <= 1e-8 && q.max_primal <= 1e-8 && q.max_complementarity <= 1e-8,
      "stationarity " + sci(q.max_stationarity) + ", primal " + sci(q.max_primal) + ", complementarity " +
          sci(q.max_complementarity));
  add("qp.determinism", q.deterministic, q.deterministic ? "repeat solves identical" : "repeat solves differ");

  const RotationMonteCarloReport rm = rotation_monte_carlo(100, seed);
  add("control.rotational_pd_monte_carlo", rm.converged == rm.trials && rm.diverged == 0,
      std::to_string(rm.converged) + "/" + std::to_string(rm.trials) + " converged, worst final error " +
          sci(rm.worst_final_error));
  return out;
}

}  // namespace wbc::verify
