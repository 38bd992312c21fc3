#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wbc/gait.hpp"
#include "wbc/model_io.hpp"
#include "wbc/qp_controller.hpp"
#include "wbc/simulator.hpp"

namespace wbc {

struct EpisodeConfig {
  std::string model_path;
  ControllerConfig controller;
  GaitParams gait;
  SimConfig sim;
  // Joint name -> angle. A name without the "l_"/"r_" prefix sets both sides.
  std::map<std::string, double> initial_posture;
  double duration = 60.0;  // s, upper bound on simulated time
  int strides = 0;         // stop after this many strides; 0 runs for the full duration
  double fall_fraction = 0.5;
  std::string output_dir = "out";
  unsigned seed = 0;
  int log_decimation = 1;  // write every k-th control step
  std::vector<std::string> warnings;
};

namespace detail {

inline Vec3 gain_vector(const json& j, const std::string& where) {
  if (j.is_number()) return Vec3::Constant(j.get<double>());
  return vec3(j, where);
}

inline GainsLinear linear_gains(const json& j, const std::string& where) {
  require_keys(j, where, {"kp", "kd"}, {"kp", "kd"});
  return {gain_vector(j["kp"], where + ".kp"), gain_vector(j["kd"], where + ".kd")};
}

inline GainsAngular angular_gains(const json& j, const std::string& where) {
  require_keys(j, where, {"kp", "kd"}, {"kp", "kd"});
  return {number(j["kp"], where + ".kp"), number(j["kd"], where + ".kd")};
}

inline TaskGains task_gains(const json& j, const std::string& where) {
  require_keys(j, where, {"com", "root", "foot_linear", "foot_angular", "posture"},
               {"com", "root", "foot_linear", "foot_angular", "posture"});
  TaskGains g;
  g.com = linear_gains(j["com"], where + ".com");
  g.root = angular_gains(j["root"], where + ".root");
  g.foot_linear = linear_gains(j["foot_linear"], where + ".foot_linear");
  g.foot_angular = angular_gains(j["foot_angular"], where + ".foot_angular");
  const GainsAngular p = angular_gains(j["posture"], where + ".posture");
  g.posture_kp = p.kp;
  g.posture_kd = p.kd;
  return g;
}

inline void read_number(const json& obj, const char* key, double& out, const std::string& where) {
  if (obj.contains(key)) out = number(obj[key], where + "." + key);
}

inline ControllerConfig controller_config(const json& j, std::vector<std::string>& warnings) {
  const std::string w = "controller";
  require_keys(j, w,
               {"mode", "w_posture", "w_task", "w_reg", "mu", "mu_torsion", "cop_margin", "fz_min", "torque_rate_max",
                "dt", "torque_rate_limit"},
               {});
  ControllerConfig c;
  if (j.contains("mode")) {
    const std::string mode = text(j["mode"], w + ".mode");
    if (mode == "weighted") c.mode = PriorityMode::Weighted;
    else if (mode == "strict") c.mode = PriorityMode::Strict;
    else throw ValidationError("controller.mode", "expected 'weighted' or 'strict', got '" + mode + "'");
  }
  read_number(j, "w_posture", c.w_posture, w);
  read_number(j, "w_task", c.w_task, w);
  read_number(j, "w_reg", c.w_reg, w);
  read_number(j, "mu", c.mu, w);
  read_number(j, "mu_torsion", c.mu_torsion, w);
  read_number(j, "cop_margin", c.cop_margin, w);
  read_number(j, "fz_min", c.fz_min, w);
  read_number(j, "torque_rate_max", c.torque_rate_max, w);
  read_number(j, "dt", c.dt, w);
  if (j.contains("torque_rate_limit")) {
    if (!j["torque_rate_limit"].is_boolean()) throw ParseError(w + ".torque_rate_limit: expected a boolean");
    c.torque_rate_limit = j["torque_rate_limit"].get<bool>();
  }
  if (c.w_posture < 0.0 || c.w_task < 0.0 || c.w_reg < 0.0)
    throw ValidationError("controller", "weights must be non-negative");
  if (!(c.mu > 0.0)) throw ValidationError("controller.mu", "friction coefficient must be positive");
  if (!(c.dt > 0.0)) throw ValidationError("controller.dt", "loop period must be positive");
  if (c.cop_margin < 0.0 || c.fz_min < 0.0 || c.torque_rate_max < 0.0)
    throw ValidationError("controller", "cop_margin, fz_min and torque_rate_max must be non-negative");
  if (c.mode == PriorityMode::Weighted && !(c.w_task > c.w_posture))
    warnings.push_back("controller: w_task should exceed w_posture so the tasks take priority over the posture");
  return c;
}

inline GaitParams gait_params(const json& j) {
  const std::string w = "gait";
  require_keys(j, w,
               {"balance_time", "transition_time", "lift_time", "hold_time", "lower_time", "settle_time",
                "touchdown_timeout", "lift_height", "contact_epsilon", "com_shift_fraction", "unload_force",
                "swing_posture_offset", "gains"},
               {"gains"});
  GaitParams g;
  read_number(j, "balance_time", g.balance_time, w);
  read_number(j, "transition_time", g.transition_time, w);
  read_number(j, "lift_time", g.lift_time, w);
  read_number(j, "hold_time", g.hold_time, w);
  read_number(j, "lower_time", g.lower_time, w);
  read_number(j, "settle_time", g.settle_time, w);
  read_number(j, "touchdown_timeout", g.touchdown_timeout, w);
  read_number(j, "lift_height", g.lift_height, w);
  read_number(j, "contact_epsilon", g.contact_epsilon, w);
  read_number(j, "com_shift_fraction", g.com_shift_fraction, w);
  read_number(j, "unload_force", g.unload_force, w);
  for (double d : {g.balance_time, g.transition_time, g.lift_time, g.lower_time, g.settle_time})
    if (!(d > 0.0)) throw ValidationError("gait", "state durations must be positive");
  if (g.hold_time < 0.0 || g.touchdown_timeout < 0.0 || g.contact_epsilon < 0.0)
    throw ValidationError("gait", "hold_time, touchdown_timeout and contact_epsilon must be non-negative");
  if (j.contains("swing_posture_offset")) {
    const json& s = j["swing_posture_offset"];
    if (!s.is_object()) throw ParseError("gait.swing_posture_offset: expected an object");
    g.swing_posture_offset.clear();
    for (auto it = s.begin(); it != s.end(); ++it)
      g.swing_posture_offset[it.key()] = number(it.value(), "gait.swing_posture_offset." + it.key());
  }
  // Per-state gains; "default" fills every state not listed explicitly.
  const json& gains = j["gains"];
  if (!gains.is_object()) throw ParseError("gait.gains: expected an object");
  std::optional<TaskGains> fallback;
  for (auto it = gains.begin(); it != gains.end(); ++it) {
    if (it.key() == "default") {
      fallback = task_gains(it.value(), "gait.gains.default");
      continue;
    }
    GaitState s;
    try {
      s = gait_state_from_string(it.key());
    } catch (const Error&) {
      throw ParseError("gait.gains: unknown state '" + it.key() + "'");
    }
    g.gains[s] = task_gains(it.value(), "gait.gains." + it.key());
  }
  if (fallback)
    for (GaitState s : kGaitCycle) g.gains.emplace(s, *fallback);
  return g;
}

inline SimConfig sim_config(const json& j) {
  const std::string w = "sim";
  require_keys(j, w, {"dt", "alpha", "beta", "gravity", "blowup_velocity"}, {});
  SimConfig s;
  read_number(j, "dt", s.dt, w);
  read_number(j, "alpha", s.alpha, w);
  read_number(j, "beta", s.beta, w);
  read_number(j, "blowup_velocity", s.blowup_velocity, w);
  if (j.contains("gravity")) s.gravity = vec3(j["gravity"], "sim.gravity");
  if (!(s.dt > 0.0)) throw ValidationError("sim.dt", "time step must be positive");
  if (s.alpha < 0.0 || s.beta < 0.0) throw ValidationError("sim", "Baumgarte gains must be non-negative");
  return s;
}

}  // namespace detail

/// Parses an episode configuration. Relative model paths resolve against `base_dir`.
inline EpisodeConfig load_episode_config(const std::string& document, const std::string& base_dir = ".") {
  using detail::json;
  const json j = detail::parse_json(document, "config");
  detail::require_keys(j, "config",
                       {"model", "controller", "gait", "sim", "initial_posture", "duration", "strides",
                        "fall_fraction", "output_dir", "seed", "log_decimation"},
                       {"model", "gait"});
  EpisodeConfig c;
  namespace fs = std::filesystem;
  const fs::path model = detail::text(j["model"], "config.model");
  c.model_path = model.is_absolute() ? model.string() : (fs::path(base_dir) / model).lexically_normal().string();
  if (j.contains("controller")) c.controller = detail::controller_config(j["controller"], c.warnings);
  c.gait = detail::gait_params(j["gait"]);
  if (j.contains("sim")) c.sim = detail::sim_config(j["sim"]);
  if (j.contains("initial_posture")) {
    const json& p = j["initial_posture"];
    if (!p.is_object()) throw ParseError("config.initial_posture: expected an object");
    for (auto it = p.begin(); it != p.end(); ++it)
      c.initial_posture[it.key()] = detail::number(it.value(), "config.initial_posture." + it.key());
  }
  detail::read_number(j, "duration", c.duration, "config");
  detail::read_number(j, "fall_fraction", c.fall_fraction, "config");
  if (j.contains("strides")) {
    if (!j["strides"].is_number_integer() || j["strides"].get<int>() < 0)
      throw ParseError("config.strides: expected a non-negative integer");
    c.strides = j["strides"].get<int>();
  }
  if (j.contains("log_decimation")) {
    if (!j["log_decimation"].is_number_integer() || j["log_decimation"].get<int>() < 1)
      throw ParseError("config.log_decimation: expected a positive integer");
    c.log_decimation = j["log_decimation"].get<int>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ParseError("config.seed: expected a non-negative integer");
    c.seed = j["seed"].get<unsigned>();
  }
  if (j.contains("output_dir")) c.output_dir = detail::text(j["output_dir"], "config.output_dir");
  if (c.duration < 0.0) throw ValidationError("config.duration", "duration must be non-negative");
  if (std::abs(c.controller.dt - c.sim.dt) > 1e-15)
    c.warnings.push_back("controller.dt differs from sim.dt; the controller runs once per simulator step");
  return c;
}

inline EpisodeConfig load_episode_config_file(const std::string& path) {
  return load_episode_config(detail::read_file(path), std::filesystem::path(path).parent_path().string());
}

/// Initial configuration: the named posture, base placed so the lower sole
/// rests on z = 0.
inline Configuration initial_configuration(const RobotModel& model, const std::map<std::string, double>& posture) {
  Configuration q = Configuration::neutral(model.num_joints());
  for (const auto& [name, angle] : posture) {
    const int j = model.joint_index(name);
    if (j >= 0) {
      q.joints[j] = angle;
      continue;
    }
    const int l = model.joint_index("l_" + name), r = model.joint_index("r_" + name);
    if (l < 0 && r < 0) throw ValidationError(name, "initial posture names an unknown joint");
    if (l >= 0) q.joints[l] = angle;
    if (r >= 0) q.joints[r] = angle;
  }
  const KinematicsState ks(model, q);
  const double z = std::min(ks.frame_pose(model.frame_index("l_sole")).position.z(),
                            ks.frame_pose(model.frame_index("r_sole")).position.z());
  q.base.position.z() -= z;
  return q;
}

enum class EpisodeStatus { Completed, Fall, SolverFailure };

inline const char* to_string(EpisodeStatus s) {
  switch (s) {
    case EpisodeStatus::Completed: return "completed";
    case EpisodeStatus::Fall: return "fall";
    case EpisodeStatus::SolverFailure: return "solver_failure";
  }
  return "?";
}

inline int exit_code(EpisodeStatus s) {
  switch (s) {
    case EpisodeStatus::Completed: return 0;
    case EpisodeStatus::Fall: return 2;
    case EpisodeStatus::SolverFailure: return 3;
  }
  return 1;
}

/// Everything known about one control step, after the simulator advanced.
struct EpisodeSample {
  long step = 0;
  double t = 0.0;  // time at which the control input was computed
  GaitState state = GaitState::BalancingTwoFeet;
  int strides = 0;
  ContactState contacts;
  Configuration q;  // state the controller saw
  Velocity nu;
  Vec3 com;
  Vec3 com_velocity;
  Pose root;
  Pose left_sole;
  Pose right_sole;
  TaskReferences refs;
  ControlInput input;
  ControlDiagnostics diagnostics;
  Vec6 left_wrench = Vec6::Zero();  // simulator's constraint wrenches for this step
  Vec6 right_wrench = Vec6::Zero();
  double root_error = 0.0;  // orientation_error_norm against the references
  double left_foot_error = 0.0;
  double right_foot_error = 0.0;
  double contact_drift = 0.0;     // |c(q)| over active contacts
  double contact_velocity = 0.0;  // |J_C nu| over active contacts
};

struct StrideStats {
  double com_error_mean = 0.0;  // of the per-step infinity norm of CoM - CoM_ref
  double com_error_max = 0.0;
  long samples = 0;
};

struct EpisodeMetrics {
  long steps = 0;
  double sim_time = 0.0;
  double wall_time = 0.0;
  int strides = 0;
  int forced_touchdowns = 0;
  Vec3 max_com_error = Vec3::Zero();  // per axis
  std::vector<StrideStats> stride_stats;
  std::vector<double> swing_apex;          // max swing height above home, per swing phase
  double max_foot_z_error_transient = 0.0;  // swing foot, whole swing phase
  double max_foot_z_error_hold = 0.0;       // swing foot, from 1 s after the lift until lowering starts
  double max_friction_residual = 0.0;
  double max_rate_residual = 0.0;
  double max_inactive_wrench = 0.0;
  double max_contact_drift = 0.0;
  double max_contact_velocity = 0.0;
  double max_stance_drift = 0.0;  // stance sole displacement from its anchor
  std::vector<double> step_times_us;
  double warm_iterations_mean = 0.0;

  double step_time_quantile(double p) const {
    if (step_times_us.empty()) return 0.0;
    std::vector<double> v = step_times_us;
    const std::size_t k = std::min(v.size() - 1, static_cast<std::size_t>(p * static_cast<double>(v.size() - 1) + 0.5));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
  }
};

struct EpisodeResult {
  EpisodeStatus status = EpisodeStatus::Completed;
  std::string message;
  long failed_step = -1;
  EpisodeMetrics metrics;
};

using SampleObserver = std::function<void(const EpisodeSample&)>;

/// Closed loop per step: gait.advance -> contact switching -> control step -> simulator step.
inline EpisodeResult run_episode(const RobotModel& model, const EpisodeConfig& cfg,
                                 const SampleObserver& observer = {}) {
  const auto wall0 = std::chrono::steady_clock::now();
  const Configuration q0 = initial_configuration(model, cfg.initial_posture);
  Simulator sim(model, cfg.sim, q0, {true, true});
  const Gait::Home home = Gait::home_from(model, q0);
  Gait gait(model, cfg.gait, home, 0.0);
  gait.set_fz_floor(std::max(gait.fz_floor(), cfg.controller.fz_min));
  WholeBodyController controller(model, cfg.controller);

  const int lf = model.frame_index("l_sole"), rf = model.frame_index("r_sole"), rootf = model.frame_index("root");
  const double fall_height = cfg.fall_fraction * home.com.z();

  EpisodeResult result;
  EpisodeMetrics& m = result.metrics;
  double apex = -kInf;
  bool swinging = false;
  long iterations = 0;

  const long max_steps = static_cast<long>(std::floor(cfg.duration / cfg.sim.dt + 1e-9));
  for (long k = 0; k < max_steps; ++k) {
    if (cfg.strides > 0 && gait.strides() >= cfg.strides) break;
    const SimState& st = sim.state();
    EpisodeSample s;
    s.step = k;
    s.t = st.t;
    {
      const KinematicsState ks(model, st.q, st.nu);
      s.left_sole = ks.frame_pose(lf);
      s.right_sole = ks.frame_pose(rf);
      s.root = ks.frame_pose(rootf);
      s.com = compute_com(ks);
      s.com_velocity = compute_com_jacobian(ks) * st.nu.stacked();
    }
    if (s.com.z() < fall_height) {
      result.status = EpisodeStatus::Fall;
      result.failed_step = k;
      result.message = "CoM height " + std::to_string(s.com.z()) + " m below fall threshold at t=" + std::to_string(s.t);
      break;
    }
    const GaitOutput go = gait.advance(st.t, GaitFeedback{s.left_sole, s.right_sole});
    try {
      if (go.contacts.left != st.contacts.left) sim.switch_contact(Foot::Left, go.contacts.left);
      if (go.contacts.right != st.contacts.right) sim.switch_contact(Foot::Right, go.contacts.right);
      s.q = sim.state().q;
      s.nu = sim.state().nu;
      const ControlOutput out = controller.step(s.q, s.nu, go.contacts, go.refs);
      s.input = out.input;
      s.diagnostics = out.diagnostics;
      const SimState& next = sim.step(out.input.torques);
      s.left_wrench = next.left_wrench;
      s.right_wrench = next.right_wrench;
    } catch (const Error& e) {
      result.status = EpisodeStatus::SolverFailure;
      result.failed_step = k;
      result.message = std::string(e.what()) + " at t=" + std::to_string(s.t);
      break;
    }
    s.state = go.state;
    s.strides = go.strides;
    s.contacts = go.contacts;
    s.refs = go.refs;
    s.root_error = orientation_error_norm(s.root.rotation, go.refs.root.pose.rotation);
    s.left_foot_error = orientation_error_norm(s.left_sole.rotation, go.refs.left_foot.pose.rotation);
    s.right_foot_error = orientation_error_norm(s.right_sole.rotation, go.refs.right_foot.pose.rotation);
    {
      const VecX drift = sim.contact_drift();
      const VecX vel = sim.contact_velocity();
      s.contact_drift = drift.size() ? drift.cwiseAbs().maxCoeff() : 0.0;
      s.contact_velocity = vel.size() ? vel.cwiseAbs().maxCoeff() : 0.0;
    }

    // Metrics.
    const Vec3 com_err = (s.com - go.refs.com.pose.position).cwiseAbs();
    m.max_com_error = m.max_com_error.cwiseMax(com_err);
    if (static_cast<int>(m.stride_stats.size()) <= go.strides) m.stride_stats.resize(go.strides + 1);
    StrideStats& ss = m.stride_stats[go.strides];
    const double e = com_err.maxCoeff();
    ss.com_error_mean += (e - ss.com_error_mean) / static_cast<double>(++ss.samples);
    ss.com_error_max = std::max(ss.com_error_max, e);

    const bool support = go.state == GaitState::LeftSupport || go.state == GaitState::RightSupport;
    const bool swing_phase = !(go.contacts.left && go.contacts.right);
    if (swing_phase) {
      const bool left_swings = !go.contacts.left;
      const Pose& sole = left_swings ? s.left_sole : s.right_sole;
      const PoseReference& ref = left_swings ? go.refs.left_foot : go.refs.right_foot;
      const double home_z = (left_swings ? home.left_sole : home.right_sole).position.z();
      const double z_err = std::abs(sole.position.z() - ref.pose.position.z());
      m.max_foot_z_error_transient = std::max(m.max_foot_z_error_transient, z_err);
      if (support && s.t >= gait.hold_start_time() + 1.0)
        m.max_foot_z_error_hold = std::max(m.max_foot_z_error_hold, z_err);
      apex = swinging ? std::max(apex, sole.position.z() - home_z) : sole.position.z() - home_z;
      swinging = true;
      const Pose& stance = left_swings ? s.right_sole : s.left_sole;
      const Pose& anchor = left_swings ? sim.state().right_anchor : sim.state().left_anchor;
      m.max_stance_drift = std::max(m.max_stance_drift, (stance.position - anchor.position).norm());
    } else if (swinging) {
      m.swing_apex.push_back(apex);
      swinging = false;
    }
    m.max_friction_residual = std::max(m.max_friction_residual, s.diagnostics.max_friction_residual);
    m.max_rate_residual = std::max(m.max_rate_residual, s.diagnostics.max_rate_residual);
    m.max_inactive_wrench = std::max(m.max_inactive_wrench, s.diagnostics.max_inactive_wrench);
    m.max_contact_drift = std::max(m.max_contact_drift, s.contact_drift);
    m.max_contact_velocity = std::max(m.max_contact_velocity, s.contact_velocity);
    m.step_times_us.push_back(s.diagnostics.step_time_us);
    iterations += s.diagnostics.iterations;
    ++m.steps;
    if (observer && k % cfg.log_decimation == 0) observer(s);
  }
  if (swinging) m.swing_apex.push_back(apex);
  m.sim_time = sim.state().t;
  m.strides = gait.strides();
  m.forced_touchdowns = gait.forced_touchdowns();
  m.warm_iterations_mean = m.steps ? static_cast<double>(iterations) / static_cast<double>(m.steps) : 0.0;
  m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return result;
}

}  // namespace wbc
