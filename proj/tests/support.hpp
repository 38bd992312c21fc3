#pragma once

#include <random>
#include <string>

#include <gtest/gtest.h>

#include "wbc/episode.hpp"
#include "wbc/model_io.hpp"

namespace wbc::test {

inline std::string source_path(const std::string& rel) { return std::string(WBC_SOURCE_DIR) + "/" + rel; }

inline const RobotModel& mini_biped() {
  static const RobotModel model = load_model_file(source_path("models/mini_biped.json"));
  return model;
}

inline const EpisodeConfig& default_config() {
  static const EpisodeConfig cfg = load_episode_config_file(source_path("configs/walk_in_place.json"));
  return cfg;
}

inline Configuration standing_configuration() {
  return initial_configuration(mini_biped(), default_config().initial_posture);
}

/// References equal to the measured home pose, zero velocities.
inline TaskReferences standing_references(const RobotModel& model, const Configuration& q, const TaskGains& gains) {
  const Gait::Home home = Gait::home_from(model, q);
  TaskReferences r;
  r.com.pose.position = home.com;
  r.root.pose.rotation = home.root;
  r.left_foot.pose = home.left_sole;
  r.right_foot.pose = home.right_sole;
  r.posture = home.posture;
  r.posture_velocity = VecX::Zero(model.num_joints());
  r.gains = gains;
  return r;
}

inline const TaskGains& balance_gains() {
  return gain_schedule(GaitState::BalancingTwoFeet, default_config().gait);
}

/// A configuration near standing with random joint offsets and a random base
/// pose, plus a random velocity.
inline std::pair<Configuration, Velocity> perturbed_state(std::mt19937_64& rng, double joint_spread = 0.1,
                                                          double velocity_spread = 0.2) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const RobotModel& model = mini_biped();
  Configuration q = standing_configuration();
  for (int j = 0; j < q.joints.size(); ++j) q.joints[j] += joint_spread * u(rng);
  q.base.rotation = exp_so3(Vec3(u(rng), u(rng), u(rng)) * 0.1) * q.base.rotation;
  q.base.position += Vec3(u(rng), u(rng), u(rng)) * 0.05;
  Velocity nu = Velocity::zero(model.num_joints());
  VecX v = nu.stacked();
  for (int i = 0; i < v.size(); ++i) v[i] = velocity_spread * u(rng);
  return {q, Velocity::from_stacked(v)};
}

}  // namespace wbc::test
