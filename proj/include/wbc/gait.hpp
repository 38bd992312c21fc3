#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "wbc/dynamics.hpp"
#include "wbc/min_jerk.hpp"
#include "wbc/qp_controller.hpp"

namespace wbc {

enum class GaitState {
  BalancingTwoFeet,
  TransitionToLeft,
  LeftSupport,
  PreparingRightTouchdown,
  RightTouchdown,
  TransitionToRight,
  RightSupport,
  PreparingLeftTouchdown,
  LeftTouchdown,
};

inline constexpr std::array<GaitState, 9> kGaitCycle = {
    GaitState::BalancingTwoFeet,       GaitState::TransitionToLeft, GaitState::LeftSupport,
    GaitState::PreparingRightTouchdown, GaitState::RightTouchdown,   GaitState::TransitionToRight,
    GaitState::RightSupport,           GaitState::PreparingLeftTouchdown, GaitState::LeftTouchdown,
};

inline const char* to_string(GaitState s) {
  switch (s) {
    case GaitState::BalancingTwoFeet: return "BalancingTwoFeet";
    case GaitState::TransitionToLeft: return "TransitionToLeft";
    case GaitState::LeftSupport: return "LeftSupport";
    case GaitState::PreparingRightTouchdown: return "PreparingRightTouchdown";
    case GaitState::RightTouchdown: return "RightTouchdown";
    case GaitState::TransitionToRight: return "TransitionToRight";
    case GaitState::RightSupport: return "RightSupport";
    case GaitState::PreparingLeftTouchdown: return "PreparingLeftTouchdown";
    case GaitState::LeftTouchdown: return "LeftTouchdown";
  }
  return "?";
}

inline GaitState gait_state_from_string(const std::string& name) {
  for (GaitState s : kGaitCycle)
    if (name == to_string(s)) return s;
  throw Error("unknown gait state '" + name + "'");
}

inline GaitState next_state(GaitState s) {
  return kGaitCycle[(static_cast<std::size_t>(s) + 1) % kGaitCycle.size()];
}

struct GaitParams {
  double balance_time = 1.0;
  double transition_time = 2.0;
  double lift_time = 1.5;
  double hold_time = 5.0;
  double lower_time = 2.0;
  double settle_time = 0.5;        // after touchdown, before shifting weight
  double touchdown_timeout = 1.0;  // forced activation if the sole never reaches contact_epsilon
  double lift_height = 0.05;
  double contact_epsilon = 0.001;
  double com_shift_fraction = 1.0;  // 1 places the CoM over the stance sole origin
  double unload_force = -1.0;       // N above fz_min at the start of unloading; negative = total weight
  // Added to the swing leg's joints while it is lifted, keyed by joint name
  // without the "l_"/"r_" side prefix.
  std::map<std::string, double> swing_posture_offset = {{"hip_pitch", -0.2}, {"knee", 0.4}, {"ankle_pitch", -0.2}};
  std::map<GaitState, TaskGains> gains;
};

inline const TaskGains& gain_schedule(GaitState state, const GaitParams& params) {
  auto it = params.gains.find(state);
  if (it == params.gains.end())
    throw MissingScheduleEntry(std::string("no gains scheduled for state ") + to_string(state));
  return it->second;
}

/// Measured quantities the state machine reacts to.
struct GaitFeedback {
  Pose left_sole;
  Pose right_sole;
};

struct GaitOutput {
  GaitState state = GaitState::BalancingTwoFeet;
  TaskReferences refs;
  ContactState contacts;
  int strides = 0;
};

/// Walking-in-place state machine: shift the CoM over one foot, lift the
/// other, hold, lower, touch down, repeat on the other side. References are
/// smoothed with minimum-jerk segments that start from the current reference,
/// so every reference stays continuous across state changes.
class Gait {
 public:
  struct Home {
    Vec3 com;
    Rotation root;
    Pose left_sole;
    Pose right_sole;
    VecX posture;
  };

  Gait(const RobotModel& model, GaitParams params, Home home, double t0 = 0.0)
      : model_(&model), params_(std::move(params)), home_(std::move(home)) {
    for (GaitState s : kGaitCycle) gain_schedule(s, params_);
    left_swing_ = swing_offsets("l_");
    right_swing_ = swing_offsets("r_");
    com_seg_ = {home_.com, home_.com, 1.0, t0};
    left_seg_ = {home_.left_sole.position, home_.left_sole.position, 1.0, t0};
    right_seg_ = {home_.right_sole.position, home_.right_sole.position, 1.0, t0};
    posture_seg_ = {home_.posture, home_.posture, 1.0, t0};
    root_hold_ = home_.root;
    enter(GaitState::BalancingTwoFeet, t0, nullptr);
  }

  /// Home pose measured at a configuration.
  static Home home_from(const RobotModel& model, const Configuration& q) {
    const KinematicsState ks(model, q);
    return {compute_com(ks), ks.frame_pose(model.frame_index("root")).rotation,
            ks.frame_pose(model.frame_index("l_sole")), ks.frame_pose(model.frame_index("r_sole")), q.joints};
  }

  GaitState state() const { return state_; }
  int strides() const { return strides_; }
  const ContactState& contacts() const { return contacts_; }
  const GaitParams& params() const { return params_; }
  const Home& home() const { return home_; }
  double state_entry_time() const { return entered_; }
  /// Time at which the current support state's lift segment ends.
  double hold_start_time() const { return entered_ + params_.lift_time; }

  GaitOutput advance(double t, const GaitFeedback& fb) {
    // State changes. At most one per call keeps each transition visible in logs.
    const double in_state = t - entered_;
    switch (state_) {
      case GaitState::BalancingTwoFeet:
        if (in_state >= params_.balance_time) enter(GaitState::TransitionToLeft, t, &fb);
        break;
      case GaitState::TransitionToLeft:
      case GaitState::TransitionToRight:
        if (in_state >= params_.transition_time) enter(next_state(state_), t, &fb);
        break;
      case GaitState::LeftSupport:
      case GaitState::RightSupport:
        if (in_state >= params_.lift_time + params_.hold_time) enter(next_state(state_), t, &fb);
        break;
      case GaitState::PreparingRightTouchdown:
      case GaitState::PreparingLeftTouchdown:
        if (in_state >= params_.lower_time) enter(next_state(state_), t, &fb);
        break;
      case GaitState::RightTouchdown:
      case GaitState::LeftTouchdown: {
        const bool left = state_ == GaitState::LeftTouchdown;
        bool& active = left ? contacts_.left : contacts_.right;
        if (!active) {
          const Pose& sole = left ? fb.left_sole : fb.right_sole;
          const Pose& home = left ? home_.left_sole : home_.right_sole;
          if (sole.position.z() - home.position.z() <= params_.contact_epsilon ||
              in_state >= params_.touchdown_timeout) {
            active = true;
            activated_ = t;
            ++touchdowns_;
            if (in_state >= params_.touchdown_timeout) ++forced_touchdowns_;
          }
        } else if (t - activated_ >= params_.settle_time) {
          enter(next_state(state_), t, &fb);
        }
        break;
      }
    }
    return output(t, fb);
  }

  int forced_touchdowns() const { return forced_touchdowns_; }

 private:
  std::vector<std::pair<int, double>> swing_offsets(const std::string& prefix) const {
    std::vector<std::pair<int, double>> out;
    for (const auto& [suffix, offset] : params_.swing_posture_offset) {
      const int j = model_->joint_index(prefix + suffix);
      if (j < 0) throw Error("swing posture offset names unknown joint '" + prefix + suffix + "'");
      out.emplace_back(j, offset);
    }
    return out;
  }

  double unload_force() const {
    return params_.unload_force >= 0.0 ? params_.unload_force : model_->total_mass() * 9.81;
  }

  template <typename T>
  static MinJerkSegment<T> from_current(const MinJerkSegment<T>& seg, double t, const T& target, double duration) {
    return {min_jerk_eval(seg, t).value, target, duration, t};
  }

  Vec3 com_over(const Pose& sole) const {
    Vec3 target = home_.com;
    target.head<2>() += params_.com_shift_fraction * (sole.position.head<2>() - home_.com.head<2>());
    return target;
  }

  void enter(GaitState s, double t, const GaitFeedback* fb) {
    const GaitState previous = state_;
    const Rotation root_now = root_reference(t, fb);
    state_ = s;
    entered_ = t;
    const Vec3 lift{0.0, 0.0, params_.lift_height};
    switch (s) {
      case GaitState::BalancingTwoFeet:
        if (previous == GaitState::LeftTouchdown && started_) ++strides_;
        started_ = true;
        contacts_ = {true, true};
        com_seg_ = from_current(com_seg_, t, home_.com, params_.balance_time);
        break;
      case GaitState::TransitionToLeft:
        com_seg_ = from_current(com_seg_, t, com_over(home_.left_sole), params_.transition_time);
        break;
      case GaitState::TransitionToRight:
        com_seg_ = from_current(com_seg_, t, com_over(home_.right_sole), params_.transition_time);
        break;
      case GaitState::LeftSupport:
        contacts_ = {true, false};
        right_seg_ = from_current(right_seg_, t, Vec3(home_.right_sole.position + lift), params_.lift_time);
        posture_seg_ = from_current(posture_seg_, t, swing_posture(right_swing_), params_.lift_time);
        break;
      case GaitState::RightSupport:
        contacts_ = {false, true};
        left_seg_ = from_current(left_seg_, t, Vec3(home_.left_sole.position + lift), params_.lift_time);
        posture_seg_ = from_current(posture_seg_, t, swing_posture(left_swing_), params_.lift_time);
        break;
      case GaitState::PreparingRightTouchdown:
      case GaitState::PreparingLeftTouchdown: {
        const bool left = s == GaitState::PreparingLeftTouchdown;
        auto& seg = left ? left_seg_ : right_seg_;
        seg = from_current(seg, t, Vec3((left ? home_.left_sole : home_.right_sole).position), params_.lower_time);
        posture_seg_ = from_current(posture_seg_, t, VecX(home_.posture), params_.lower_time);
        root_hold_ = root_now;
        break;
      }
      case GaitState::RightTouchdown:
      case GaitState::LeftTouchdown:
        break;
    }
  }

  VecX swing_posture(const std::vector<std::pair<int, double>>& offsets) const {
    VecX p = home_.posture;
    for (const auto& [j, off] : offsets) p[j] += off;
    return p;
  }

  // Rotation keeping the home relation between `from` and the stance sole.
  static Rotation parallel_to(const Pose& stance_now, const Pose& stance_home, const Rotation& home) {
    return reorthonormalize(stance_now.rotation * stance_home.rotation.transpose() * home);
  }

  Rotation root_reference(double, const GaitFeedback* fb) const {
    switch (state_) {
      case GaitState::LeftSupport:
        return fb ? parallel_to(fb->left_sole, home_.left_sole, home_.root) : home_.root;
      case GaitState::RightSupport:
        return fb ? parallel_to(fb->right_sole, home_.right_sole, home_.root) : home_.root;
      case GaitState::PreparingRightTouchdown:
      case GaitState::PreparingLeftTouchdown:
      case GaitState::RightTouchdown:
      case GaitState::LeftTouchdown:
        return root_hold_;
      default:
        return home_.root;
    }
  }

  static PoseReference sample(const MinJerkSegment<Vec3>& seg, double t, const Rotation& r) {
    const auto s = min_jerk_eval(seg, t);
    PoseReference ref;
    ref.pose.position = s.value;
    ref.pose.rotation = r;
    ref.velocity.linear = s.velocity;
    ref.acceleration.linear = s.acceleration;
    return ref;
  }

  GaitOutput output(double t, const GaitFeedback& fb) const {
    GaitOutput out;
    out.state = state_;
    out.contacts = contacts_;
    out.strides = strides_;
    TaskReferences& r = out.refs;
    r.com = sample(com_seg_, t, Rotation::Identity());
    r.root.pose.rotation = root_reference(t, &fb);

    Rotation left_rot = home_.left_sole.rotation;
    Rotation right_rot = home_.right_sole.rotation;
    if (state_ == GaitState::LeftSupport) right_rot = parallel_to(fb.left_sole, home_.left_sole, home_.right_sole.rotation);
    if (state_ == GaitState::RightSupport) left_rot = parallel_to(fb.right_sole, home_.right_sole, home_.left_sole.rotation);
    r.left_foot = sample(left_seg_, t, left_rot);
    r.right_foot = sample(right_seg_, t, right_rot);

    const auto p = min_jerk_eval(posture_seg_, t);
    r.posture = p.value;
    r.posture_velocity = p.velocity;
    r.gains = gain_schedule(state_, params_);

    // Normal-force ceilings: unload the foot about to lift, reload after touchdown.
    const double unload = unload_force();
    const double in_state = t - entered_;
    if (state_ == GaitState::TransitionToLeft)
      r.right_fz_max = fz_floor_ + unload * (1.0 - min_jerk_fraction(in_state, 0.0, params_.transition_time));
    if (state_ == GaitState::TransitionToRight)
      r.left_fz_max = fz_floor_ + unload * (1.0 - min_jerk_fraction(in_state, 0.0, params_.transition_time));
    if ((state_ == GaitState::RightTouchdown && contacts_.right) ||
        (state_ == GaitState::LeftTouchdown && contacts_.left)) {
      const double ceiling = fz_floor_ + unload * min_jerk_fraction(t - activated_, 0.0, params_.settle_time);
      (state_ == GaitState::RightTouchdown ? r.right_fz_max : r.left_fz_max) = ceiling;
    }
    return out;
  }

 public:
  /// Smallest normal-force ceiling; callers keep it at or above fz_min.
  double fz_floor() const { return fz_floor_; }
  void set_fz_floor(double f) { fz_floor_ = f; }

 private:
  const RobotModel* model_;
  GaitParams params_;
  Home home_;
  GaitState state_ = GaitState::BalancingTwoFeet;
  double entered_ = 0.0;
  double activated_ = 0.0;
  bool started_ = false;
  int strides_ = 0;
  int touchdowns_ = 0;
  int forced_touchdowns_ = 0;
  ContactState contacts_;
  MinJerkSegment<Vec3> com_seg_;
  MinJerkSegment<Vec3> left_seg_;
  MinJerkSegment<Vec3> right_seg_;
  MinJerkSegment<VecX> posture_seg_;
  Rotation root_hold_ = Rotation::Identity();
  std::vector<std::pair<int, double>> left_swing_;
  std::vector<std::pair<int, double>> right_swing_;
  double fz_floor_ = 5.0;
};

}  // namespace wbc
