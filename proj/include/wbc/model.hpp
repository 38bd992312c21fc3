#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "wbc/errors.hpp"
#include "wbc/lie.hpp"

namespace wbc {

struct Link {
  std::string name;
  double mass = 0.0;
  Mat3 inertia = Mat3::Zero();  // about the link CoM, link coordinates
  Vec3 com = Vec3::Zero();      // CoM offset in link coordinates
};

// Revolute joint. The child link frame is parent * origin * exp(axis * angle).
struct Joint {
  std::string name;
  int parent = -1;
  int child = -1;
  Vec3 axis = Vec3::UnitZ();
  Pose origin;
  double lower = -M_PI;
  double upper = M_PI;
  double torque_limit = 0.0;
};

struct FootGeometry {
  double half_length = 0.0;  // along sole x
  double half_width = 0.0;   // along sole y
};

struct Frame {
  std::string name;
  int link = -1;
  Pose offset;
  std::optional<FootGeometry> foot;
};

/// Floating-base kinematic tree. Immutable after construction; joint j owns
/// generalized velocity index 6 + j, in document order.
class RobotModel {
 public:
  RobotModel() = default;
  RobotModel(std::vector<Link> links, std::vector<Joint> joints, std::vector<Frame> frames, int base)
      : links_(std::move(links)), joints_(std::move(joints)), frames_(std::move(frames)), base_(base) {
    validate();
    build_topology();
  }

  const std::vector<Link>& links() const { return links_; }
  const std::vector<Joint>& joints() const { return joints_; }
  const std::vector<Frame>& frames() const { return frames_; }
  int base() const { return base_; }

  int num_joints() const { return static_cast<int>(joints_.size()); }
  int num_links() const { return static_cast<int>(links_.size()); }
  int nv() const { return num_joints() + 6; }

  double total_mass() const {
    double m = 0.0;
    for (const auto& l : links_) m += l.mass;
    return m;
  }

  /// Joint whose child is `link`; -1 for the base.
  int parent_joint(int link) const { return parent_joint_[link]; }
  /// Joints ordered so that every parent link is placed before its children.
  const std::vector<int>& joint_order() const { return joint_order_; }
  /// Joint indices on the path from the base to `link` (root first).
  const std::vector<int>& support(int link) const { return support_[link]; }

  int frame_index(const std::string& name) const {
    auto it = frame_lookup_.find(name);
    if (it == frame_lookup_.end()) throw UnknownFrame(name);
    return it->second;
  }
  const Frame& frame(const std::string& name) const { return frames_[frame_index(name)]; }
  int link_index(const std::string& name) const {
    for (int i = 0; i < num_links(); ++i)
      if (links_[i].name == name) return i;
    return -1;
  }
  int joint_index(const std::string& name) const {
    for (int j = 0; j < num_joints(); ++j)
      if (joints_[j].name == name) return j;
    return -1;
  }

 private:
  void validate() const {
    if (base_ < 0 || base_ >= num_links()) throw ValidationError("base", "base link does not exist");
    std::unordered_map<std::string, int> seen;
    for (const auto& l : links_) {
      if (!seen.emplace(l.name, 0).second) throw ValidationError(l.name, "duplicate link name");
      if (!(l.mass > 0.0)) throw ValidationError(l.name, "mass must be positive");
      if ((l.inertia - l.inertia.transpose()).norm() > 1e-12)
        throw ValidationError(l.name, "inertia is not symmetric");
      Eigen::LLT<Mat3> llt(l.inertia);
      if (llt.info() != Eigen::Success) throw ValidationError(l.name, "inertia is not positive definite");
    }
    std::vector<int> parent_count(links_.size(), 0);
    for (const auto& j : joints_) {
      if (j.parent < 0 || j.parent >= num_links() || j.child < 0 || j.child >= num_links())
        throw ValidationError(j.name, "joint references an unknown link");
      if (std::abs(j.axis.norm() - 1.0) > 1e-9) throw ValidationError(j.name, "axis must be unit norm");
      if (!is_valid_rotation(j.origin.rotation)) throw ValidationError(j.name, "origin rotation is invalid");
      if (j.lower > j.upper) throw ValidationError(j.name, "lower limit above upper limit");
      if (j.torque_limit < 0.0) throw ValidationError(j.name, "negative torque limit");
      ++parent_count[j.child];
    }
    for (int i = 0; i < num_links(); ++i) {
      if (i == base_ && parent_count[i] != 0) throw ValidationError(links_[i].name, "base link has a parent joint");
      if (i != base_ && parent_count[i] != 1)
        throw ValidationError(links_[i].name, "link must have exactly one parent joint");
    }
    for (const auto& f : frames_) {
      if (f.link < 0 || f.link >= num_links()) throw ValidationError(f.name, "frame attached to unknown link");
      if (!is_valid_rotation(f.offset.rotation)) throw ValidationError(f.name, "frame rotation is invalid");
    }
    for (const char* required : {"root", "l_sole", "r_sole"}) {
      const Frame* found = nullptr;
      for (const auto& f : frames_)
        if (f.name == required) found = &f;
      if (found == nullptr) throw ValidationError(required, "required frame is missing");
      if (std::string(required) != "root" &&
          (!found->foot || found->foot->half_length <= 0.0 || found->foot->half_width <= 0.0))
        throw ValidationError(required, "sole frame needs positive foot geometry");
    }
  }

  void build_topology() {
    const int nl = num_links();
    parent_joint_.assign(nl, -1);
    for (int j = 0; j < num_joints(); ++j) parent_joint_[joints_[j].child] = j;

    // Breadth-first from the base; anything unreachable sits on a cycle.
    std::vector<std::vector<int>> children(nl);
    for (int j = 0; j < num_joints(); ++j) children[joints_[j].parent].push_back(j);
    support_.assign(nl, {});
    std::vector<bool> reached(nl, false);
    std::vector<int> queue{base_};
    reached[base_] = true;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const int link = queue[head];
      for (int j : children[link]) {
        const int c = joints_[j].child;
        if (reached[c]) throw ValidationError(joints_[j].name, "kinematic loop");
        reached[c] = true;
        support_[c] = support_[link];
        support_[c].push_back(j);
        joint_order_.push_back(j);
        queue.push_back(c);
      }
    }
    for (int i = 0; i < nl; ++i)
      if (!reached[i]) throw ValidationError(links_[i].name, "link not connected to the base (cycle)");

    for (int f = 0; f < static_cast<int>(frames_.size()); ++f) {
      if (!frame_lookup_.emplace(frames_[f].name, f).second)
        throw ValidationError(frames_[f].name, "duplicate frame name");
    }
  }

  std::vector<Link> links_;
  std::vector<Joint> joints_;
  std::vector<Frame> frames_;
  int base_ = 0;
  std::vector<int> parent_joint_;
  std::vector<int> joint_order_;
  std::vector<std::vector<int>> support_;
  std::unordered_map<std::string, int> frame_lookup_;
};

/// q = (p_B, R_B, s).
struct Configuration {
  Pose base;
  VecX joints;

  static Configuration neutral(int n) { return {Pose::identity(), VecX::Zero(n)}; }
};

/// nu = (v_B, omega_B, sdot), base quantities in inertial coordinates.
struct Velocity {
  Vec3 base_linear = Vec3::Zero();
  Vec3 base_angular = Vec3::Zero();
  VecX joints;

  static Velocity zero(int n) { return {Vec3::Zero(), Vec3::Zero(), VecX::Zero(n)}; }

  VecX stacked() const {
    VecX v(6 + joints.size());
    v << base_linear, base_angular, joints;
    return v;
  }
  static Velocity from_stacked(const VecX& v) {
    return {v.segment<3>(0), v.segment<3>(3), v.tail(v.size() - 6)};
  }
};

/// Group operation on Q = R^3 x SO(3) x R^n.
inline Configuration configuration_compose(const Configuration& q, const Configuration& rho) {
  if (q.joints.size() != rho.joints.size())
    throw DimensionMismatch("configuration_compose: joint dimensions differ");
  Configuration out;
  out.base.position = q.base.position + rho.base.position;
  out.base.rotation = q.base.rotation * rho.base.rotation;
  out.joints = q.joints + rho.joints;
  return out;
}

/// Advances q along nu for dt with nu held constant: base rotation is
/// left-multiplied since omega_B is expressed in the inertial frame.
inline Configuration integrate(const Configuration& q, const VecX& nu, double dt) {
  Configuration out = q;
  out.base.position += nu.segment<3>(0) * dt;
  out.base.rotation = rotation_exp(nu.segment<3>(3), dt) * q.base.rotation;
  out.joints += nu.tail(nu.size() - 6) * dt;
  return out;
}

}  // namespace wbc
