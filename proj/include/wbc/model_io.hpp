#pragma once

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <json.hpp>

#include "wbc/model.hpp"

namespace wbc {

namespace detail {

using json = nlohmann::json;

inline void require_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed,
                         std::initializer_list<const char*> required) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) known = known || it.key() == a;
    if (!known) throw ParseError(where + ": unknown key '" + it.key() + "'");
  }
  for (const char* r : required)
    if (!obj.contains(r)) throw ParseError(where + ": missing key '" + std::string(r) + "'");
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  return j.get<double>();
}

inline Vec3 vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ParseError(where + ": expected an array of 3 numbers");
  return {number(j[0], where), number(j[1], where), number(j[2], where)};
}

inline std::string text(const json& j, const std::string& where) {
  if (!j.is_string()) throw ParseError(where + ": expected a string");
  return j.get<std::string>();
}

// {"xyz": [..], "rotvec": [..]}, both optional.
inline Pose pose(const json& j, const std::string& where) {
  require_keys(j, where, {"xyz", "rotvec"}, {});
  Pose p;
  if (j.contains("xyz")) p.position = vec3(j["xyz"], where + ".xyz");
  if (j.contains("rotvec")) p.rotation = exp_so3(vec3(j["rotvec"], where + ".rotvec"));
  return p;
}

inline json parse_json(const std::string& text_doc, const std::string& what) {
  try {
    return json::parse(text_doc);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Parses a model document. Link and joint order follow the document.
inline RobotModel load_model(const std::string& document) {
  using detail::json;
  const json doc = detail::parse_json(document, "model");
  detail::require_keys(doc, "model", {"links", "joints", "frames", "base"}, {"links", "joints", "frames", "base"});
  if (!doc["links"].is_array() || !doc["joints"].is_array() || !doc["frames"].is_array())
    throw ParseError("model: links, joints and frames must be arrays");

  std::vector<Link> links;
  for (const auto& lj : doc["links"]) {
    detail::require_keys(lj, "link", {"name", "mass", "com", "inertia"}, {"name", "mass", "inertia"});
    Link l;
    l.name = detail::text(lj["name"], "link.name");
    const std::string where = "link '" + l.name + "'";
    l.mass = detail::number(lj["mass"], where + ".mass");
    if (lj.contains("com")) l.com = detail::vec3(lj["com"], where + ".com");
    const auto& in = lj["inertia"];
    if (!in.is_array() || in.size() != 6) throw ParseError(where + ".inertia: expected 6 entries");
    double e[6];
    for (int k = 0; k < 6; ++k) e[k] = detail::number(in[k], where + ".inertia");
    // ixx ixy ixz iyy iyz izz
    l.inertia << e[0], e[1], e[2], e[1], e[3], e[4], e[2], e[4], e[5];
    links.push_back(std::move(l));
  }
  auto link_id = [&](const std::string& name, const std::string& where) {
    for (int i = 0; i < static_cast<int>(links.size()); ++i)
      if (links[i].name == name) return i;
    throw ValidationError(where, "unknown link '" + name + "'");
  };

  std::vector<Joint> joints;
  for (const auto& jj : doc["joints"]) {
    detail::require_keys(jj, "joint", {"name", "parent", "child", "axis", "origin", "limits", "torque_limit"},
                         {"name", "parent", "child", "axis"});
    Joint j;
    j.name = detail::text(jj["name"], "joint.name");
    const std::string where = "joint '" + j.name + "'";
    j.parent = link_id(detail::text(jj["parent"], where + ".parent"), j.name);
    j.child = link_id(detail::text(jj["child"], where + ".child"), j.name);
    j.axis = detail::vec3(jj["axis"], where + ".axis");
    if (jj.contains("origin")) j.origin = detail::pose(jj["origin"], where + ".origin");
    if (jj.contains("limits")) {
      const auto& lim = jj["limits"];
      if (!lim.is_array() || lim.size() != 2) throw ParseError(where + ".limits: expected [lower, upper]");
      j.lower = detail::number(lim[0], where + ".limits");
      j.upper = detail::number(lim[1], where + ".limits");
    }
    if (jj.contains("torque_limit")) j.torque_limit = detail::number(jj["torque_limit"], where + ".torque_limit");
    joints.push_back(std::move(j));
  }

  std::vector<Frame> frames;
  for (const auto& fj : doc["frames"]) {
    detail::require_keys(fj, "frame", {"name", "link", "origin", "foot"}, {"name", "link"});
    Frame f;
    f.name = detail::text(fj["name"], "frame.name");
    const std::string where = "frame '" + f.name + "'";
    f.link = link_id(detail::text(fj["link"], where + ".link"), f.name);
    if (fj.contains("origin")) f.offset = detail::pose(fj["origin"], where + ".origin");
    if (fj.contains("foot")) {
      detail::require_keys(fj["foot"], where + ".foot", {"half_length", "half_width"}, {"half_length", "half_width"});
      f.foot = FootGeometry{detail::number(fj["foot"]["half_length"], where + ".foot.half_length"),
                            detail::number(fj["foot"]["half_width"], where + ".foot.half_width")};
    }
    frames.push_back(std::move(f));
  }

  const int base = link_id(detail::text(doc["base"], "model.base"), "base");
  return RobotModel(std::move(links), std::move(joints), std::move(frames), base);
}

inline RobotModel load_model_file(const std::string& path) { return load_model(detail::read_file(path)); }

}  // namespace wbc
