#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "geopo/defaults.hpp"
#include "geopo/errors.hpp"

namespace geopo {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

inline double deg_to_rad(double d) { return d * (kPi / 180.0); }
inline double rad_to_deg(double r) { return r * (180.0 / kPi); }

// Heading in [0, 360). 0 = +x, counterclockwise positive.
inline double normalize_heading(double h) {
  h = std::fmod(h, 360.0);
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h = 0.0;  // fmod can land exactly on 360 after the += above
  return h;
}

// Relative angle in (-180, 180].
inline double normalize_relative(double a) {
  a = std::fmod(a, 360.0);
  if (a > 180.0) a -= 360.0;
  if (a <= -180.0) a += 360.0;
  return a;
}

enum class ActionKind { Forward, Left, Right };

inline const char* action_kind_name(ActionKind k) {
  switch (k) {
    case ActionKind::Forward: return "forward";
    case ActionKind::Left: return "left";
    case ActionKind::Right: return "right";
  }
  return "?";
}

// One imagined move: translate along the current heading (meters) or rotate
// in place (degrees). Left is the positive (counterclockwise) rotation.
struct PrimitiveAction {
  ActionKind kind = ActionKind::Forward;
  double magnitude = 0.0;

  bool operator==(const PrimitiveAction&) const = default;
};

// Discretized action grids. Declaration order is the candidate order; the
// largest stride leads so that tie-broken greedy rollouts commit to decisive
// moves (all forward magnitudes share one feature vector).
inline constexpr std::array<double, 4> kForwardGrid = {1.0, 0.75, 0.5, 0.25};
inline constexpr std::array<double, 4> kTurnGrid = {15.0, 30.0, 45.0, 90.0};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading_deg = 0.0;  // invariant: in [0, 360)

  bool operator==(const Pose&) const = default;
};

struct SceneObject {
  int id = 0;
  std::string label;
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;

  bool operator==(const SceneObject&) const = default;
};

struct Rect {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;

  bool operator==(const Rect&) const = default;
};

struct Scene {
  std::vector<SceneObject> objects;
  Rect bounds;

  bool operator==(const Scene&) const = default;

  const SceneObject* find(int id) const {
    for (const auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
  const SceneObject* find_label(const std::string& label) const {
    for (const auto& o : objects)
      if (o.label == label) return &o;
    return nullptr;
  }
};

struct VisibleObject {
  int id = 0;
  double bearing_deg = 0.0;  // relative to viewer heading, (-180, 180]
  double distance = 0.0;

  bool operator==(const VisibleObject&) const = default;
};

struct Observation {
  std::vector<VisibleObject> visible;  // sorted by (|bearing|, distance, id)
  std::vector<int> occluded_ids;       // in-view but shadowed; ascending

  bool operator==(const Observation&) const = default;

  bool sees(int id) const {
    for (const auto& v : visible)
      if (v.id == id) return true;
    return false;
  }
};

inline void validate_action(const PrimitiveAction& a) {
  if (!(a.magnitude > 0.0) || !std::isfinite(a.magnitude))
    throw InvalidActionError(std::string(action_kind_name(a.kind)) +
                             " action requires a positive finite magnitude");
}

inline Pose apply_action(const Pose& p, const PrimitiveAction& a) {
  validate_action(a);
  Pose out = p;
  switch (a.kind) {
    case ActionKind::Forward: {
      double rad = deg_to_rad(p.heading_deg);
      out.x += a.magnitude * std::cos(rad);
      out.y += a.magnitude * std::sin(rad);
      break;
    }
    case ActionKind::Left:
      out.heading_deg = normalize_heading(p.heading_deg + a.magnitude);
      break;
    case ActionKind::Right:
      out.heading_deg = normalize_heading(p.heading_deg - a.magnitude);
      break;
  }
  return out;
}

inline Pose pose_after(Pose p, std::span<const PrimitiveAction> actions) {
  for (const auto& a : actions) p = apply_action(p, a);
  return p;
}

// Absolute bearing from (x,y) toward a point, in degrees.
inline double absolute_bearing(double from_x, double from_y, double to_x,
                               double to_y) {
  return rad_to_deg(std::atan2(to_y - from_y, to_x - from_x));
}

// Bearing of a point relative to the pose heading, in (-180, 180].
inline double relative_bearing(const Pose& p, double to_x, double to_y) {
  return normalize_relative(absolute_bearing(p.x, p.y, to_x, to_y) -
                            p.heading_deg);
}

// How much the action rotates/advances toward bearing beta (degrees): the
// reduction in |bearing| per unit of turn, or cos(beta) for forward motion.
inline double alignment(const PrimitiveAction& a, double beta) {
  switch (a.kind) {
    case ActionKind::Forward:
      return std::cos(deg_to_rad(beta));
    case ActionKind::Left:
      return (std::fabs(beta) -
              std::fabs(normalize_relative(beta - a.magnitude))) /
             a.magnitude;
    case ActionKind::Right:
      return (std::fabs(beta) -
              std::fabs(normalize_relative(beta + a.magnitude))) /
             a.magnitude;
  }
  return 0.0;
}

// Deterministic line-of-sight render. An object is in view when its center
// bearing falls inside the fov cone and its center is within max_range. An
// in-view object B is occluded when some strictly nearer in-view object A
// shadows it: |bearing(A) - bearing(B)| <= asin(min(1, radius(A)/dist(A)))
// in degrees, the plain numeric gap (the fov cone never spans the +/-180
// seam widely enough for wraparound to matter at these scales).
inline Observation render(const Scene& scene, const Pose& pose,
                          double fov_deg = kDefaultFovDeg,
                          double max_range = kDefaultMaxRange) {
  struct InView {
    int id;
    double bearing;
    double dist;
    double radius;
  };
  std::vector<InView> in_view;
  for (const auto& o : scene.objects) {
    double dist = std::hypot(o.x - pose.x, o.y - pose.y);
    double bearing = relative_bearing(pose, o.x, o.y);
    if (std::fabs(bearing) <= fov_deg / 2.0 && dist <= max_range)
      in_view.push_back({o.id, bearing, dist, o.radius});
  }

  Observation obs;
  for (const auto& b : in_view) {
    bool occluded = false;
    for (const auto& a : in_view) {
      if (a.id == b.id || !(a.dist < b.dist)) continue;
      double shadow =
          rad_to_deg(std::asin(std::min(1.0, a.radius / a.dist)));
      if (std::fabs(a.bearing - b.bearing) <= shadow) {
        occluded = true;
        break;
      }
    }
    if (occluded)
      obs.occluded_ids.push_back(b.id);
    else
      obs.visible.push_back({b.id, b.bearing, b.dist});
  }

  std::sort(obs.visible.begin(), obs.visible.end(),
            [](const VisibleObject& l, const VisibleObject& r) {
              double la = std::fabs(l.bearing_deg), ra = std::fabs(r.bearing_deg);
              if (la != ra) return la < ra;
              if (l.distance != r.distance) return l.distance < r.distance;
              return l.id < r.id;
            });
  std::sort(obs.occluded_ids.begin(), obs.occluded_ids.end());
  return obs;
}

// ---- scene JSON ----

inline nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : s.objects)
    objs.push_back({{"id", o.id},
                    {"label", o.label},
                    {"x", o.x},
                    {"y", o.y},
                    {"radius", o.radius}});
  return {{"objects", objs},
          {"bounds", {s.bounds.min_x, s.bounds.min_y, s.bounds.max_x,
                      s.bounds.max_y}}};
}

inline Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  try {
    const auto& b = j.at("bounds");
    if (!b.is_array() || b.size() != 4)
      throw IoError("scene bounds must be [min_x, min_y, max_x, max_y]");
    s.bounds = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                b[3].get<double>()};
    for (const auto& jo : j.at("objects")) {
      SceneObject o;
      o.id = jo.at("id").get<int>();
      o.label = jo.at("label").get<std::string>();
      o.x = jo.at("x").get<double>();
      o.y = jo.at("y").get<double>();
      o.radius = jo.at("radius").get<double>();
      s.objects.push_back(std::move(o));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed scene json: ") + e.what());
  }
  return s;
}

inline nlohmann::json pose_to_json(const Pose& p) {
  return {{"x", p.x}, {"y", p.y}, {"heading", p.heading_deg}};
}

inline Pose pose_from_json(const nlohmann::json& j) {
  try {
    return {j.at("x").get<double>(), j.at("y").get<double>(),
            j.at("heading").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed pose json: ") + e.what());
  }
}

}  // namespace geopo
