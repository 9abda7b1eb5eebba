#include "edgelift/simkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "edgelift/errors.hpp"

namespace edgelift {

namespace {
using json = nlohmann::json;

constexpr double kRayEps = 1e-12;

struct LocalBox {
  Eigen::Vector3d center;
  Eigen::Vector3d half;
  double c, s;  // cos/sin of yaw
};

LocalBox to_local_box(const Box3D& b) {
  return {b.center, 0.5 * b.dims, std::cos(b.yaw), std::sin(b.yaw)};
}

// Slab test in the box's yaw-aligned frame. Returns the entry parameter t
// along the ray, or +inf on a miss. The camera is assumed outside the box.
double ray_box_hit(const LocalBox& box, const Eigen::Vector3d& origin,
                   const Eigen::Vector3d& dir) {
  const Eigen::Vector3d rel = origin - box.center;
  const Eigen::Vector3d o(box.c * rel.x() + box.s * rel.y(),
                          -box.s * rel.x() + box.c * rel.y(), rel.z());
  const Eigen::Vector3d d(box.c * dir.x() + box.s * dir.y(),
                          -box.s * dir.x() + box.c * dir.y(), dir.z());
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double h = box.half(axis);
    if (std::abs(d(axis)) < kRayEps) {
      if (std::abs(o(axis)) > h) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t1 = (-h - o(axis)) / d(axis);
    double t2 = (h - o(axis)) / d(axis);
    if (t1 > t2) std::swap(t1, t2);
    t_enter = std::max(t_enter, t1);
    t_exit = std::min(t_exit, t2);
  }
  if (t_enter > t_exit || t_enter <= 1e-9) {
    return std::numeric_limits<double>::infinity();
  }
  return t_enter;
}

// Nearest object hit along a pixel ray; -1 if nothing is hit. Depth (z-depth,
// since dir_cam.z == 1) returned through `depth`.
int cast_pixel_ray(const std::vector<LocalBox>& boxes, const Pose& pose,
                   const CameraIntrinsics& intr, double u, double v,
                   double& depth) {
  const Eigen::Vector3d dir_cam((u - intr.cx) / intr.fx,
                                (v - intr.cy) / intr.fy, 1.0);
  const Eigen::Vector3d dir = pose.rotation * dir_cam;
  int hit = -1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const double t = ray_box_hit(boxes[i], pose.translation, dir);
    if (t < best) {
      best = t;
      hit = static_cast<int>(i);
    }
  }
  depth = best;
  return hit;
}

}  // namespace

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::Parallel: return "parallel";
    case ScenarioKind::AwayClose: return "awayclose";
    case ScenarioKind::Circling: return "circling";
  }
  return "unknown";
}

ScenarioKind scenario_from_string(const std::string& name) {
  if (name == "parallel" || name == "1") return ScenarioKind::Parallel;
  if (name == "awayclose" || name == "2") return ScenarioKind::AwayClose;
  if (name == "circling" || name == "3") return ScenarioKind::Circling;
  throw config_error("unknown scenario: " + name);
}

Pose look_at_level(const Eigen::Vector3d& position,
                   const Eigen::Vector3d& target) {
  Eigen::Vector3d forward = target - position;
  forward.z() = 0.0;
  const double norm = forward.norm();
  if (norm < 1e-9) {
    throw config_error("look_at_level: camera on top of target");
  }
  forward /= norm;
  const Eigen::Vector3d up(0.0, 0.0, 1.0);
  const Eigen::Vector3d right = forward.cross(up);
  const Eigen::Vector3d down = forward.cross(right);
  Pose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = forward;
  pose.translation = position;
  return pose;
}

std::vector<std::pair<double, Pose>> make_trajectory(const TrajectorySpec& spec) {
  if (spec.speed <= 0.0 || spec.range <= 0.0 || spec.fps <= 0.0) {
    throw config_error("make_trajectory: speed, range and fps must be positive");
  }
  const double step = spec.speed / spec.fps;
  const int n = static_cast<int>(std::llround(spec.range / spec.speed * spec.fps)) + 1;
  std::vector<std::pair<double, Pose>> out;
  out.reserve(static_cast<std::size_t>(n));

  const Eigen::Vector3d& target = spec.target;
  switch (spec.scenario) {
    case ScenarioKind::Parallel: {
      // Camera slides along world X; the camera->target direction is +Y.
      for (int k = 0; k < n; ++k) {
        const Eigen::Vector3d pos(target.x() - 0.5 * spec.range + k * step,
                                  target.y() - spec.standoff,
                                  spec.camera_height);
        out.emplace_back(k / spec.fps, look_at_level(pos, target));
      }
      break;
    }
    case ScenarioKind::AwayClose: {
      for (int k = 0; k < n; ++k) {
        const double dist = spec.standoff - k * step;
        const Eigen::Vector3d pos(target.x(), target.y() - dist,
                                  spec.camera_height);
        out.emplace_back(k / spec.fps, look_at_level(pos, target));
      }
      break;
    }
    case ScenarioKind::Circling: {
      if (spec.radius < 0.5 || spec.radius > 10.0) {
        throw config_error("make_trajectory: circling radius outside [0.5, 10]");
      }
      const double dz = spec.camera_height - target.z();
      const double rh_sq = spec.radius * spec.radius - dz * dz;
      if (rh_sq <= 1e-9) {
        throw config_error(
            "make_trajectory: circling radius must exceed the camera height "
            "offset above the target");
      }
      const double rh = std::sqrt(rh_sq);
      // Chord length per frame equals speed/fps exactly.
      const double dtheta = 2.0 * std::asin(std::min(1.0, step / (2.0 * rh)));
      for (int k = 0; k < n; ++k) {
        const double theta = -M_PI / 2.0 + k * dtheta;
        const Eigen::Vector3d pos(target.x() + rh * std::cos(theta),
                                  target.y() + rh * std::sin(theta),
                                  spec.camera_height);
        out.emplace_back(k / spec.fps, look_at_level(pos, target));
      }
      break;
    }
  }
  return out;
}

DepthFrame render_depth(const Scene& scene, const Pose& pose,
                        const CameraIntrinsics& intr, const NoiseSpec& noise,
                        std::uint64_t rng_seed) {
  DepthFrame frame;
  frame.width = intr.width;
  frame.height = intr.height;
  frame.intrinsics = intr;
  frame.pose = pose;
  frame.depth.assign(static_cast<std::size_t>(intr.width) * intr.height, 0.0f);

  std::vector<LocalBox> boxes;
  boxes.reserve(scene.objects.size());
  for (const auto& obj : scene.objects) boxes.push_back(to_local_box(obj.box));

  std::vector<int> id_map(frame.depth.size(), -1);
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      double depth;
      const int hit = cast_pixel_ray(boxes, pose, intr, u, v, depth);
      if (hit >= 0) {
        const std::size_t idx = static_cast<std::size_t>(v) * intr.width + u;
        frame.depth[idx] = static_cast<float>(depth);
        id_map[idx] = hit;
      }
    }
  }

  const bool any_noise = noise.depth_noise_m > 0.0 || noise.depth_dropout > 0.0 ||
                         noise.edge_dropout_band_px > 0.0;
  if (any_noise) {
    // Silhouette band: pixels whose neighborhood within the band radius
    // crosses an object-id boundary.
    std::vector<bool> edge_band(frame.depth.size(), false);
    const int band = static_cast<int>(std::ceil(noise.edge_dropout_band_px));
    if (band > 0) {
      for (int v = 0; v < intr.height; ++v) {
        for (int u = 0; u < intr.width; ++u) {
          const std::size_t idx = static_cast<std::size_t>(v) * intr.width + u;
          const int id = id_map[idx];
          if (id < 0) continue;
          bool boundary = false;
          for (int dv = -band; dv <= band && !boundary; ++dv) {
            for (int du = -band; du <= band && !boundary; ++du) {
              const int uu = u + du, vv = v + dv;
              if (uu < 0 || vv < 0 || uu >= intr.width || vv >= intr.height) {
                boundary = true;
                continue;
              }
              if (id_map[static_cast<std::size_t>(vv) * intr.width + uu] != id) {
                boundary = true;
              }
            }
          }
          edge_band[idx] = boundary;
        }
      }
    }
    std::mt19937_64 rng(rng_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t idx = 0; idx < frame.depth.size(); ++idx) {
      if (id_map[idx] < 0) continue;
      const double dropout = edge_band[idx]
                                 ? std::max(noise.depth_dropout, noise.edge_dropout_prob)
                                 : noise.depth_dropout;
      if (dropout > 0.0 && unit(rng) < dropout) {
        frame.depth[idx] = 0.0f;
        continue;
      }
      if (noise.depth_noise_m > 0.0) {
        const double z = frame.depth[idx] + noise.depth_noise_m * gauss(rng);
        frame.depth[idx] = static_cast<float>(std::max(z, 0.0));
      }
    }
  }
  return frame;
}

std::vector<Box2D> oracle_detect2d(const Scene& scene, const Pose& pose,
                                   const CameraIntrinsics& intr,
                                   const NoiseSpec& noise,
                                   std::uint64_t rng_seed) {
  std::vector<LocalBox> boxes;
  boxes.reserve(scene.objects.size());
  for (const auto& obj : scene.objects) boxes.push_back(to_local_box(obj.box));

  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Box2D> detections;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& obj = scene.objects[i];
    double u_lo = std::numeric_limits<double>::infinity();
    double v_lo = u_lo;
    double u_hi = -u_lo, v_hi = -u_lo;
    int in_front = 0;
    for (const auto& corner : box3d_corners(obj.box)) {
      const Eigen::Vector3d p = pose.to_camera(corner);
      if (p.z() <= 1e-6) continue;
      const Eigen::Vector2d uv = project(intr, p);
      u_lo = std::min(u_lo, uv.x());
      u_hi = std::max(u_hi, uv.x());
      v_lo = std::min(v_lo, uv.y());
      v_hi = std::max(v_hi, uv.y());
      ++in_front;
    }
    if (in_front == 0) continue;
    Box2D det;
    det.u_min = std::clamp(u_lo, 0.0, static_cast<double>(intr.width));
    det.u_max = std::clamp(u_hi, 0.0, static_cast<double>(intr.width));
    det.v_min = std::clamp(v_lo, 0.0, static_cast<double>(intr.height));
    det.v_max = std::clamp(v_hi, 0.0, static_cast<double>(intr.height));
    if (det.width() < 4.0 || det.height() < 4.0) continue;

    // Occlusion: center-pixel visibility only.
    double depth;
    const int center_hit =
        cast_pixel_ray(boxes, pose, intr, 0.5 * (det.u_min + det.u_max),
                       0.5 * (det.v_min + det.v_max), depth);
    if (center_hit >= 0 && center_hit != static_cast<int>(i)) continue;

    if (noise.bbox_jitter_px > 0.0) {
      det.u_min += noise.bbox_jitter_px * gauss(rng);
      det.v_min += noise.bbox_jitter_px * gauss(rng);
      det.u_max += noise.bbox_jitter_px * gauss(rng);
      det.v_max += noise.bbox_jitter_px * gauss(rng);
      if (det.u_min > det.u_max) std::swap(det.u_min, det.u_max);
      if (det.v_min > det.v_max) std::swap(det.v_min, det.v_max);
      det.u_min = std::clamp(det.u_min, 0.0, static_cast<double>(intr.width) - 1.0);
      det.v_min = std::clamp(det.v_min, 0.0, static_cast<double>(intr.height) - 1.0);
      det.u_max = std::clamp(det.u_max, det.u_min + 1.0, static_cast<double>(intr.width));
      det.v_max = std::clamp(det.v_max, det.v_min + 1.0, static_cast<double>(intr.height));
    }
    if (noise.drop_prob > 0.0 && unit(rng) < noise.drop_prob) continue;

    det.class_id = obj.class_id;
    det.confidence = 1.0 - noise.drop_prob;
    if (noise.bbox_jitter_px > 0.0) {
      det.confidence = std::clamp(det.confidence + 0.02 * gauss(rng), 0.05, 1.0);
    }
    detections.push_back(det);
  }
  return detections;
}

double delay(const LatencySpec& lat, double send_time, std::uint64_t rng_seed) {
  double jitter = 0.0;
  if (lat.jitter > 0.0) {
    std::mt19937_64 rng(rng_seed);
    jitter = std::uniform_real_distribution<double>(-lat.jitter, lat.jitter)(rng);
  }
  return std::max(send_time,
                  send_time + lat.fixed + lat.model_compute + jitter);
}

CameraIntrinsics default_depth_intrinsics() {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 270.0;
  intr.cx = intr.cy = 180.0;
  intr.width = intr.height = 360;
  return intr;
}

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = {
      "table", "chair", "bottle", "box", "book", "desk", "bag", "tv"};
  return names;
}

int class_id_from_name(const std::string& name) {
  const auto& names = class_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  throw config_error("unknown class name: " + name);
}

Eigen::Vector3d class_dims(int class_id) {
  static const std::vector<Eigen::Vector3d> dims = {
      {1.20, 0.80, 0.75},  // table
      {0.50, 0.50, 0.90},  // chair
      {0.08, 0.08, 0.25},  // bottle
      {0.40, 0.30, 0.30},  // box
      {0.25, 0.20, 0.05},  // book
      {1.40, 0.70, 0.75},  // desk
      {0.35, 0.20, 0.45},  // bag
      {1.00, 0.05, 0.60},  // tv
  };
  if (class_id < 0 || class_id >= static_cast<int>(dims.size())) {
    throw config_error("unknown class id: " + std::to_string(class_id));
  }
  return dims[static_cast<std::size_t>(class_id)];
}

Scene load_scene(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open scene file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw parse_error(path + ": " + e.what());
  }
  Scene scene;
  scene.floor_height = j.value("floor_height", 0.0);
  for (const auto& item : j.at("objects")) {
    SceneObject obj;
    if (item.at("class").is_string()) {
      obj.class_id = class_id_from_name(item.at("class").get<std::string>());
    } else {
      obj.class_id = item.at("class").get<int>();
    }
    const auto& c = item.at("center");
    obj.box.center = {c.at(0).get<double>(), c.at(1).get<double>(),
                      c.at(2).get<double>()};
    if (item.contains("dims")) {
      const auto& d = item.at("dims");
      obj.box.dims = {d.at(0).get<double>(), d.at(1).get<double>(),
                      d.at(2).get<double>()};
    } else {
      obj.box.dims = class_dims(obj.class_id);
    }
    obj.box.yaw = normalize_angle(item.value("yaw", 0.0));
    if (obj.box.dims.minCoeff() <= 0.0) {
      throw config_error(path + ": object dims must be positive");
    }
    scene.objects.push_back(obj);
  }
  return scene;
}

void save_scene(const std::string& path, const Scene& scene) {
  json j;
  j["floor_height"] = scene.floor_height;
  j["objects"] = json::array();
  for (const auto& obj : scene.objects) {
    json item;
    item["class"] = class_names().at(static_cast<std::size_t>(obj.class_id));
    item["center"] = {obj.box.center.x(), obj.box.center.y(), obj.box.center.z()};
    item["dims"] = {obj.box.dims.x(), obj.box.dims.y(), obj.box.dims.z()};
    item["yaw"] = obj.box.yaw;
    j["objects"].push_back(item);
  }
  std::ofstream os(path);
  if (!os) throw config_error("cannot write scene file: " + path);
  os << j.dump(2) << "\n";
}

Scene make_acceptance_scene() {
  Scene scene;
  auto add = [&scene](const std::string& cls, double x, double y, double yaw) {
    SceneObject obj;
    obj.class_id = class_id_from_name(cls);
    obj.box.dims = class_dims(obj.class_id);
    obj.box.center = {x, y, obj.box.dims.z() / 2.0};
    obj.box.yaw = yaw;
    scene.objects.push_back(obj);
  };
  // Objects rest on the floor, spread laterally so a camera sweeping along X
  // at standoff ~2 m sees them all without mutual occlusion.
  // Nonzero yaws keep every face off-axis from the straight-on approach
  // path, so no face degenerates to a constant-depth plane.
  add("chair", -0.85, 0.10, 0.40);
  add("box", -0.20, -0.15, -0.30);
  add("bottle", 0.15, 0.25, 0.35);
  add("bag", 0.60, 0.00, 0.55);
  return scene;
}

}  // namespace edgelift
