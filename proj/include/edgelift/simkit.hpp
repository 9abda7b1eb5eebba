#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "edgelift/depthlift.hpp"
#include "edgelift/geometry.hpp"

namespace edgelift {

struct SceneObject {
  int class_id = 0;
  Box3D box;
};

struct Scene {
  std::vector<SceneObject> objects;
  double floor_height = 0.0;
};

enum class ScenarioKind { Parallel, AwayClose, Circling };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_from_string(const std::string& name);

struct TrajectorySpec {
  ScenarioKind scenario = ScenarioKind::Parallel;
  double speed = 1.0;          // m/s
  double range = 2.0;          // path length, meters
  double radius = 1.5;         // circling: camera-to-target distance, meters
  double fps = 30.0;
  Eigen::Vector3d target{0.0, 0.0, 0.5};  // point the camera looks at
  double standoff = 2.0;       // horizontal distance camera<->target at start
  double camera_height = 1.5;  // meters above the world origin plane
};

struct NoiseSpec {
  double bbox_jitter_px = 0.0;
  double drop_prob = 0.0;
  double depth_noise_m = 0.0;
  double depth_dropout = 0.0;
  double edge_dropout_band_px = 0.0;  // band at object silhouettes
  double edge_dropout_prob = 0.8;
};

struct LatencySpec {
  double fixed = 0.0;          // network latency, seconds
  double jitter = 0.0;         // uniform half-width, seconds
  double model_compute = 0.0;  // emulated detector compute, seconds
};

// Gravity-aligned level camera looking horizontally toward `target`'s XY
// position from `position`.
Pose look_at_level(const Eigen::Vector3d& position,
                   const Eigen::Vector3d& target);

// Timestamped camera path at 1/fps spacing.
//  Parallel  - straight line perpendicular to the camera->target direction.
//  AwayClose - straight line along the camera->target direction.
//  Circling  - arc around the target at 3D distance `radius`; the camera
//              stays at camera_height, so the horizontal circle radius is
//              sqrt(radius^2 - dz^2).
std::vector<std::pair<double, Pose>> make_trajectory(const TrajectorySpec& spec);

// Per-pixel ray cast against every object box (slab test in the box's
// yaw-aligned frame); nearest positive hit wins. Depth values are z-depth
// along the optical axis. Objects only; the floor gives no return.
DepthFrame render_depth(const Scene& scene, const Pose& pose,
                        const CameraIntrinsics& intr, const NoiseSpec& noise,
                        std::uint64_t rng_seed);

// Projected-corner AABB detector standing in for an edge-side 2D DNN.
std::vector<Box2D> oracle_detect2d(const Scene& scene, const Pose& pose,
                                   const CameraIntrinsics& intr,
                                   const NoiseSpec& noise,
                                   std::uint64_t rng_seed);

// arrival = send + fixed + model_compute + U(-jitter, +jitter), never before
// send_time.
double delay(const LatencySpec& lat, double send_time, std::uint64_t rng_seed);

// Default depth sensor: 360x360 at fx=fy=270 (~67 deg FOV).
CameraIntrinsics default_depth_intrinsics();

const std::vector<std::string>& class_names();
int class_id_from_name(const std::string& name);
// Canonical object dimensions per class (plumbing defaults, overridable via
// scene files).
Eigen::Vector3d class_dims(int class_id);

Scene load_scene(const std::string& path);
void save_scene(const std::string& path, const Scene& scene);

// Tabletop room used by the integration and acceptance suites: a handful of
// objects spread laterally, tops below the default camera height.
Scene make_acceptance_scene();

}  // namespace edgelift
