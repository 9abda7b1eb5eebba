#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "edgelift/errors.hpp"
#include "edgelift/simkit.hpp"

using namespace edgelift;

namespace {

// Independent per-face ray-box intersection: intersect the ray with each of
// the six face planes in the box's yaw-aligned frame, accept points inside
// the face bounds, take the nearest.
double face_oracle(const Box3D& box, const Eigen::Vector3d& origin,
                   const Eigen::Vector3d& dir) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Eigen::Vector3d rel = origin - box.center;
  const Eigen::Vector3d o(c * rel.x() + s * rel.y(),
                          -s * rel.x() + c * rel.y(), rel.z());
  const Eigen::Vector3d d(c * dir.x() + s * dir.y(),
                          -s * dir.x() + c * dir.y(), dir.z());
  const Eigen::Vector3d half = 0.5 * box.dims;

  double best = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(d(axis)) < 1e-12) continue;
    for (double sign : {-1.0, 1.0}) {
      const double t = (sign * half(axis) - o(axis)) / d(axis);
      if (t <= 1e-9) continue;
      const Eigen::Vector3d p = o + t * d;
      bool inside = true;
      for (int other = 0; other < 3; ++other) {
        if (other == axis) continue;
        if (std::abs(p(other)) > half(other) + 1e-12) inside = false;
      }
      if (inside) best = std::min(best, t);
    }
  }
  return best;
}

double scene_oracle(const Scene& scene, const Pose& pose,
                    const CameraIntrinsics& intr, double u, double v) {
  const Eigen::Vector3d dir_cam((u - intr.cx) / intr.fx,
                                (v - intr.cy) / intr.fy, 1.0);
  const Eigen::Vector3d dir = pose.rotation * dir_cam;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& obj : scene.objects) {
    best = std::min(best, face_oracle(obj.box, pose.translation, dir));
  }
  return best;  // z-depth: dir_cam.z == 1
}

}  // namespace

TEST_CASE("scenario names") {
  for (ScenarioKind kind : {ScenarioKind::Parallel, ScenarioKind::AwayClose,
                            ScenarioKind::Circling}) {
    CHECK(scenario_from_string(to_string(kind)) == kind);
  }
  CHECK(scenario_from_string("1") == ScenarioKind::Parallel);
  CHECK(scenario_from_string("2") == ScenarioKind::AwayClose);
  CHECK(scenario_from_string("3") == ScenarioKind::Circling);
  CHECK_THROWS_AS(scenario_from_string("zigzag"), config_error);
}

TEST_CASE("look_at_level is level and rigid") {
  const Pose pose = look_at_level({1.0, -2.0, 1.5}, {0.0, 0.0, 0.5});
  CHECK(pose.is_rigid(1e-12));
  // Camera-down axis is world-down: gravity aligned.
  CHECK(pose.rotation.col(1).isApprox(Eigen::Vector3d(0, 0, -1), 1e-12));
  // Forward axis is horizontal and points toward the target's XY position.
  const Eigen::Vector3d fwd = pose.rotation.col(2);
  CHECK(fwd.z() == doctest::Approx(0.0));
  CHECK(fwd.dot(Eigen::Vector3d(-1.0, 2.0, 0.0).normalized()) ==
        doctest::Approx(1.0));
  CHECK_THROWS_AS(look_at_level({0, 0, 2}, {0, 0, 0}), config_error);
}

TEST_CASE("parallel trajectory: 61 poses over 2 seconds, target centered") {
  TrajectorySpec spec;
  spec.scenario = ScenarioKind::Parallel;
  spec.speed = 1.0;
  spec.range = 2.0;
  spec.fps = 30.0;
  const auto traj = make_trajectory(spec);
  REQUIRE(traj.size() == 61);
  CHECK(traj.front().first == doctest::Approx(0.0));
  CHECK(traj.back().first == doctest::Approx(2.0));

  const auto intr = default_depth_intrinsics();
  for (const auto& [ts, pose] : traj) {
    // Motion is perpendicular to the (initial) camera->target direction.
    CHECK(pose.translation.y() == doctest::Approx(spec.target.y() - spec.standoff));
    // Camera yawed to keep the target horizontally centered.
    const Eigen::Vector2d uv = project(intr, pose.to_camera(spec.target));
    CHECK(uv.x() == doctest::Approx(intr.cx).epsilon(1e-9));
  }
  const double span = (traj.back().second.translation -
                       traj.front().second.translation).norm();
  CHECK(span == doctest::Approx(2.0));
}

TEST_CASE("awayclose trajectory covers the range") {
  TrajectorySpec spec;
  spec.scenario = ScenarioKind::AwayClose;
  spec.speed = 1.0;
  spec.range = 2.0;
  spec.standoff = 3.0;
  const auto traj = make_trajectory(spec);
  const Eigen::Vector3d final_pos = traj.back().second.translation;
  const double horiz =
      (final_pos.head<2>() - spec.target.head<2>()).norm();
  CHECK(horiz == doctest::Approx(1.0));
  const double start =
      (traj.front().second.translation.head<2>() - spec.target.head<2>()).norm();
  CHECK(start == doctest::Approx(3.0));
}

TEST_CASE("circling trajectory keeps constant distance to the target") {
  TrajectorySpec spec;
  spec.scenario = ScenarioKind::Circling;
  spec.radius = 1.5;
  spec.camera_height = 0.9;
  spec.target = {0.3, -0.2, 0.4};
  const auto traj = make_trajectory(spec);
  for (const auto& [ts, pose] : traj) {
    const double dist = (pose.translation - spec.target).norm();
    CHECK(std::abs(dist - 1.5) <= 1e-9);
  }

  spec.radius = 0.3;
  CHECK_THROWS_AS(make_trajectory(spec), config_error);
  spec.radius = 12.0;
  CHECK_THROWS_AS(make_trajectory(spec), config_error);
  // Radius smaller than the height offset above the target: no circle exists.
  spec.radius = 0.6;
  spec.camera_height = 2.0;
  CHECK_THROWS_AS(make_trajectory(spec), config_error);
}

TEST_CASE("trajectory speed invariant") {
  for (ScenarioKind kind : {ScenarioKind::Parallel, ScenarioKind::AwayClose,
                            ScenarioKind::Circling}) {
    for (double speed : {0.5, 1.0, 2.0}) {
      TrajectorySpec spec;
      spec.scenario = kind;
      spec.speed = speed;
      spec.camera_height = 1.2;
      spec.radius = 2.0;
      spec.standoff = 3.0;  // keep the approach from ending on the target
      const auto traj = make_trajectory(spec);
      REQUIRE(traj.size() >= 2);
      const double step = speed / spec.fps;
      for (std::size_t i = 1; i < traj.size(); ++i) {
        const double moved = (traj[i].second.translation -
                              traj[i - 1].second.translation).norm();
        CHECK(std::abs(moved - step) <= 1e-9);
        CHECK(traj[i].first - traj[i - 1].first ==
              doctest::Approx(1.0 / spec.fps));
      }
    }
  }
}

TEST_CASE("render_depth center-pixel fixture") {
  Scene scene;
  SceneObject cube;
  cube.class_id = 3;
  cube.box.center = {0.0, 0.0, 2.0};
  cube.box.dims = {1.0, 1.0, 1.0};
  scene.objects.push_back(cube);

  // Identity pose: camera forward is world +Z, cube dead ahead.
  const auto intr = default_depth_intrinsics();
  const DepthFrame frame = render_depth(scene, Pose{}, intr, NoiseSpec{}, 1);
  CHECK(frame.at(180, 180) == doctest::Approx(1.5));
  CHECK(frame.valid_at(180, 180));

  const DepthFrame empty = render_depth(Scene{}, Pose{}, intr, NoiseSpec{}, 1);
  for (float z : empty.depth) CHECK(z == 0.0f);
}

TEST_CASE("render_depth matches the per-face oracle") {
  Scene scene = make_acceptance_scene();
  const Pose pose = look_at_level({0.4, -2.0, 1.5}, {0.0, 0.0, 0.4});
  const auto intr = default_depth_intrinsics();
  const DepthFrame frame = render_depth(scene, pose, intr, NoiseSpec{}, 1);

  std::mt19937_64 rng(55);
  std::uniform_int_distribution<int> pu(0, intr.width - 1);
  std::uniform_int_distribution<int> pv(0, intr.height - 1);
  for (int i = 0; i < 1000; ++i) {
    const int u = pu(rng), v = pv(rng);
    const double expected = scene_oracle(scene, pose, intr, u, v);
    const float got = frame.at(u, v);
    if (std::isinf(expected)) {
      CHECK(got == 0.0f);
    } else {
      CHECK(std::abs(got - expected) <= 1e-6);
    }
  }
}

TEST_CASE("rendered cluttered frame has plenty of valid points") {
  Scene scene = make_acceptance_scene();
  CameraIntrinsics intr;
  intr.fx = intr.fy = 270.0;
  intr.cx = 180.0;
  intr.cy = 120.0;
  intr.width = 360;
  intr.height = 240;
  const Pose pose = look_at_level({0.0, -1.9, 1.4}, {0.0, 0.0, 0.3});
  const DepthFrame frame = render_depth(scene, pose, intr, NoiseSpec{}, 7);
  int valid = 0;
  for (float z : frame.depth) valid += z > 0.0f ? 1 : 0;
  CHECK(valid >= 4000);
}

TEST_CASE("render_depth noise is seeded and deterministic") {
  Scene scene = make_acceptance_scene();
  const Pose pose = look_at_level({0.0, -2.0, 1.5}, {0.0, 0.0, 0.4});
  const auto intr = default_depth_intrinsics();
  NoiseSpec noise;
  noise.depth_noise_m = 0.01;
  noise.depth_dropout = 0.1;
  noise.edge_dropout_band_px = 2.0;
  const DepthFrame a = render_depth(scene, pose, intr, noise, 42);
  const DepthFrame b = render_depth(scene, pose, intr, noise, 42);
  CHECK(a.depth == b.depth);
  const DepthFrame c = render_depth(scene, pose, intr, noise, 43);
  CHECK(a.depth != c.depth);

  // Dropout only removes returns; clean pixels keep clean superset support.
  const DepthFrame clean = render_depth(scene, pose, intr, NoiseSpec{}, 42);
  for (std::size_t i = 0; i < a.depth.size(); ++i) {
    if (a.depth[i] > 0.0f) CHECK(clean.depth[i] > 0.0f);
  }
}

TEST_CASE("oracle_detect2d fixtures") {
  Scene scene;
  SceneObject cube;
  cube.class_id = 3;
  cube.box.center = {0.0, 0.0, 2.0};
  cube.box.dims = {1.0, 1.0, 1.0};
  scene.objects.push_back(cube);
  const auto intr = default_depth_intrinsics();

  const auto boxes = oracle_detect2d(scene, Pose{}, intr, NoiseSpec{}, 1);
  REQUIRE(boxes.size() == 1);
  CHECK(boxes[0].class_id == 3);
  CHECK(boxes[0].confidence == doctest::Approx(1.0));
  // Symmetric about the principal point.
  CHECK(0.5 * (boxes[0].u_min + boxes[0].u_max) == doctest::Approx(intr.cx));
  CHECK(0.5 * (boxes[0].v_min + boxes[0].v_max) == doctest::Approx(intr.cy));

  // Zero noise: the box contains every visible corner's projection.
  for (const auto& corner : box3d_corners(cube.box)) {
    const Eigen::Vector3d p = Pose{}.to_camera(corner);
    if (p.z() <= 0.0) continue;
    const Eigen::Vector2d uv = project(intr, p);
    CHECK(uv.x() >= boxes[0].u_min - 1e-9);
    CHECK(uv.x() <= boxes[0].u_max + 1e-9);
    CHECK(uv.y() >= boxes[0].v_min - 1e-9);
    CHECK(uv.y() <= boxes[0].v_max + 1e-9);
  }

  NoiseSpec drop_all;
  drop_all.drop_prob = 1.0;
  CHECK(oracle_detect2d(scene, Pose{}, intr, drop_all, 1).empty());

  NoiseSpec jitter;
  jitter.bbox_jitter_px = 2.0;
  const auto j1 = oracle_detect2d(scene, Pose{}, intr, jitter, 9);
  const auto j2 = oracle_detect2d(scene, Pose{}, intr, jitter, 9);
  REQUIRE(j1.size() == j2.size());
  CHECK(j1[0].u_min == j2[0].u_min);
  CHECK(j1[0].v_max == j2[0].v_max);
  CHECK(j1[0].confidence == j2[0].confidence);
}

TEST_CASE("oracle_detect2d handles occlusion and off-screen objects") {
  Scene scene;
  SceneObject front;
  front.class_id = 3;
  front.box.center = {0.0, 0.0, 2.0};
  front.box.dims = {1.0, 1.0, 1.0};
  SceneObject hidden = front;
  hidden.class_id = 1;
  hidden.box.center = {0.0, 0.0, 4.0};  // dead behind the first cube
  SceneObject off_screen = front;
  off_screen.class_id = 6;
  off_screen.box.center = {0.0, 0.0, -3.0};
  scene.objects = {front, hidden, off_screen};

  const auto boxes =
      oracle_detect2d(scene, Pose{}, default_depth_intrinsics(), NoiseSpec{}, 1);
  REQUIRE(boxes.size() == 1);
  CHECK(boxes[0].class_id == 3);
}

TEST_CASE("delay fixtures") {
  LatencySpec lat;
  lat.fixed = 0.25;
  CHECK(delay(lat, 0.0, 1) == doctest::Approx(0.25));

  lat.model_compute = 0.283;
  CHECK(delay(lat, 1.0, 1) == doctest::Approx(1.0 + 0.25 + 0.283));

  lat.model_compute = 0.013;
  CHECK(delay(lat, 1.0, 1) == doctest::Approx(1.0 + 0.25 + 0.013));

  // Jitter is seeded, bounded, and never sends results back in time.
  LatencySpec jittery;
  jittery.fixed = 0.05;
  jittery.jitter = 0.2;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const double arrival = delay(jittery, 3.0, seed);
    CHECK(arrival >= 3.0);
    CHECK(arrival <= 3.0 + 0.05 + 0.2 + 1e-12);
    CHECK(arrival == delay(jittery, 3.0, seed));
  }
}

TEST_CASE("class table") {
  CHECK(class_names().size() == 8);
  CHECK(class_id_from_name("table") == 0);
  CHECK(class_id_from_name("tv") == 7);
  CHECK_THROWS_AS(class_id_from_name("sofa"), config_error);
  CHECK(class_dims(1) == Eigen::Vector3d(0.5, 0.5, 0.9));
  CHECK_THROWS_AS(class_dims(99), config_error);
}

TEST_CASE("scene files round trip") {
  const Scene scene = make_acceptance_scene();
  const std::string path = "test_scene.json";
  save_scene(path, scene);
  const Scene loaded = load_scene(path);
  REQUIRE(loaded.objects.size() == scene.objects.size());
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    CHECK(loaded.objects[i].class_id == scene.objects[i].class_id);
    CHECK(loaded.objects[i].box.center == scene.objects[i].box.center);
    CHECK(loaded.objects[i].box.dims == scene.objects[i].box.dims);
    CHECK(loaded.objects[i].box.yaw == scene.objects[i].box.yaw);
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_scene("does_not_exist.json"), config_error);
}
