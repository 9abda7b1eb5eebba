#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

namespace edgelift {

// World convention: right-handed, +Z is up. Camera convention: +X right,
// +Y down, +Z forward (optical axis). Pose maps camera frame to world frame.

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && cx >= 0.0 && cx < width && cy >= 0.0 &&
           cy < height;
  }
};

struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d to_world(const Eigen::Vector3d& p_cam) const {
    return rotation * p_cam + translation;
  }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& p_world) const {
    return rotation.transpose() * (p_world - translation);
  }
  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(rotation.transpose() * translation);
    return inv;
  }
  // Composition: (a * b) applies b first, then a.
  Pose operator*(const Pose& other) const {
    Pose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }
  bool is_rigid(double tol = 1e-9) const;
};

struct Box2D {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;
  int class_id = 0;
  double confidence = 1.0;

  double width() const { return u_max - u_min; }
  double height() const { return v_max - v_min; }
};

// Yaw-oriented box: footprint rectangle rotated about world-up (+Z),
// dims = (length along yaw direction, width perpendicular, height along up).
struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d dims = Eigen::Vector3d::Ones();
  double yaw = 0.0;

  double volume() const { return dims.x() * dims.y() * dims.z(); }
};

struct Detection3D {
  Box3D box;
  int class_id = 0;
  double confidence = 1.0;
  int view_count = 1;
  double last_update = 0.0;
};

// Normalizes an angle to [-pi, pi).
double normalize_angle(double rad);

Eigen::Vector3d unproject(const CameraIntrinsics& intr, double u, double v,
                          double z);
// Returns (u, v); may lie outside image bounds, caller clips.
Eigen::Vector2d project(const CameraIntrinsics& intr,
                        const Eigen::Vector3d& p_cam);
Eigen::Vector3d transform_point(const Pose& pose, const Eigen::Vector3d& p_cam);

// Corner order: bottom face counter-clockwise viewed from +Z
// (local (+l,+w), (-l,+w), (-l,-w), (+l,-w) quadrants), then the top face
// in the same order. Indices 0-3 bottom, 4-7 top.
std::array<Eigen::Vector3d, 8> box3d_corners(const Box3D& b);

// Footprint rectangle corners in the XY plane, counter-clockwise.
std::array<Eigen::Vector2d, 4> footprint_corners(const Box3D& b);

// Sutherland-Hodgman clip of a convex subject polygon against a convex
// clip polygon (both counter-clockwise). Returns the intersection polygon.
std::vector<Eigen::Vector2d> clip_convex_polygon(
    const std::vector<Eigen::Vector2d>& subject,
    const std::vector<Eigen::Vector2d>& clip);

// Shoelace area; positive for counter-clockwise polygons.
double polygon_area(const std::vector<Eigen::Vector2d>& poly);

bool point_in_box3d(const Box3D& b, const Eigen::Vector3d& p);

// Analytic IoU for yaw-oriented boxes sharing the world-up axis.
double iou3d(const Box3D& a, const Box3D& b);

// Monte-Carlo IoU estimate; independent oracle for iou3d.
double iou3d_mc(const Box3D& a, const Box3D& b, std::size_t n_samples,
                std::uint64_t rng_seed);

}  // namespace edgelift
