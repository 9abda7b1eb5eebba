#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "edgelift/geometry.hpp"

namespace edgelift {

// Depth grid with the camera pose tracked at capture time.
// Missing depth is encoded as 0.0; NaN is also accepted and treated as missing.
struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<float> depth;  // row-major, meters
  double timestamp = 0.0;
  Pose pose;
  CameraIntrinsics intrinsics;

  float at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  bool valid_at(int u, int v) const {
    const float z = at(u, v);
    return std::isfinite(z) && z > 0.0f;
  }
};

// Binary fixture format "DPF1": magic, u32 width, u32 height, f64 timestamp,
// 12xf64 pose (row-major rotation then translation), 4xf64 intrinsics
// (fx, fy, cx, cy), then width*height f32 depths row-major. Little-endian.
void save_depth_frame(const std::string& path, const DepthFrame& frame);
DepthFrame load_depth_frame(const std::string& path);

struct FilterConfig {
  double mad_k = 3.0;
  int min_points = 20;
  double invalid_ratio_max = 0.9;
};

enum class FitMethod { AABB, MinAreaRect };

// Unprojects every valid-depth pixel inside box (intersected with the image),
// in raster order. Throws empty_crop_error if the box misses the image.
std::vector<Eigen::Vector3d> frustum_points(const DepthFrame& frame,
                                            const Box2D& box);

// Keeps points whose depth lies within mad_k * MAD of the median depth.
// Throws insufficient_depth_error if fewer than cfg.min_points survive.
std::vector<Eigen::Vector3d> robust_depth_filter(
    const std::vector<Eigen::Vector3d>& points, const FilterConfig& cfg);

// Fits a world-frame yaw box to camera-frame points: height from the world-up
// extent, footprint from either the axis-aligned bounds (AABB) or the
// minimum-area rotated rectangle of the up-projected points (MinAreaRect).
Box3D estimate_box3d(const std::vector<Eigen::Vector3d>& points_cam,
                     const Pose& pose, FitMethod method);

// Convex hull (Andrew monotone chain), counter-clockwise.
std::vector<Eigen::Vector2d> convex_hull_2d(std::vector<Eigen::Vector2d> pts);

// Full on-device stage: frustum crop, robust filter, box fit.
Detection3D lift(const DepthFrame& frame, const Box2D& box,
                 const FilterConfig& cfg, FitMethod method);

}  // namespace edgelift
