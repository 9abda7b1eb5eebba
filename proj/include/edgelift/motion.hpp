#pragma once

#include <deque>
#include <mutex>
#include <optional>

#include "edgelift/depthlift.hpp"
#include "edgelift/geometry.hpp"

namespace edgelift {

// Tracker pose feed. Single writer, multiple readers; reads see a consistent
// snapshot.
class PoseHistory {
 public:
  explicit PoseHistory(std::size_t capacity = 256);

  // Timestamps must be strictly increasing.
  void push(double timestamp, const Pose& pose);

  // Interpolated pose: translation lerp, rotation quaternion slerp.
  // Clamps to the endpoints outside the stored range.
  Pose at(double t) const;

  std::size_t size() const;
  bool empty() const;

 private:
  std::size_t capacity_;
  std::deque<std::pair<double, Pose>> samples_;
  mutable std::mutex mutex_;
};

Pose pose_at(const PoseHistory& hist, double t);

// Moves a stale 2D box from the t0 camera into the t1 camera by unprojecting
// its corners at a common depth hint (planar-object approximation).
Box2D reproject_box2d(const Box2D& box, const Pose& pose_t0,
                      const Pose& pose_t1, double z_hint,
                      const CameraIntrinsics& intr);

// Median valid depth inside the box; falls back to the caller-provided value
// when the crop has no valid pixels.
double depth_hint(const DepthFrame& frame, const Box2D& box,
                  std::optional<double> fallback = std::nullopt);

}  // namespace edgelift
