#include "edgelift/motion.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

#include "edgelift/errors.hpp"

namespace edgelift {

PoseHistory::PoseHistory(std::size_t capacity)
    : capacity_(std::max<std::size_t>(capacity, 2)) {}

void PoseHistory::push(double timestamp, const Pose& pose) {
  std::lock_guard lock(mutex_);
  if (!samples_.empty() && timestamp <= samples_.back().first) {
    throw config_error("PoseHistory: timestamps must be strictly increasing");
  }
  samples_.emplace_back(timestamp, pose);
  if (samples_.size() > capacity_) samples_.pop_front();
}

std::size_t PoseHistory::size() const {
  std::lock_guard lock(mutex_);
  return samples_.size();
}

bool PoseHistory::empty() const { return size() == 0; }

Pose PoseHistory::at(double t) const {
  std::lock_guard lock(mutex_);
  if (samples_.empty()) throw config_error("PoseHistory: empty");
  if (t <= samples_.front().first) return samples_.front().second;
  if (t >= samples_.back().first) return samples_.back().second;
  auto it = std::lower_bound(
      samples_.begin(), samples_.end(), t,
      [](const std::pair<double, Pose>& s, double value) {
        return s.first < value;
      });
  const auto& [t1, p1] = *it;
  if (t1 == t) return p1;
  const auto& [t0, p0] = *std::prev(it);
  const double alpha = (t - t0) / (t1 - t0);
  Pose out;
  out.translation = (1.0 - alpha) * p0.translation + alpha * p1.translation;
  const Eigen::Quaterniond q0(p0.rotation);
  const Eigen::Quaterniond q1(p1.rotation);
  // Slerp then re-orthonormalize on extraction to avoid drift.
  out.rotation = q0.slerp(alpha, q1).normalized().toRotationMatrix();
  return out;
}

Pose pose_at(const PoseHistory& hist, double t) { return hist.at(t); }

Box2D reproject_box2d(const Box2D& box, const Pose& pose_t0,
                      const Pose& pose_t1, double z_hint,
                      const CameraIntrinsics& intr) {
  if (!(z_hint > 0.0)) {
    throw invalid_depth_error("reproject_box2d: z_hint must be positive");
  }
  const std::array<Eigen::Vector2d, 4> corners = {
      Eigen::Vector2d(box.u_min, box.v_min), Eigen::Vector2d(box.u_max, box.v_min),
      Eigen::Vector2d(box.u_max, box.v_max), Eigen::Vector2d(box.u_min, box.v_max)};
  double u_lo = std::numeric_limits<double>::infinity();
  double v_lo = u_lo;
  double u_hi = -u_lo;
  double v_hi = -u_lo;
  int visible = 0;
  for (const auto& c : corners) {
    const Eigen::Vector3d p0 = unproject(intr, c.x(), c.y(), z_hint);
    const Eigen::Vector3d p1 = pose_t1.to_camera(pose_t0.to_world(p0));
    if (p1.z() <= 0.0) continue;
    const Eigen::Vector2d uv = project(intr, p1);
    u_lo = std::min(u_lo, uv.x());
    u_hi = std::max(u_hi, uv.x());
    v_lo = std::min(v_lo, uv.y());
    v_hi = std::max(v_hi, uv.y());
    ++visible;
  }
  if (visible == 0) {
    throw not_visible_error("reproject_box2d: all corners behind camera");
  }
  Box2D out = box;
  out.u_min = std::clamp(u_lo, 0.0, static_cast<double>(intr.width));
  out.u_max = std::clamp(u_hi, 0.0, static_cast<double>(intr.width));
  out.v_min = std::clamp(v_lo, 0.0, static_cast<double>(intr.height));
  out.v_max = std::clamp(v_hi, 0.0, static_cast<double>(intr.height));
  if (out.u_min >= out.u_max || out.v_min >= out.v_max) {
    throw not_visible_error("reproject_box2d: box left the image");
  }
  return out;
}

double depth_hint(const DepthFrame& frame, const Box2D& box,
                  std::optional<double> fallback) {
  const int u0 = std::max(0, static_cast<int>(std::ceil(box.u_min)));
  const int v0 = std::max(0, static_cast<int>(std::ceil(box.v_min)));
  const int u1 =
      std::min(frame.width - 1, static_cast<int>(std::ceil(box.u_max)) - 1);
  const int v1 =
      std::min(frame.height - 1, static_cast<int>(std::ceil(box.v_max)) - 1);
  std::vector<double> zs;
  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      if (u < 0 || v < 0) continue;
      if (frame.valid_at(u, v)) zs.push_back(frame.at(u, v));
    }
  }
  if (zs.empty()) {
    if (fallback) return *fallback;
    throw insufficient_depth_error("depth_hint: no valid pixels in box");
  }
  const std::size_t mid = zs.size() / 2;
  std::nth_element(zs.begin(), zs.begin() + mid, zs.end());
  double med = zs[mid];
  if (zs.size() % 2 == 0) {
    std::nth_element(zs.begin(), zs.begin() + mid - 1, zs.begin() + mid);
    med = 0.5 * (med + zs[mid - 1]);
  }
  return med;
}

}  // namespace edgelift
