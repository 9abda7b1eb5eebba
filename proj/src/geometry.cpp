#include "edgelift/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "edgelift/errors.hpp"

namespace edgelift {

namespace {
constexpr double kDegenerateArea = 1e-12;

// Deterministic box ordering so iou3d(a,b) and iou3d(b,a) follow the same
// floating-point path and agree exactly.
bool box_before(const Box3D& a, const Box3D& b) {
  for (int i = 0; i < 3; ++i) {
    if (a.center(i) != b.center(i)) return a.center(i) < b.center(i);
    if (a.dims(i) != b.dims(i)) return a.dims(i) < b.dims(i);
  }
  return a.yaw < b.yaw;
}

}  // namespace

bool Pose::is_rigid(double tol) const {
  const Eigen::Matrix3d should_be_identity =
      rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  return should_be_identity.cwiseAbs().maxCoeff() <= tol &&
         std::abs(rotation.determinant() - 1.0) <= tol;
}

double normalize_angle(double rad) {
  if (rad >= -M_PI && rad < M_PI) return rad;
  const double two_pi = 2.0 * M_PI;
  double a = std::fmod(rad + M_PI, two_pi);
  if (a < 0.0) a += two_pi;
  return a - M_PI;
}

Eigen::Vector3d unproject(const CameraIntrinsics& intr, double u, double v,
                          double z) {
  if (!(z > 0.0)) {
    throw invalid_depth_error("unproject: depth must be positive");
  }
  return {(u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z};
}

Eigen::Vector2d project(const CameraIntrinsics& intr,
                        const Eigen::Vector3d& p_cam) {
  if (!(p_cam.z() > 0.0)) {
    throw behind_camera_error("project: point behind camera");
  }
  return {intr.fx * p_cam.x() / p_cam.z() + intr.cx,
          intr.fy * p_cam.y() / p_cam.z() + intr.cy};
}

Eigen::Vector3d transform_point(const Pose& pose,
                                const Eigen::Vector3d& p_cam) {
  return pose.to_world(p_cam);
}

std::array<Eigen::Vector2d, 4> footprint_corners(const Box3D& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double hl = 0.5 * b.dims.x();
  const double hw = 0.5 * b.dims.y();
  // Local corners in CCW order viewed from +Z.
  const std::array<Eigen::Vector2d, 4> local = {
      Eigen::Vector2d(hl, hw), Eigen::Vector2d(-hl, hw),
      Eigen::Vector2d(-hl, -hw), Eigen::Vector2d(hl, -hw)};
  std::array<Eigen::Vector2d, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {c * local[i].x() - s * local[i].y() + b.center.x(),
              s * local[i].x() + c * local[i].y() + b.center.y()};
  }
  return out;
}

std::array<Eigen::Vector3d, 8> box3d_corners(const Box3D& b) {
  const auto fp = footprint_corners(b);
  const double z_lo = b.center.z() - 0.5 * b.dims.z();
  const double z_hi = b.center.z() + 0.5 * b.dims.z();
  std::array<Eigen::Vector3d, 8> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {fp[i].x(), fp[i].y(), z_lo};
    out[i + 4] = {fp[i].x(), fp[i].y(), z_hi};
  }
  return out;
}

std::vector<Eigen::Vector2d> clip_convex_polygon(
    const std::vector<Eigen::Vector2d>& subject,
    const std::vector<Eigen::Vector2d>& clip) {
  std::vector<Eigen::Vector2d> output = subject;
  const std::size_t n = clip.size();
  for (std::size_t i = 0; i < n && !output.empty(); ++i) {
    const Eigen::Vector2d a = clip[i];
    const Eigen::Vector2d b = clip[(i + 1) % n];
    const Eigen::Vector2d edge = b - a;
    std::vector<Eigen::Vector2d> input;
    input.swap(output);
    const std::size_t m = input.size();
    for (std::size_t j = 0; j < m; ++j) {
      const Eigen::Vector2d& cur = input[j];
      const Eigen::Vector2d& nxt = input[(j + 1) % m];
      // Inside = left of (or on) the CCW edge.
      const double cur_side =
          edge.x() * (cur.y() - a.y()) - edge.y() * (cur.x() - a.x());
      const double nxt_side =
          edge.x() * (nxt.y() - a.y()) - edge.y() * (nxt.x() - a.x());
      const bool cur_in = cur_side >= 0.0;
      const bool nxt_in = nxt_side >= 0.0;
      if (cur_in) output.push_back(cur);
      if (cur_in != nxt_in) {
        const double t = cur_side / (cur_side - nxt_side);
        output.push_back(cur + t * (nxt - cur));
      }
    }
  }
  return output;
}

double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& p = poly[i];
    const Eigen::Vector2d& q = poly[(i + 1) % n];
    twice += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * twice;
}

bool point_in_box3d(const Box3D& b, const Eigen::Vector3d& p) {
  if (std::abs(p.z() - b.center.z()) > 0.5 * b.dims.z()) return false;
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double dx = p.x() - b.center.x();
  const double dy = p.y() - b.center.y();
  // Rotate into the box frame.
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.dims.x() && std::abs(ly) <= 0.5 * b.dims.y();
}

double iou3d(const Box3D& a_in, const Box3D& b_in) {
  const Box3D& a = box_before(b_in, a_in) ? b_in : a_in;
  const Box3D& b = box_before(b_in, a_in) ? a_in : b_in;
  const double z_lo =
      std::max(a.center.z() - 0.5 * a.dims.z(), b.center.z() - 0.5 * b.dims.z());
  const double z_hi =
      std::min(a.center.z() + 0.5 * a.dims.z(), b.center.z() + 0.5 * b.dims.z());
  const double dz = z_hi - z_lo;
  if (dz <= 0.0) return 0.0;

  const auto fa = footprint_corners(a);
  const auto fb = footprint_corners(b);
  const std::vector<Eigen::Vector2d> pa(fa.begin(), fa.end());
  const std::vector<Eigen::Vector2d> pb(fb.begin(), fb.end());
  const double inter_area = polygon_area(clip_convex_polygon(pa, pb));
  if (inter_area <= kDegenerateArea) return 0.0;

  const double inter_vol = inter_area * dz;
  const double union_vol = a.volume() + b.volume() - inter_vol;
  return inter_vol / union_vol;
}

double iou3d_mc(const Box3D& a, const Box3D& b, std::size_t n_samples,
                std::uint64_t rng_seed) {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(
      std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (const Box3D* box : {&a, &b}) {
    for (const auto& c : box3d_corners(*box)) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
  }
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> ux(lo.x(), hi.x());
  std::uniform_real_distribution<double> uy(lo.y(), hi.y());
  std::uniform_real_distribution<double> uz(lo.z(), hi.z());
  std::size_t n_inter = 0;
  std::size_t n_union = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const Eigen::Vector3d p(ux(rng), uy(rng), uz(rng));
    const bool in_a = point_in_box3d(a, p);
    const bool in_b = point_in_box3d(b, p);
    if (in_a && in_b) ++n_inter;
    if (in_a || in_b) ++n_union;
  }
  if (n_union == 0) return 0.0;
  return static_cast<double>(n_inter) / static_cast<double>(n_union);
}

}  // namespace edgelift
