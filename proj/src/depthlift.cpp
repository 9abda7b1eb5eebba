#include "edgelift/depthlift.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>

#include "edgelift/errors.hpp"

namespace edgelift {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'F', '1'};
constexpr double kCollinearTol = 1e-9;
constexpr double kMinDim = 1e-6;

struct CropBounds {
  int u0, u1, v0, v1;  // inclusive pixel range
  bool empty;
};

// Pixels are centered at integer coordinates; a pixel is inside the box if
// box.min <= coord < box.max.
CropBounds crop_bounds(const DepthFrame& frame, const Box2D& box) {
  CropBounds c{};
  c.u0 = std::max(0, static_cast<int>(std::ceil(box.u_min)));
  c.v0 = std::max(0, static_cast<int>(std::ceil(box.v_min)));
  c.u1 = std::min(frame.width - 1, static_cast<int>(std::ceil(box.u_max)) - 1);
  c.v1 = std::min(frame.height - 1, static_cast<int>(std::ceil(box.v_max)) - 1);
  c.empty = c.u0 > c.u1 || c.v0 > c.v1;
  return c;
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (n % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
    m = 0.5 * (m + v[mid - 1]);
  }
  return m;
}

template <typename T>
void write_raw(std::ofstream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_raw(std::ifstream& is, T& value) {
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
}

}  // namespace

void save_depth_frame(const std::string& path, const DepthFrame& frame) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  write_raw(os, static_cast<std::uint32_t>(frame.width));
  write_raw(os, static_cast<std::uint32_t>(frame.height));
  write_raw(os, frame.timestamp);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) write_raw(os, frame.pose.rotation(r, c));
  for (int i = 0; i < 3; ++i) write_raw(os, frame.pose.translation(i));
  write_raw(os, frame.intrinsics.fx);
  write_raw(os, frame.intrinsics.fy);
  write_raw(os, frame.intrinsics.cx);
  write_raw(os, frame.intrinsics.cy);
  os.write(reinterpret_cast<const char*>(frame.depth.data()),
           static_cast<std::streamsize>(frame.depth.size() * sizeof(float)));
}

DepthFrame load_depth_frame(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw parse_error(path + ": bad DPF1 magic");
  }
  DepthFrame frame;
  std::uint32_t w = 0, h = 0;
  read_raw(is, w);
  read_raw(is, h);
  frame.width = static_cast<int>(w);
  frame.height = static_cast<int>(h);
  read_raw(is, frame.timestamp);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) read_raw(is, frame.pose.rotation(r, c));
  for (int i = 0; i < 3; ++i) read_raw(is, frame.pose.translation(i));
  read_raw(is, frame.intrinsics.fx);
  read_raw(is, frame.intrinsics.fy);
  read_raw(is, frame.intrinsics.cx);
  read_raw(is, frame.intrinsics.cy);
  frame.intrinsics.width = frame.width;
  frame.intrinsics.height = frame.height;
  frame.depth.resize(static_cast<std::size_t>(frame.width) * frame.height);
  is.read(reinterpret_cast<char*>(frame.depth.data()),
          static_cast<std::streamsize>(frame.depth.size() * sizeof(float)));
  if (!is) throw parse_error(path + ": truncated DPF1 file");
  return frame;
}

std::vector<Eigen::Vector3d> frustum_points(const DepthFrame& frame,
                                            const Box2D& box) {
  const CropBounds c = crop_bounds(frame, box);
  if (c.empty) throw empty_crop_error("frustum_points: box outside image");
  std::vector<Eigen::Vector3d> points;
  points.reserve(static_cast<std::size_t>(c.u1 - c.u0 + 1) * (c.v1 - c.v0 + 1));
  for (int v = c.v0; v <= c.v1; ++v) {
    for (int u = c.u0; u <= c.u1; ++u) {
      if (!frame.valid_at(u, v)) continue;
      points.push_back(unproject(frame.intrinsics, u, v, frame.at(u, v)));
    }
  }
  return points;
}

std::vector<Eigen::Vector3d> robust_depth_filter(
    const std::vector<Eigen::Vector3d>& points, const FilterConfig& cfg) {
  std::vector<Eigen::Vector3d> kept;
  if (!points.empty()) {
    std::vector<double> zs;
    zs.reserve(points.size());
    for (const auto& p : points) zs.push_back(p.z());
    const double med = median_of(zs);
    std::vector<double> dev;
    dev.reserve(zs.size());
    for (double z : zs) dev.push_back(std::abs(z - med));
    const double mad = median_of(dev);
    const double gate = mad > 0.0 ? cfg.mad_k * mad : 1e-6;
    kept.reserve(points.size());
    for (const auto& p : points) {
      if (std::abs(p.z() - med) <= gate) kept.push_back(p);
    }
  }
  if (static_cast<int>(kept.size()) < cfg.min_points) {
    throw insufficient_depth_error("robust_depth_filter: only " +
                                   std::to_string(kept.size()) +
                                   " points survive");
  }
  return kept;
}

std::vector<Eigen::Vector2d> convex_hull_2d(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(),
            [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
              return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
            });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                          return a.x() == b.x() && a.y() == b.y();
                        }),
            pts.end());
  const std::size_t n = pts.size();
  if (n < 3) return pts;
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a,
                  const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) -
           (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = n - 1, lower = k + 1; i > 0; --i) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0.0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

Box3D estimate_box3d(const std::vector<Eigen::Vector3d>& points_cam,
                     const Pose& pose, FitMethod method) {
  if (points_cam.size() < 3) {
    throw degenerate_geometry_error("estimate_box3d: too few points");
  }
  std::vector<Eigen::Vector2d> xy;
  xy.reserve(points_cam.size());
  double z_lo = std::numeric_limits<double>::infinity();
  double z_hi = -z_lo;
  for (const auto& p : points_cam) {
    const Eigen::Vector3d w = pose.to_world(p);
    xy.emplace_back(w.x(), w.y());
    z_lo = std::min(z_lo, w.z());
    z_hi = std::max(z_hi, w.z());
  }

  // Degenerate footprints (all points collinear) are unusable with either
  // fit method; the hull collapses to fewer than three vertices.
  if (convex_hull_2d(xy).size() < 3) {
    throw degenerate_geometry_error("estimate_box3d: collinear footprint");
  }

  Box3D box;
  if (method == FitMethod::AABB) {
    Eigen::Vector2d lo = xy.front(), hi = xy.front();
    for (const auto& p : xy) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Eigen::Vector2d ext = hi - lo;
    box.center.head<2>() = 0.5 * (lo + hi);
    box.dims.x() = ext.x();
    box.dims.y() = ext.y();
    box.yaw = 0.0;
  } else {
    const auto hull = convex_hull_2d(xy);
    if (hull.size() < 3) {
      throw degenerate_geometry_error("estimate_box3d: collinear footprint");
    }
    // Minimum-area rectangle has a side collinear with some hull edge.
    double best_area = std::numeric_limits<double>::infinity();
    double best_theta = 0.0;
    Eigen::Vector2d best_lo, best_hi;
    const std::size_t n = hull.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d edge = hull[(i + 1) % n] - hull[i];
      const double len = edge.norm();
      if (len < kCollinearTol) continue;
      const double theta = std::atan2(edge.y(), edge.x());
      const double c = std::cos(theta), s = std::sin(theta);
      Eigen::Vector2d lo(std::numeric_limits<double>::infinity(),
                         std::numeric_limits<double>::infinity());
      Eigen::Vector2d hi = -lo;
      for (const auto& p : hull) {
        const Eigen::Vector2d q(c * p.x() + s * p.y(),
                                -s * p.x() + c * p.y());
        lo = lo.cwiseMin(q);
        hi = hi.cwiseMax(q);
      }
      const double area = (hi - lo).prod();
      if (area < best_area) {
        best_area = area;
        best_theta = theta;
        best_lo = lo;
        best_hi = hi;
      }
    }
    const Eigen::Vector2d ext = best_hi - best_lo;
    if (!std::isfinite(best_area) || ext.minCoeff() < kCollinearTol) {
      throw degenerate_geometry_error("estimate_box3d: collinear footprint");
    }
    const Eigen::Vector2d mid_local = 0.5 * (best_lo + best_hi);
    const double c = std::cos(best_theta), s = std::sin(best_theta);
    box.center.x() = c * mid_local.x() - s * mid_local.y();
    box.center.y() = s * mid_local.x() + c * mid_local.y();
    box.dims.x() = ext.x();
    box.dims.y() = ext.y();
    box.yaw = normalize_angle(best_theta);
  }
  box.center.z() = 0.5 * (z_lo + z_hi);
  box.dims.z() = std::max(z_hi - z_lo, kMinDim);
  box.dims.x() = std::max(box.dims.x(), kMinDim);
  box.dims.y() = std::max(box.dims.y(), kMinDim);
  return box;
}

Detection3D lift(const DepthFrame& frame, const Box2D& box,
                 const FilterConfig& cfg, FitMethod method) {
  const CropBounds c = crop_bounds(frame, box);
  if (c.empty) throw empty_crop_error("lift: box outside image");
  const std::size_t total =
      static_cast<std::size_t>(c.u1 - c.u0 + 1) * (c.v1 - c.v0 + 1);
  const auto points = frustum_points(frame, box);
  const double invalid_ratio =
      1.0 - static_cast<double>(points.size()) / static_cast<double>(total);
  if (invalid_ratio > cfg.invalid_ratio_max) {
    throw insufficient_depth_error("lift: invalid-depth ratio too high");
  }
  const auto filtered = robust_depth_filter(points, cfg);
  Detection3D det;
  det.box = estimate_box3d(filtered, frame.pose, method);
  det.class_id = box.class_id;
  det.confidence = box.confidence;
  det.view_count = 1;
  det.last_update = frame.timestamp;
  return det;
}

}  // namespace edgelift
