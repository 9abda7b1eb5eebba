#pragma once

#include <map>
#include <optional>
#include <vector>

#include "edgelift/geometry.hpp"

namespace edgelift {

struct RegistryConfig {
  double match_dist_max = 0.5;  // meters
  double stale_after = 5.0;     // seconds
};

// Canonicalizes yaw into [-pi/4, pi/4), swapping footprint dims as needed.
// Rectangles are 90-degree symmetric, so this loses no information.
void canonicalize_yaw(Box3D& box);

// World-anchored object registry: matches incoming detections to known
// objects and fuses multi-view observations.
class ObjectRegistry {
 public:
  explicit ObjectRegistry(RegistryConfig cfg = {});

  // Same-class entry with minimum center distance, if within match_dist_max
  // and overlapping (iou3d > 0). Ties broken by higher IoU, then lower id.
  std::optional<int> match(const Detection3D& det) const;

  // Confidence-weighted running mean of center/dims, circular yaw mean on the
  // doubled angle, noisy-OR confidence. Throws std::logic_error on class
  // mismatch or unknown id.
  void fuse(int id, const Detection3D& det);

  // Last-write-wins update (fusion-off ablation path).
  void replace(int id, const Detection3D& det);

  int insert(const Detection3D& det);
  int insert_or_fuse(const Detection3D& det);

  std::vector<int> prune(double now);

  const Detection3D& at(int id) const;
  std::vector<Detection3D> snapshot() const;
  std::vector<int> ids() const;
  std::size_t size() const { return entries_.size(); }
  const RegistryConfig& config() const { return cfg_; }

 private:
  struct Entry {
    Detection3D det;
    double weight_sum = 0.0;
    double yaw_sin2 = 0.0;  // weighted sin/cos accumulators of 2*yaw
    double yaw_cos2 = 0.0;
  };

  RegistryConfig cfg_;
  std::map<int, Entry> entries_;
  int next_id_ = 0;
};

}  // namespace edgelift
