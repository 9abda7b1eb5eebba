#include "edgelift/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace edgelift {

void canonicalize_yaw(Box3D& box) {
  double yaw = normalize_angle(box.yaw);
  while (yaw >= M_PI / 4.0) {
    yaw -= M_PI / 2.0;
    std::swap(box.dims.x(), box.dims.y());
  }
  while (yaw < -M_PI / 4.0) {
    yaw += M_PI / 2.0;
    std::swap(box.dims.x(), box.dims.y());
  }
  box.yaw = yaw;
}

ObjectRegistry::ObjectRegistry(RegistryConfig cfg) : cfg_(cfg) {}

std::optional<int> ObjectRegistry::match(const Detection3D& det) const {
  std::optional<int> best;
  double best_dist = cfg_.match_dist_max;
  double best_iou = -1.0;
  for (const auto& [id, entry] : entries_) {
    if (entry.det.class_id != det.class_id) continue;
    const double dist = (entry.det.box.center - det.box.center).norm();
    if (dist > cfg_.match_dist_max) continue;
    const double iou = iou3d(entry.det.box, det.box);
    if (iou <= 0.0) continue;
    if (dist < best_dist || (dist == best_dist && iou > best_iou)) {
      best = id;
      best_dist = dist;
      best_iou = iou;
    }
  }
  return best;
}

void ObjectRegistry::fuse(int id, const Detection3D& det) {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw std::logic_error("fuse: unknown object id");
  Entry& e = it->second;
  if (e.det.class_id != det.class_id) {
    throw std::logic_error("fuse: class mismatch");
  }
  Box3D incoming = det.box;
  canonicalize_yaw(incoming);

  const double w = std::max(det.confidence, 1e-6);
  const double total = e.weight_sum + w;
  e.det.box.center = (e.weight_sum * e.det.box.center + w * incoming.center) / total;
  e.det.box.dims = (e.weight_sum * e.det.box.dims + w * incoming.dims) / total;
  e.yaw_sin2 += w * std::sin(2.0 * incoming.yaw);
  e.yaw_cos2 += w * std::cos(2.0 * incoming.yaw);
  e.det.box.yaw = 0.5 * std::atan2(e.yaw_sin2, e.yaw_cos2);
  canonicalize_yaw(e.det.box);
  e.weight_sum = total;

  e.det.view_count += 1;
  e.det.confidence = std::min(
      1.0 - (1.0 - e.det.confidence) * (1.0 - det.confidence), 0.999);
  e.det.last_update = std::max(e.det.last_update, det.last_update);
}

void ObjectRegistry::replace(int id, const Detection3D& det) {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw std::logic_error("replace: unknown id");
  Entry& e = it->second;
  e.det = det;
  canonicalize_yaw(e.det.box);
  e.weight_sum = std::max(det.confidence, 1e-6);
  e.yaw_sin2 = e.weight_sum * std::sin(2.0 * e.det.box.yaw);
  e.yaw_cos2 = e.weight_sum * std::cos(2.0 * e.det.box.yaw);
}

int ObjectRegistry::insert(const Detection3D& det) {
  const int id = next_id_++;
  Entry e;
  e.det = det;
  canonicalize_yaw(e.det.box);
  e.weight_sum = std::max(det.confidence, 1e-6);
  e.yaw_sin2 = e.weight_sum * std::sin(2.0 * e.det.box.yaw);
  e.yaw_cos2 = e.weight_sum * std::cos(2.0 * e.det.box.yaw);
  entries_.emplace(id, std::move(e));
  return id;
}

int ObjectRegistry::insert_or_fuse(const Detection3D& det) {
  if (auto id = match(det)) {
    fuse(*id, det);
    return *id;
  }
  return insert(det);
}

std::vector<int> ObjectRegistry::prune(double now) {
  std::vector<int> removed;
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (now - it->second.det.last_update > cfg_.stale_after) {
      removed.push_back(it->first);
      it = entries_.erase(it);
    } else {
      ++it;
    }
  }
  return removed;
}

const Detection3D& ObjectRegistry::at(int id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw std::logic_error("at: unknown object id");
  return it->second.det;
}

std::vector<Detection3D> ObjectRegistry::snapshot() const {
  std::vector<Detection3D> out;
  out.reserve(entries_.size());
  for (const auto& [id, entry] : entries_) out.push_back(entry.det);
  return out;
}

std::vector<int> ObjectRegistry::ids() const {
  std::vector<int> out;
  out.reserve(entries_.size());
  for (const auto& [id, entry] : entries_) out.push_back(id);
  return out;
}

}  // namespace edgelift
