#include "edgelift/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "edgelift/errors.hpp"
#include "edgelift/motion.hpp"

namespace edgelift {

namespace {
using json = nlohmann::json;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t index) {
  std::uint64_t x = seed ^ (stream * 0x9e3779b97f4a7c15ull) ^
                    (index * 0xbf58476d1ce4e5b9ull);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

double yaw_of(const Eigen::Matrix3d& r) { return std::atan2(r(1, 0), r(0, 0)); }

// Naive-overlay error transform applied to a ground-truth world box: the
// result computed on the capture frame is interpreted in the camera frame at
// arrival time.
Box3D apply_error_transform(const Pose& error, const Box3D& box) {
  Box3D out = box;
  out.center = error.rotation * box.center + error.translation;
  out.yaw = normalize_angle(box.yaw + yaw_of(error.rotation));
  return out;
}

struct ArrivalEvent {
  int frame_index;
  double capture_ts;
  double arrival_ts;
  std::vector<Box2D> boxes;  // Hybrid only
};

json pose_to_json(const Pose& p) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.push_back(p.rotation(i, j));
  return json{{"r", r},
              {"t", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

Pose pose_from_json(const json& j) {
  Pose p;
  const auto& r = j.at("r");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) p.rotation(i, k) = r.at(i * 3 + k).get<double>();
  const auto& t = j.at("t");
  p.translation = {t.at(0).get<double>(), t.at(1).get<double>(),
                   t.at(2).get<double>()};
  return p;
}

StageStats stage_stats(std::vector<double> values) {
  StageStats stats;
  if (values.empty()) return stats;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  stats.mean = sum / static_cast<double>(values.size());
  const std::size_t idx = static_cast<std::size_t>(
      std::ceil(0.95 * static_cast<double>(values.size()))) - 1;
  stats.p95 = values[std::min(idx, values.size() - 1)];
  stats.max = values.back();
  return stats;
}

}  // namespace

std::string to_string(Variant v) {
  return v == Variant::Hybrid ? "hybrid" : "mono3d";
}

Variant variant_from_string(const std::string& name) {
  if (name == "hybrid") return Variant::Hybrid;
  if (name == "mono3d" || name == "monolithic") return Variant::MonolithicEdge3D;
  throw config_error("unknown variant: " + name);
}

std::vector<Box2D> InProcessOracle::detect(const Scene& scene, const Pose& pose,
                                           const CameraIntrinsics& intr,
                                           const NoiseSpec& noise,
                                           std::uint64_t seed) {
  return oracle_detect2d(scene, pose, intr, noise, seed);
}

TimelineRecord run(const Scene& scene,
                   const std::vector<std::pair<double, Pose>>& trajectory,
                   const PipelineConfig& cfg, Detector2D& detector) {
  if (trajectory.empty()) throw config_error("run: empty trajectory");
  CameraIntrinsics intr = cfg.intrinsics;
  if (!intr.valid()) intr = default_depth_intrinsics();

  PoseHistory history(trajectory.size() + 1);
  for (const auto& [t, pose] : trajectory) history.push(t, pose);

  // Capture loop: one offload request per frame.
  std::vector<ArrivalEvent> arrivals;
  arrivals.reserve(trajectory.size());
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const auto& [t0, pose0] = trajectory[i];
    ArrivalEvent ev;
    ev.frame_index = static_cast<int>(i);
    ev.capture_ts = t0;
    ev.arrival_ts = delay(cfg.latency, t0, mix_seed(cfg.seed, 1, i));
    if (cfg.variant == Variant::Hybrid) {
      ev.boxes = detector.detect(scene, pose0, intr, cfg.noise,
                                 mix_seed(cfg.seed, 2, i));
    }
    arrivals.push_back(std::move(ev));
  }
  std::stable_sort(arrivals.begin(), arrivals.end(),
                   [](const ArrivalEvent& a, const ArrivalEvent& b) {
                     return a.arrival_ts < b.arrival_ts;
                   });

  TimelineRecord record;
  ObjectRegistry registry(cfg.registry);
  std::map<int, double> source_capture_ts;  // stale-result guard
  std::vector<Detection3D> mono_display;
  std::size_t next_arrival = 0;

  auto process_arrival = [&](const ArrivalEvent& ev) {
    StageTiming timing;
    timing.capture_ts = ev.capture_ts;
    timing.arrival_ts = ev.arrival_ts;
    timing.offload_rtt_s = ev.arrival_ts - ev.capture_ts;

    if (cfg.variant == Variant::MonolithicEdge3D) {
      const Pose pose_arrival = history.at(ev.arrival_ts);
      const Pose error = pose_arrival * trajectory[ev.frame_index].second.inverse();
      mono_display.clear();
      for (const auto& obj : scene.objects) {
        Detection3D det;
        det.box = apply_error_transform(error, obj.box);
        det.class_id = obj.class_id;
        det.confidence = 1.0;
        det.last_update = ev.arrival_ts;
        mono_display.push_back(det);
      }
      timing.end_to_end_s = timing.offload_rtt_s;
      record.stages.push_back(timing);
      return;
    }

    const Pose pose_now = history.at(ev.arrival_ts);
    const Pose& pose_capture = trajectory[ev.frame_index].second;
    const auto wall_start = std::chrono::steady_clock::now();
    const DepthFrame frame =
        render_depth(scene, pose_now, intr, cfg.noise,
                     mix_seed(cfg.seed, 3, static_cast<std::uint64_t>(ev.frame_index)));
    for (const auto& stale_box : ev.boxes) {
      try {
        // Depth hint at the stale box location, falling back to the fused
        // center depth of a same-class registry entry projecting into it.
        std::optional<double> fallback;
        for (int id : registry.ids()) {
          const Detection3D& entry = registry.at(id);
          if (entry.class_id != stale_box.class_id) continue;
          const Eigen::Vector3d cam = pose_now.to_camera(entry.box.center);
          if (cam.z() <= 0.0) continue;
          const Eigen::Vector2d uv = project(intr, cam);
          if (uv.x() >= stale_box.u_min && uv.x() <= stale_box.u_max &&
              uv.y() >= stale_box.v_min && uv.y() <= stale_box.v_max) {
            fallback = cam.z();
            break;
          }
        }
        Box2D box = stale_box;
        if (cfg.compensation) {
          const double z_hint = depth_hint(frame, stale_box, fallback);
          box = reproject_box2d(stale_box, pose_capture, pose_now, z_hint, intr);
        }
        Detection3D det = lift(frame, box, cfg.filter, cfg.method);
        det.last_update = ev.arrival_ts;

        const auto matched = registry.match(det);
        if (matched) {
          auto it = source_capture_ts.find(*matched);
          if (it != source_capture_ts.end() && it->second > ev.capture_ts) {
            continue;  // stale result; newer observation already applied
          }
        }
        int id;
        if (cfg.fusion) {
          id = registry.insert_or_fuse(det);
        } else if (matched) {
          registry.replace(*matched, det);
          id = *matched;
        } else {
          id = registry.insert(det);
        }
        source_capture_ts[id] = ev.capture_ts;
      } catch (const std::runtime_error&) {
        ++record.lift_failures;  // degrade gracefully, keep last fused box
      }
    }
    timing.lift_wall_s = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - wall_start)
                             .count();
    timing.end_to_end_s = timing.offload_rtt_s + timing.lift_wall_s;
    record.stages.push_back(timing);
  };

  for (const auto& [tick_ts, tick_pose] : trajectory) {
    while (next_arrival < arrivals.size() &&
           arrivals[next_arrival].arrival_ts <= tick_ts) {
      process_arrival(arrivals[next_arrival]);
      ++next_arrival;
    }
    TickRecord tick;
    tick.timestamp = tick_ts;
    tick.pose = tick_pose;
    if (cfg.variant == Variant::Hybrid) {
      registry.prune(tick_ts);
      tick.detections = registry.snapshot();
    } else {
      tick.detections = mono_display;
    }
    record.ticks.push_back(std::move(tick));
  }
  return record;
}

MetricsReport evaluate_run(const TimelineRecord& record, const Scene& scene,
                           const MetricsConfig& cfg) {
  std::vector<std::pair<int, Box3D>> gts;
  gts.reserve(scene.objects.size());
  for (const auto& obj : scene.objects) gts.emplace_back(obj.class_id, obj.box);
  MatchCounts total;
  for (const auto& tick : record.ticks) {
    total += match_counts(tick.detections, gts, cfg);
  }
  return finalize_report(total, cfg);
}

LatencyBreakdown latency_breakdown(const TimelineRecord& record) {
  std::vector<double> offload, lift_times, e2e;
  for (const auto& s : record.stages) {
    offload.push_back(s.offload_rtt_s);
    lift_times.push_back(s.lift_wall_s);
    e2e.push_back(s.end_to_end_s);
  }
  LatencyBreakdown out;
  out.offload = stage_stats(std::move(offload));
  out.lift = stage_stats(std::move(lift_times));
  out.end_to_end = stage_stats(std::move(e2e));
  return out;
}

void save_timeline(const std::string& path, const TimelineRecord& record) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os.precision(17);
  for (const auto& tick : record.ticks) {
    json j;
    j["kind"] = "tick";
    j["t"] = tick.timestamp;
    j["pose"] = pose_to_json(tick.pose);
    json dets = json::array();
    for (const auto& d : tick.detections) {
      dets.push_back(json{
          {"center", {d.box.center.x(), d.box.center.y(), d.box.center.z()}},
          {"dims", {d.box.dims.x(), d.box.dims.y(), d.box.dims.z()}},
          {"yaw", d.box.yaw},
          {"class_id", d.class_id},
          {"confidence", d.confidence},
          {"view_count", d.view_count},
          {"last_update", d.last_update}});
    }
    j["detections"] = dets;
    os << j.dump() << "\n";
  }
  for (const auto& s : record.stages) {
    json j;
    j["kind"] = "stage";
    j["capture_ts"] = s.capture_ts;
    j["arrival_ts"] = s.arrival_ts;
    j["offload_rtt_s"] = s.offload_rtt_s;
    j["lift_wall_s"] = s.lift_wall_s;
    j["end_to_end_s"] = s.end_to_end_s;
    os << j.dump() << "\n";
  }
}

TimelineRecord load_timeline(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  TimelineRecord record;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw parse_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string kind = j.value("kind", "tick");
    if (kind == "stage") {
      StageTiming s;
      s.capture_ts = j.value("capture_ts", 0.0);
      s.arrival_ts = j.value("arrival_ts", 0.0);
      s.offload_rtt_s = j.value("offload_rtt_s", 0.0);
      s.lift_wall_s = j.value("lift_wall_s", 0.0);
      s.end_to_end_s = j.value("end_to_end_s", 0.0);
      record.stages.push_back(s);
      continue;
    }
    TickRecord tick;
    try {
      tick.timestamp = j.at("t").get<double>();
      tick.pose = pose_from_json(j.at("pose"));
      for (const auto& d : j.at("detections")) {
        Detection3D det;
        const auto& c = d.at("center");
        det.box.center = {c.at(0).get<double>(), c.at(1).get<double>(),
                          c.at(2).get<double>()};
        const auto& dm = d.at("dims");
        det.box.dims = {dm.at(0).get<double>(), dm.at(1).get<double>(),
                        dm.at(2).get<double>()};
        det.box.yaw = d.at("yaw").get<double>();
        det.class_id = d.at("class_id").get<int>();
        det.confidence = d.at("confidence").get<double>();
        det.view_count = d.value("view_count", 1);
        det.last_update = d.value("last_update", 0.0);
        tick.detections.push_back(det);
      }
    } catch (const json::exception& e) {
      throw parse_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    record.ticks.push_back(std::move(tick));
  }
  return record;
}

}  // namespace edgelift
