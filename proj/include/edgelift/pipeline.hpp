#pragma once

#include <string>
#include <vector>

#include "edgelift/depthlift.hpp"
#include "edgelift/fusion.hpp"
#include "edgelift/metrics.hpp"
#include "edgelift/simkit.hpp"

namespace edgelift {

enum class Variant { Hybrid, MonolithicEdge3D };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct PipelineConfig {
  Variant variant = Variant::Hybrid;
  bool compensation = true;
  bool fusion = true;
  FilterConfig filter;
  FitMethod method = FitMethod::MinAreaRect;
  LatencySpec latency;
  NoiseSpec noise;
  RegistryConfig registry;
  CameraIntrinsics intrinsics;  // defaulted to the 360x360 sensor in run()
  std::uint64_t seed = 42;
};

// One display tick: what the user would see overlaid at this instant.
struct TickRecord {
  double timestamp = 0.0;
  Pose pose;
  std::vector<Detection3D> detections;  // world frame
};

// Per-offload-result stage timings. Offload RTT and end-to-end arrival are
// virtual (simulation clock); lift time is measured wall clock.
struct StageTiming {
  double capture_ts = 0.0;
  double arrival_ts = 0.0;
  double offload_rtt_s = 0.0;
  double lift_wall_s = 0.0;
  double end_to_end_s = 0.0;
};

struct TimelineRecord {
  std::vector<TickRecord> ticks;
  std::vector<StageTiming> stages;
  int lift_failures = 0;  // per-frame lift errors, logged and skipped
};

// Pluggable 2D detector front end. The in-process oracle keeps runs
// deterministic; a remote client (edgenet) satisfies the same interface.
class Detector2D {
 public:
  virtual ~Detector2D() = default;
  virtual std::vector<Box2D> detect(const Scene& scene, const Pose& pose,
                                    const CameraIntrinsics& intr,
                                    const NoiseSpec& noise,
                                    std::uint64_t seed) = 0;
};

class InProcessOracle : public Detector2D {
 public:
  std::vector<Box2D> detect(const Scene& scene, const Pose& pose,
                            const CameraIntrinsics& intr, const NoiseSpec& noise,
                            std::uint64_t seed) override;
};

// Discrete-event run over a precomputed trajectory. Depth frames are rendered
// fresh at result-arrival ticks; the stale inputs are the 2D results only.
TimelineRecord run(const Scene& scene,
                   const std::vector<std::pair<double, Pose>>& trajectory,
                   const PipelineConfig& cfg, Detector2D& detector);

// Scores the active detection set against the (static) ground truth at every
// display tick; values are tick-aggregated.
MetricsReport evaluate_run(const TimelineRecord& record, const Scene& scene,
                           const MetricsConfig& cfg);

struct StageStats {
  double mean = 0.0;
  double p95 = 0.0;
  double max = 0.0;
};

struct LatencyBreakdown {
  StageStats offload;
  StageStats lift;
  StageStats end_to_end;
};

LatencyBreakdown latency_breakdown(const TimelineRecord& record);

// Line-delimited dump for offline analysis / cmd_eval.
void save_timeline(const std::string& path, const TimelineRecord& record);
TimelineRecord load_timeline(const std::string& path);

}  // namespace edgelift
