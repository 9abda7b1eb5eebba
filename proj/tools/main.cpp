#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "edgelift/edgenet.hpp"
#include "edgelift/errors.hpp"
#include "edgelift/pipeline.hpp"

namespace fs = std::filesystem;
using namespace edgelift;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitBudget = 3;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw config_error("cannot write " + tmp.string());
    os << content;
  }
  fs::rename(tmp, path);
}

std::string fmt_speed(double speed) {
  std::ostringstream os;
  os << speed;
  return os.str();
}

Scene load_scene_or_default(const std::string& path) {
  if (path.empty()) return make_acceptance_scene();
  return load_scene(path);
}

MetricsConfig default_metrics() {
  MetricsConfig cfg;
  cfg.classes = class_names();
  return cfg;
}

// Ships (scene id, pose, seed) to an edgenet server and blocks per frame.
class RemoteDetector : public Detector2D {
 public:
  RemoteDetector(const std::string& host, std::uint16_t port,
                 std::string scene_id)
      : client_(host, port, 1, 5.0), scene_id_(std::move(scene_id)) {}

  std::vector<Box2D> detect(const Scene&, const Pose& pose,
                            const CameraIntrinsics& intr,
                            const NoiseSpec& noise,
                            std::uint64_t seed) override {
    DetectRequestBody body;
    body.scene_id = scene_id_;
    body.pose = pose;
    body.seed = seed;
    body.noise = noise;
    body.intrinsics = intr;
    auto future = client_.detect(next_frame_++, 0.0, serialize_request(body));
    if (!future) throw transport_error("detector backpressure on sync client");
    return future->get().boxes;
  }

 private:
  Client client_;
  std::string scene_id_;
  std::uint64_t next_frame_ = 0;
};

struct RunOptions {
  std::string scene_path;
  std::string out_dir = "out";
  std::vector<std::string> scenarios{"1", "2", "3"};
  std::vector<double> speeds{0.5, 1.0, 2.0};
  std::string variant = "hybrid";  // hybrid | mono3d | both
  double latency_ms = 0.0;
  double jitter_ms = 0.0;
  double compute_ms = 0.0;
  double bbox_jitter_px = 0.0;
  double drop_prob = 0.0;
  double depth_noise_m = 0.0;
  double depth_dropout = 0.0;
  double edge_band_px = 0.0;
  double fps = 30.0;
  double range = 2.0;
  double radius = 1.5;
  double standoff = 3.0;  // approach runs end 1 m out, not on the target
  bool no_compensation = false;
  bool no_fusion = false;
  bool aabb = false;
  bool timelines = false;  // also dump per-cell timeline JSONL
  std::uint64_t seed = 42;
  std::string server;  // host:port for remote 2D detection
  std::string scene_id = "default";
};

std::pair<std::string, std::uint16_t> split_host_port(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon + 1 >= s.size()) {
    throw config_error("expected host:port, got " + s);
  }
  return {s.substr(0, colon),
          static_cast<std::uint16_t>(std::stoi(s.substr(colon + 1)))};
}

int cmd_run(const RunOptions& opt) {
  const Scene scene = load_scene_or_default(opt.scene_path);
  fs::create_directories(opt.out_dir);
  const MetricsConfig metrics_cfg = default_metrics();

  std::vector<Variant> variants;
  if (opt.variant == "both") {
    variants = {Variant::Hybrid, Variant::MonolithicEdge3D};
  } else {
    variants = {variant_from_string(opt.variant)};
  }

  InProcessOracle oracle;
  std::unique_ptr<RemoteDetector> remote;
  if (!opt.server.empty()) {
    const auto [host, port] = split_host_port(opt.server);
    remote = std::make_unique<RemoteDetector>(host, port, opt.scene_id);
  }
  Detector2D& detector = remote ? static_cast<Detector2D&>(*remote) : oracle;

  // summary rows: one per variant x scenario; cells are recall@0.25 at each
  // speed in "speed@0.5/1/2" slash form, per class plus average.
  std::ostringstream summary;
  summary << "| variant | scenario |";
  for (const auto& cls : metrics_cfg.classes) {
    summary << " " << cls << "@";
    for (std::size_t i = 0; i < opt.speeds.size(); ++i) {
      summary << (i ? "/" : "") << fmt_speed(opt.speeds[i]);
    }
    summary << " |";
  }
  summary << " average@";
  for (std::size_t i = 0; i < opt.speeds.size(); ++i) {
    summary << (i ? "/" : "") << fmt_speed(opt.speeds[i]);
  }
  summary << " |\n|---|---|";
  for (std::size_t i = 0; i <= metrics_cfg.classes.size(); ++i) summary << "---|";
  summary << "\n";

  for (Variant variant : variants) {
    for (const auto& scenario_name : opt.scenarios) {
      const ScenarioKind scenario = scenario_from_string(scenario_name);
      // class -> recall@0.25 per speed
      std::vector<std::map<int, double>> per_speed;
      std::vector<double> avg_per_speed;

      for (double speed : opt.speeds) {
        TrajectorySpec traj_spec;
        traj_spec.scenario = scenario;
        traj_spec.speed = speed;
        traj_spec.range = opt.range;
        traj_spec.radius = opt.radius;
        traj_spec.standoff = opt.standoff;
        traj_spec.fps = opt.fps;

        PipelineConfig cfg;
        cfg.variant = variant;
        cfg.compensation = !opt.no_compensation;
        cfg.fusion = !opt.no_fusion;
        cfg.method = opt.aabb ? FitMethod::AABB : FitMethod::MinAreaRect;
        cfg.latency.fixed = opt.latency_ms / 1000.0;
        cfg.latency.jitter = opt.jitter_ms / 1000.0;
        cfg.latency.model_compute = opt.compute_ms / 1000.0;
        cfg.noise.bbox_jitter_px = opt.bbox_jitter_px;
        cfg.noise.drop_prob = opt.drop_prob;
        cfg.noise.depth_noise_m = opt.depth_noise_m;
        cfg.noise.depth_dropout = opt.depth_dropout;
        cfg.noise.edge_dropout_band_px = opt.edge_band_px;
        cfg.seed = opt.seed;

        const TimelineRecord record =
            run(scene, make_trajectory(traj_spec), cfg, detector);
        const MetricsReport report = evaluate_run(record, scene, metrics_cfg);

        const std::string cell = to_string(variant) + "_s" + scenario_name +
                                 "_speed" + fmt_speed(speed);
        write_atomic(fs::path(opt.out_dir) / (cell + ".csv"),
                     report_table(report, TableFormat::Csv));
        if (opt.timelines) {
          save_timeline((fs::path(opt.out_dir) / (cell + ".jsonl")).string(),
                        record);
        }

        std::map<int, double> row;
        for (const auto& [cls, m] : report.per_class) {
          row[cls] = m.recall_at.count(0.25) ? m.recall_at.at(0.25) : 0.0;
        }
        per_speed.push_back(std::move(row));
        avg_per_speed.push_back(report.average.recall_at.count(0.25)
                                    ? report.average.recall_at.at(0.25)
                                    : 0.0);
      }

      summary << "| " << to_string(variant) << " | " << scenario_name << " |";
      for (int cls = 0; cls < static_cast<int>(metrics_cfg.classes.size());
           ++cls) {
        summary << " ";
        for (std::size_t i = 0; i < per_speed.size(); ++i) {
          summary << (i ? "/" : "");
          if (auto it = per_speed[i].find(cls); it != per_speed[i].end()) {
            std::ostringstream v;
            v.precision(3);
            v << it->second;
            summary << v.str();
          } else {
            summary << "-";
          }
        }
        summary << " |";
      }
      summary << " ";
      for (std::size_t i = 0; i < avg_per_speed.size(); ++i) {
        std::ostringstream v;
        v.precision(3);
        v << avg_per_speed[i];
        summary << (i ? "/" : "") << v.str();
      }
      summary << " |\n";
    }
  }

  write_atomic(fs::path(opt.out_dir) / "summary.md", summary.str());
  std::cout << summary.str();
  return kExitOk;
}

int cmd_serve(const std::string& bind_addr, std::uint16_t port,
              double compute_ms, double jitter_ms,
              const std::string& scene_path, const std::string& scene_id,
              double run_seconds) {
  auto backend = std::make_shared<OracleBackend>();
  backend->register_scene(scene_id, load_scene_or_default(scene_path));

  ServerOptions opts;
  opts.bind_addr = bind_addr;
  opts.port = port;
  opts.compute_pad_s = compute_ms / 1000.0;
  opts.jitter_s = jitter_ms / 1000.0;
  Server server(backend, opts);
  server.start();
  std::cout << "listening on " << bind_addr << ":" << server.port() << "\n"
            << std::flush;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto started = std::chrono::steady_clock::now();
  while (!g_interrupted) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (run_seconds > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      started)
                .count() >= run_seconds) {
      break;
    }
  }
  server.stop();
  return kExitOk;
}

int cmd_bench(int frames, double budget_ms, const std::string& scene_path,
              std::uint64_t seed) {
  const Scene scene = load_scene_or_default(scene_path);
  const auto intr = default_depth_intrinsics();

  TrajectorySpec spec;
  spec.scenario = ScenarioKind::Circling;
  spec.speed = 1.0;
  const auto full = make_trajectory(spec);  // cycled below when frames > poses

  FilterConfig filter;
  std::vector<double> lift_ms;
  lift_ms.reserve(static_cast<std::size_t>(frames));
  int lifted = 0;
  for (int i = 0; i < frames; ++i) {
    const Pose& pose = full[static_cast<std::size_t>(i) % full.size()].second;
    const DepthFrame frame =
        render_depth(scene, pose, intr, NoiseSpec{}, seed + i);
    const auto boxes = oracle_detect2d(scene, pose, intr, NoiseSpec{}, seed + i);
    const auto start = std::chrono::steady_clock::now();
    for (const auto& box : boxes) {
      try {
        lift(frame, box, filter, FitMethod::MinAreaRect);
        ++lifted;
      } catch (const std::runtime_error&) {
      }
    }
    lift_ms.push_back(std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count());
  }

  std::sort(lift_ms.begin(), lift_ms.end());
  double sum = 0.0;
  for (double v : lift_ms) sum += v;
  const double mean = sum / static_cast<double>(lift_ms.size());
  const std::size_t idx = static_cast<std::size_t>(std::ceil(
                              0.95 * static_cast<double>(lift_ms.size()))) -
                          1;
  const double p95 = lift_ms[std::min(idx, lift_ms.size() - 1)];

  std::cout << "frames: " << frames << "\nlifted boxes: " << lifted
            << "\nlift mean: " << mean << " ms\nlift p95: " << p95
            << " ms\nbudget: " << budget_ms << " ms\n";
  if (p95 > budget_ms) {
    std::cout << "OVER BUDGET\n";
    return kExitBudget;
  }
  return kExitOk;
}

int cmd_eval(const std::string& record_path, const std::string& scene_path,
             const std::string& csv_out) {
  const Scene scene = load_scene_or_default(scene_path);
  const TimelineRecord record = load_timeline(record_path);
  const MetricsReport report = evaluate_run(record, scene, default_metrics());
  std::cout << report_table(report, TableFormat::Markdown);
  if (!csv_out.empty()) {
    write_atomic(csv_out, report_table(report, TableFormat::Csv));
  }

  const LatencyBreakdown lat = latency_breakdown(record);
  std::cout << "\nend-to-end mean " << lat.end_to_end.mean * 1000.0
            << " ms, p95 " << lat.end_to_end.p95 * 1000.0 << " ms, max "
            << lat.end_to_end.max * 1000.0 << " ms\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edge-assisted hybrid 3D detection toolkit"};
  app.require_subcommand(1);

  // run
  RunOptions run_opt;
  if (const char* env = std::getenv("EDGELIFT_SERVER")) run_opt.server = env;
  auto* run_cmd = app.add_subcommand("run", "execute an experiment grid");
  run_cmd->add_option("--scene", run_opt.scene_path, "scene JSON file");
  run_cmd->add_option("--out", run_opt.out_dir, "output directory");
  run_cmd->add_option("--scenarios", run_opt.scenarios,
                      "scenario list (1|2|3 or names)");
  run_cmd->add_option("--speeds", run_opt.speeds, "speed grid, m/s");
  run_cmd->add_option("--variant", run_opt.variant, "hybrid | mono3d | both");
  run_cmd->add_option("--latency-ms", run_opt.latency_ms, "fixed network latency");
  run_cmd->add_option("--jitter-ms", run_opt.jitter_ms, "latency jitter half-width");
  run_cmd->add_option("--compute-ms", run_opt.compute_ms, "emulated model compute");
  run_cmd->add_option("--bbox-jitter-px", run_opt.bbox_jitter_px,
                      "2D corner jitter std-dev");
  run_cmd->add_option("--drop-prob", run_opt.drop_prob, "missed-detection rate");
  run_cmd->add_option("--depth-noise-m", run_opt.depth_noise_m,
                      "depth noise std-dev");
  run_cmd->add_option("--depth-dropout", run_opt.depth_dropout,
                      "depth dropout probability");
  run_cmd->add_option("--edge-band-px", run_opt.edge_band_px,
                      "silhouette dropout band");
  run_cmd->add_option("--fps", run_opt.fps, "capture rate");
  run_cmd->add_option("--range", run_opt.range, "path length, meters");
  run_cmd->add_option("--radius", run_opt.radius, "circling distance, meters");
  run_cmd->add_option("--standoff", run_opt.standoff,
                      "initial camera-target horizontal distance, meters");
  run_cmd->add_flag("--timelines", run_opt.timelines,
                    "also dump per-cell timeline JSONL files");
  run_cmd->add_flag("--no-compensation", run_opt.no_compensation,
                    "disable motion compensation");
  run_cmd->add_flag("--no-fusion", run_opt.no_fusion,
                    "last-write-wins instead of fusion");
  run_cmd->add_flag("--aabb", run_opt.aabb, "axis-aligned footprint fit");
  run_cmd->add_option("--seed", run_opt.seed, "RNG seed");
  run_cmd->add_option("--server", run_opt.server,
                      "host:port of a detect server (default: in-process; env "
                      "EDGELIFT_SERVER)");
  run_cmd->add_option("--scene-id", run_opt.scene_id,
                      "scene id registered on the server");

  // serve
  std::string bind_addr = "127.0.0.1";
  std::uint16_t port = 9000;
  double serve_compute_ms = 0.0, serve_jitter_ms = 0.0, run_seconds = 0.0;
  std::string serve_scene, serve_scene_id = "default", backend_name = "oracle";
  auto* serve_cmd = app.add_subcommand("serve", "run the edge detect server");
  serve_cmd->add_option("--bind", bind_addr, "bind address");
  serve_cmd->add_option("--port", port, "TCP port (0 = ephemeral)");
  serve_cmd->add_option("--backend", backend_name, "detector backend")
      ->check(CLI::IsMember({"oracle"}));
  serve_cmd->add_option("--compute-ms", serve_compute_ms,
                        "per-request compute pad");
  serve_cmd->add_option("--jitter-ms", serve_jitter_ms, "compute jitter");
  serve_cmd->add_option("--scene", serve_scene, "scene JSON file");
  serve_cmd->add_option("--scene-id", serve_scene_id, "id to register it under");
  serve_cmd->add_option("--run-seconds", run_seconds,
                        "exit after this long (0 = until interrupted)");

  // bench
  int bench_frames = 100;
  double budget_ms = 33.0;
  std::string bench_scene;
  std::uint64_t bench_seed = 42;
  auto* bench_cmd = app.add_subcommand("bench", "time the lift stage");
  bench_cmd->add_option("--frames", bench_frames, "number of frames")
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--budget-ms", budget_ms, "p95 budget");
  bench_cmd->add_option("--scene", bench_scene, "scene JSON file");
  bench_cmd->add_option("--seed", bench_seed, "RNG seed");

  // eval
  std::string record_path, eval_scene, eval_csv;
  auto* eval_cmd = app.add_subcommand("eval", "re-score a timeline dump");
  eval_cmd->add_option("record", record_path, "timeline JSONL file")->required();
  eval_cmd->add_option("--scene", eval_scene, "scene JSON file");
  eval_cmd->add_option("--csv", eval_csv, "also write the CSV table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run_opt);
    if (serve_cmd->parsed()) {
      return cmd_serve(bind_addr, port, serve_compute_ms, serve_jitter_ms,
                       serve_scene, serve_scene_id, run_seconds);
    }
    if (bench_cmd->parsed()) {
      return cmd_bench(bench_frames, budget_ms, bench_scene, bench_seed);
    }
    if (eval_cmd->parsed()) return cmd_eval(record_path, eval_scene, eval_csv);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
