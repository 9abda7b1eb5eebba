#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "edgelift/geometry.hpp"
#include "edgelift/simkit.hpp"

namespace edgelift {

enum class MsgType : std::uint8_t {
  DetectRequest = 1,
  DetectResponse = 2,
  Ping = 3,
  Pong = 4,
  Error = 255,
};

// Framing: u32 LE payload length, u8 msg_type, u64 LE frame_id,
// f64 LE capture_timestamp, payload bytes. Payload capped at 64 MiB.
struct WireMessage {
  MsgType type = MsgType::Ping;
  std::uint64_t frame_id = 0;
  double capture_timestamp = 0.0;
  std::vector<std::uint8_t> payload;

  bool operator==(const WireMessage&) const = default;
};

constexpr std::size_t kWireHeaderSize = 21;
constexpr std::size_t kMaxPayload = 64ull * 1024 * 1024;

std::vector<std::uint8_t> encode(const WireMessage& msg);
WireMessage decode(const std::vector<std::uint8_t>& bytes);

// Simulation detect payload: scene reference + pose + seed instead of pixels.
struct DetectRequestBody {
  std::string scene_id;
  Pose pose;
  std::uint64_t seed = 0;
  NoiseSpec noise;
  CameraIntrinsics intrinsics;
};

struct DetectResponseBody {
  std::vector<Box2D> boxes;
  double server_compute_s = 0.0;
};

std::vector<std::uint8_t> serialize_request(const DetectRequestBody& body);
DetectRequestBody parse_request(const std::vector<std::uint8_t>& payload);
std::vector<std::uint8_t> serialize_response(const DetectResponseBody& body);
DetectResponseBody parse_response(const std::vector<std::uint8_t>& payload);

class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;
  virtual DetectResponseBody detect(const DetectRequestBody& request) = 0;
};

// Runs simkit's oracle detector on registered scenes.
class OracleBackend : public DetectorBackend {
 public:
  void register_scene(const std::string& id, Scene scene);
  DetectResponseBody detect(const DetectRequestBody& request) override;

 private:
  std::map<std::string, Scene> scenes_;
  std::mutex mutex_;
};

struct ServerOptions {
  std::string bind_addr = "127.0.0.1";
  std::uint16_t port = 0;  // 0 = ephemeral
  double compute_pad_s = 0.0;
  double jitter_s = 0.0;
  std::uint64_t jitter_seed = 1;
};

class Server {
 public:
  Server(std::shared_ptr<DetectorBackend> backend, ServerOptions options);
  ~Server();

  void start();  // throws transport_error if the bind fails
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  void accept_loop();
  void handle_connection(int fd);

  std::shared_ptr<DetectorBackend> backend_;
  ServerOptions options_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex conn_mutex_;
  std::vector<std::thread> conn_threads_;
};

struct DetectResult {
  std::vector<Box2D> boxes;
  double server_compute_s = 0.0;
  double rtt_s = 0.0;
};

// Asynchronous offload client. At most max_inflight unresolved requests;
// newer submissions past the limit are rejected (reject-newest backpressure).
class Client {
 public:
  Client(const std::string& host, std::uint16_t port, int max_inflight = 3,
         double timeout_s = 1.0);
  ~Client();

  // Returns an empty optional when rejected by backpressure.
  std::optional<std::future<DetectResult>> detect(
      std::uint64_t frame_id, double capture_timestamp,
      const std::vector<std::uint8_t>& payload);

  bool ping(std::uint64_t frame_id, double wait_s = 1.0);
  int inflight() const;
  void close();

 private:
  struct Pending {
    std::promise<DetectResult> promise;
    std::chrono::steady_clock::time_point sent_at;
    std::chrono::steady_clock::time_point deadline;
  };

  void reader_loop();
  void fail_all(const std::string& reason);

  int fd_ = -1;
  int max_inflight_;
  double timeout_s_;
  std::atomic<bool> running_{false};
  std::thread reader_thread_;
  mutable std::mutex mutex_;
  std::map<std::uint64_t, Pending> pending_;
  std::map<std::uint64_t, std::promise<bool>> pings_;
};

}  // namespace edgelift
