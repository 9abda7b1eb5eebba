#include "edgelift/edgenet.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <random>

#include <nlohmann/json.hpp>

#include "edgelift/errors.hpp"

namespace edgelift {

namespace {
using json = nlohmann::json;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

bool valid_type(std::uint8_t t) {
  return t == 1 || t == 2 || t == 3 || t == 4 || t == 255;
}

json pose_to_json(const Pose& pose) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.push_back(pose.rotation(i, j));
  json t = {pose.translation.x(), pose.translation.y(), pose.translation.z()};
  return json{{"r", r}, {"t", t}};
}

Pose pose_from_json(const json& j) {
  Pose pose;
  const auto& r = j.at("r");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) pose.rotation(i, k) = r.at(i * 3 + k).get<double>();
  const auto& t = j.at("t");
  pose.translation = {t.at(0).get<double>(), t.at(1).get<double>(),
                      t.at(2).get<double>()};
  return pose;
}

json box2d_to_json(const Box2D& b) {
  return json{{"u_min", b.u_min}, {"v_min", b.v_min}, {"u_max", b.u_max},
              {"v_max", b.v_max}, {"class_id", b.class_id},
              {"confidence", b.confidence}};
}

Box2D box2d_from_json(const json& j) {
  Box2D b;
  b.u_min = j.at("u_min").get<double>();
  b.v_min = j.at("v_min").get<double>();
  b.u_max = j.at("u_max").get<double>();
  b.v_max = j.at("v_max").get<double>();
  b.class_id = j.at("class_id").get<int>();
  b.confidence = j.at("confidence").get<double>();
  return b;
}

std::vector<std::uint8_t> json_bytes(const json& j) {
  const std::string s = j.dump();
  return {s.begin(), s.end()};
}

json bytes_json(const std::vector<std::uint8_t>& payload) {
  try {
    return json::parse(payload.begin(), payload.end());
  } catch (const json::exception& e) {
    throw parse_error(std::string("payload parse: ") + e.what());
  }
}

// Reads exactly n bytes; returns false on orderly close or hard error.
// EAGAIN (receive timeout) just re-checks `running`.
bool read_exact(int fd, std::uint8_t* buf, std::size_t n,
                const std::atomic<bool>* running = nullptr) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r > 0) {
      got += static_cast<std::size_t>(r);
      continue;
    }
    if (r < 0 && (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR)) {
      if (running && !running->load()) return false;
      if (running) continue;
      return false;
    }
    return false;
  }
  return true;
}

bool write_all(int fd, const std::uint8_t* buf, std::size_t n) {
  std::size_t sent = 0;
  while (sent < n) {
    const ssize_t r = ::send(fd, buf + sent, n - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(r);
  }
  return true;
}

bool send_message(int fd, const WireMessage& msg) {
  const auto bytes = encode(msg);
  return write_all(fd, bytes.data(), bytes.size());
}

}  // namespace

std::vector<std::uint8_t> encode(const WireMessage& msg) {
  if (msg.payload.size() > kMaxPayload) {
    throw oversize_error("encode: payload exceeds 64 MiB");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kWireHeaderSize + msg.payload.size());
  put_u32(out, static_cast<std::uint32_t>(msg.payload.size()));
  out.push_back(static_cast<std::uint8_t>(msg.type));
  put_u64(out, msg.frame_id);
  std::uint64_t ts_bits;
  static_assert(sizeof(ts_bits) == sizeof(msg.capture_timestamp));
  std::memcpy(&ts_bits, &msg.capture_timestamp, sizeof(ts_bits));
  put_u64(out, ts_bits);
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  return out;
}

WireMessage decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kWireHeaderSize) {
    throw framing_error("decode: truncated header");
  }
  const std::uint32_t payload_len = get_u32(bytes.data());
  if (payload_len > kMaxPayload) throw oversize_error("decode: oversize payload");
  if (bytes.size() != kWireHeaderSize + payload_len) {
    throw framing_error("decode: length mismatch");
  }
  if (!valid_type(bytes[4])) throw framing_error("decode: unknown msg type");
  WireMessage msg;
  msg.type = static_cast<MsgType>(bytes[4]);
  msg.frame_id = get_u64(bytes.data() + 5);
  const std::uint64_t ts_bits = get_u64(bytes.data() + 13);
  std::memcpy(&msg.capture_timestamp, &ts_bits, sizeof(ts_bits));
  msg.payload.assign(bytes.begin() + kWireHeaderSize, bytes.end());
  return msg;
}

std::vector<std::uint8_t> serialize_request(const DetectRequestBody& body) {
  json j;
  j["scene"] = body.scene_id;
  j["pose"] = pose_to_json(body.pose);
  j["seed"] = body.seed;
  j["noise"] = {{"bbox_jitter_px", body.noise.bbox_jitter_px},
                {"drop_prob", body.noise.drop_prob}};
  j["intr"] = {{"fx", body.intrinsics.fx}, {"fy", body.intrinsics.fy},
               {"cx", body.intrinsics.cx}, {"cy", body.intrinsics.cy},
               {"width", body.intrinsics.width},
               {"height", body.intrinsics.height}};
  return json_bytes(j);
}

DetectRequestBody parse_request(const std::vector<std::uint8_t>& payload) {
  const json j = bytes_json(payload);
  DetectRequestBody body;
  body.scene_id = j.at("scene").get<std::string>();
  body.pose = pose_from_json(j.at("pose"));
  body.seed = j.at("seed").get<std::uint64_t>();
  body.noise.bbox_jitter_px = j.at("noise").value("bbox_jitter_px", 0.0);
  body.noise.drop_prob = j.at("noise").value("drop_prob", 0.0);
  const auto& intr = j.at("intr");
  body.intrinsics.fx = intr.at("fx").get<double>();
  body.intrinsics.fy = intr.at("fy").get<double>();
  body.intrinsics.cx = intr.at("cx").get<double>();
  body.intrinsics.cy = intr.at("cy").get<double>();
  body.intrinsics.width = intr.at("width").get<int>();
  body.intrinsics.height = intr.at("height").get<int>();
  return body;
}

std::vector<std::uint8_t> serialize_response(const DetectResponseBody& body) {
  json j;
  j["boxes"] = json::array();
  for (const auto& b : body.boxes) j["boxes"].push_back(box2d_to_json(b));
  j["compute_s"] = body.server_compute_s;
  return json_bytes(j);
}

DetectResponseBody parse_response(const std::vector<std::uint8_t>& payload) {
  const json j = bytes_json(payload);
  DetectResponseBody body;
  for (const auto& item : j.at("boxes")) body.boxes.push_back(box2d_from_json(item));
  body.server_compute_s = j.value("compute_s", 0.0);
  return body;
}

void OracleBackend::register_scene(const std::string& id, Scene scene) {
  std::lock_guard lock(mutex_);
  scenes_[id] = std::move(scene);
}

DetectResponseBody OracleBackend::detect(const DetectRequestBody& request) {
  Scene scene;
  {
    std::lock_guard lock(mutex_);
    auto it = scenes_.find(request.scene_id);
    if (it == scenes_.end()) {
      throw config_error("unknown scene id: " + request.scene_id);
    }
    scene = it->second;
  }
  DetectResponseBody response;
  const auto start = std::chrono::steady_clock::now();
  response.boxes = oracle_detect2d(scene, request.pose, request.intrinsics,
                                   request.noise, request.seed);
  response.server_compute_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return response;
}

Server::Server(std::shared_ptr<DetectorBackend> backend, ServerOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {}

Server::~Server() { stop(); }

void Server::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw transport_error("server: socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(options_.port);
  if (::inet_pton(AF_INET, options_.bind_addr.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw transport_error("server: bad bind address " + options_.bind_addr);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listen_fd_, 16) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw transport_error("server: cannot bind " + options_.bind_addr + ":" +
                          std::to_string(options_.port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(conn_mutex_);
    threads.swap(conn_threads_);
  }
  for (auto& t : threads) {
    if (t.joinable()) t.join();
  }
}

void Server::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      continue;
    }
    std::lock_guard lock(conn_mutex_);
    conn_threads_.emplace_back([this, fd] { handle_connection(fd); });
  }
}

void Server::handle_connection(int fd) {
  timeval tv{};
  tv.tv_usec = 100000;  // 100 ms receive slices so stop() is noticed
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  std::mt19937_64 jitter_rng(options_.jitter_seed);
  while (running_) {
    std::uint8_t header[kWireHeaderSize];
    if (!read_exact(fd, header, kWireHeaderSize, &running_)) break;
    const std::uint32_t payload_len = get_u32(header);
    if (payload_len > kMaxPayload || !valid_type(header[4])) {
      WireMessage err;
      err.type = MsgType::Error;
      const std::string what = "malformed frame";
      err.payload.assign(what.begin(), what.end());
      send_message(fd, err);
      break;
    }
    std::vector<std::uint8_t> bytes(header, header + kWireHeaderSize);
    bytes.resize(kWireHeaderSize + payload_len);
    if (payload_len > 0 &&
        !read_exact(fd, bytes.data() + kWireHeaderSize, payload_len, &running_)) {
      break;
    }
    WireMessage msg;
    try {
      msg = decode(bytes);
    } catch (const framing_error&) {
      break;
    }

    WireMessage reply;
    reply.frame_id = msg.frame_id;
    reply.capture_timestamp = msg.capture_timestamp;
    switch (msg.type) {
      case MsgType::Ping:
        reply.type = MsgType::Pong;
        break;
      case MsgType::DetectRequest: {
        double pad = options_.compute_pad_s;
        if (options_.jitter_s > 0.0) {
          pad += std::uniform_real_distribution<double>(
              0.0, options_.jitter_s)(jitter_rng);
        }
        if (pad > 0.0) {
          std::this_thread::sleep_for(std::chrono::duration<double>(pad));
        }
        try {
          auto body = parse_request(msg.payload);
          auto response = backend_->detect(body);
          response.server_compute_s += options_.compute_pad_s;
          reply.type = MsgType::DetectResponse;
          reply.payload = serialize_response(response);
        } catch (const std::exception& e) {
          reply.type = MsgType::Error;
          const std::string what = e.what();
          reply.payload.assign(what.begin(), what.end());
        }
        break;
      }
      default: {
        reply.type = MsgType::Error;
        const std::string what = "unexpected message type";
        reply.payload.assign(what.begin(), what.end());
        break;
      }
    }
    if (!send_message(fd, reply)) break;
    if (reply.type == MsgType::Error && msg.type != MsgType::DetectRequest) break;
  }
  ::close(fd);
}

Client::Client(const std::string& host, std::uint16_t port, int max_inflight,
               double timeout_s)
    : max_inflight_(max_inflight), timeout_s_(timeout_s) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw transport_error("client: socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw transport_error("client: bad host " + host);
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw transport_error("client: cannot connect to " + host + ":" +
                          std::to_string(port));
  }
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  timeval tv{};
  tv.tv_usec = 50000;  // 50 ms slices for deadline checks
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  running_ = true;
  reader_thread_ = std::thread([this] { reader_loop(); });
}

Client::~Client() { close(); }

void Client::close() {
  // The reader may already have cleared running_ on connection loss, so do
  // not early-out on it: the thread still needs joining exactly once.
  running_ = false;
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
  }
  if (reader_thread_.joinable()) reader_thread_.join();
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  fail_all("client closed");
}

int Client::inflight() const {
  std::lock_guard lock(mutex_);
  return static_cast<int>(pending_.size());
}

std::optional<std::future<DetectResult>> Client::detect(
    std::uint64_t frame_id, double capture_timestamp,
    const std::vector<std::uint8_t>& payload) {
  WireMessage msg;
  msg.type = MsgType::DetectRequest;
  msg.frame_id = frame_id;
  msg.capture_timestamp = capture_timestamp;
  msg.payload = payload;

  std::future<DetectResult> future;
  {
    std::lock_guard lock(mutex_);
    if (!running_) throw transport_error("client: connection closed");
    if (static_cast<int>(pending_.size()) >= max_inflight_) {
      return std::nullopt;  // reject-newest backpressure
    }
    Pending pending;
    pending.sent_at = std::chrono::steady_clock::now();
    pending.deadline =
        pending.sent_at + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(timeout_s_));
    future = pending.promise.get_future();
    pending_.emplace(frame_id, std::move(pending));
    const auto bytes = encode(msg);
    if (!write_all(fd_, bytes.data(), bytes.size())) {
      pending_.erase(frame_id);
      throw transport_error("client: send failed");
    }
  }
  return future;
}

bool Client::ping(std::uint64_t frame_id, double wait_s) {
  std::future<bool> future;
  {
    std::lock_guard lock(mutex_);
    if (!running_) return false;
    future = pings_[frame_id].get_future();
    WireMessage msg;
    msg.type = MsgType::Ping;
    msg.frame_id = frame_id;
    const auto bytes = encode(msg);
    if (!write_all(fd_, bytes.data(), bytes.size())) {
      pings_.erase(frame_id);
      return false;
    }
  }
  return future.wait_for(std::chrono::duration<double>(wait_s)) ==
             std::future_status::ready &&
         future.get();
}

void Client::fail_all(const std::string& reason) {
  std::lock_guard lock(mutex_);
  for (auto& [id, pending] : pending_) {
    pending.promise.set_exception(
        std::make_exception_ptr(transport_error(reason)));
  }
  pending_.clear();
  for (auto& [id, promise] : pings_) promise.set_value(false);
  pings_.clear();
}

void Client::reader_loop() {
  std::vector<std::uint8_t> bytes;
  while (running_) {
    // Expire timed-out requests.
    {
      const auto now = std::chrono::steady_clock::now();
      std::lock_guard lock(mutex_);
      for (auto it = pending_.begin(); it != pending_.end();) {
        if (now >= it->second.deadline) {
          it->second.promise.set_exception(std::make_exception_ptr(
              timeout_error("detect request timed out")));
          it = pending_.erase(it);
        } else {
          ++it;
        }
      }
    }
    std::uint8_t header[kWireHeaderSize];
    if (!read_exact(fd_, header, 1, nullptr)) {
      if (!running_) return;
      if (errno == EAGAIN || errno == EWOULDBLOCK) continue;
      break;
    }
    if (!read_exact(fd_, header + 1, kWireHeaderSize - 1, &running_)) break;
    const std::uint32_t payload_len = get_u32(header);
    if (payload_len > kMaxPayload) break;
    bytes.assign(header, header + kWireHeaderSize);
    bytes.resize(kWireHeaderSize + payload_len);
    if (payload_len > 0 &&
        !read_exact(fd_, bytes.data() + kWireHeaderSize, payload_len, &running_)) {
      break;
    }
    WireMessage msg;
    try {
      msg = decode(bytes);
    } catch (const framing_error&) {
      break;
    }
    std::lock_guard lock(mutex_);
    if (msg.type == MsgType::Pong) {
      if (auto it = pings_.find(msg.frame_id); it != pings_.end()) {
        it->second.set_value(true);
        pings_.erase(it);
      }
      continue;
    }
    auto it = pending_.find(msg.frame_id);
    if (it == pending_.end()) continue;  // late reply after timeout
    if (msg.type == MsgType::DetectResponse) {
      try {
        auto body = parse_response(msg.payload);
        DetectResult result;
        result.boxes = std::move(body.boxes);
        result.server_compute_s = body.server_compute_s;
        result.rtt_s = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - it->second.sent_at)
                           .count();
        it->second.promise.set_value(std::move(result));
      } catch (const std::exception&) {
        it->second.promise.set_exception(std::make_exception_ptr(
            framing_error("malformed detect response")));
      }
    } else {
      const std::string what(msg.payload.begin(), msg.payload.end());
      it->second.promise.set_exception(
          std::make_exception_ptr(transport_error("server error: " + what)));
    }
    pending_.erase(it);
  }
  running_ = false;
  fail_all("connection lost");
}

}  // namespace edgelift
