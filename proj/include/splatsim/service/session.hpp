#pragma once

#include "splatsim/camera.hpp"
#include "splatsim/config.hpp"
#include "splatsim/service/protocol.hpp"
#include "splatsim/simulation.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace splatsim::service {

enum class Phase { empty, loaded, running, paused };
const char* phase_name(Phase p);

/// One client's simulation. Commands are queued and applied by the loop thread at
/// step boundaries; frames are rendered and encoded on a separate thread from
/// post-step snapshots, keeping only the newest one (latest wins).
class Session {
 public:
  /// Receives serialized JSON messages; called from several threads, never concurrently.
  using Sink = std::function<void(const std::string&)>;

  /// `camera` fixes the initial view; otherwise one is framed around each loaded scene.
  Session(PipelineConfig cfg, Sink sink, std::optional<Camera> camera = std::nullopt);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Validates one raw message; malformed input is answered immediately.
  void submit(std::string_view raw);
  /// Stops both threads; pending commands are dropped.
  void stop();

  std::int64_t frames_sent() const { return frames_sent_; }
  std::int64_t frames_dropped() const { return frames_dropped_; }

 private:
  struct Snapshot {
    std::int64_t step = 0;
    double ms = 0.0;
    std::vector<Splat> splats;
    Camera camera;
  };

  void loop();
  void encoder();
  void send(const nlohmann::json& msg);
  nlohmann::json handle(const Request& req);
  nlohmann::json state() const;
  void run_step();
  void publish();
  Camera default_camera(const Aabb& bounds) const;
  void fail(const std::string& reason);
  double center_depth() const;

  PipelineConfig cfg_;
  Sink sink_;
  std::mutex sink_mutex_;

  // Owned by the loop thread (phase is also read by submit for error reports).
  std::atomic<Phase> phase_{Phase::empty};
  bool camera_fixed_ = false;
  std::unique_ptr<Simulation> sim_;
  Camera camera_;
  std::int64_t step_counter_ = 0;
  double last_step_ms_ = 0.0;
  double steps_per_sec_ = 0.0;
  std::chrono::steady_clock::time_point next_step_at_{};

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<Request> queue_;
  bool stopping_ = false;

  std::mutex frame_mutex_;
  std::condition_variable frame_cv_;
  std::optional<Snapshot> pending_frame_;
  bool frame_stopping_ = false;

  std::atomic<std::int64_t> frames_sent_{0};
  std::atomic<std::int64_t> frames_dropped_{0};

  std::thread loop_thread_;
  std::thread encoder_thread_;
};

}  // namespace splatsim::service
