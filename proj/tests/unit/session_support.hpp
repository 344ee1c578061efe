#pragma once

#include "splatsim/config.hpp"
#include "splatsim/fixtures.hpp"
#include "splatsim/ply_io.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace testing {

/// Thread-safe inbox of JSON messages.
class Inbox {
 public:
  void push(const std::string& text) {
    {
      std::lock_guard lock(mutex_);
      messages_.push_back(nlohmann::json::parse(text));
    }
    cv_.notify_all();
  }

  /// First message satisfying `pred`, waiting up to `timeout`.
  std::optional<nlohmann::json> wait(const std::function<bool(const nlohmann::json&)>& pred,
                                     std::chrono::seconds timeout = std::chrono::seconds(60)) {
    std::unique_lock lock(mutex_);
    std::optional<nlohmann::json> found;
    cv_.wait_for(lock, timeout, [&] {
      for (const auto& m : messages_)
        if (pred(m)) {
          found = m;
          return true;
        }
      return false;
    });
    return found;
  }

  std::optional<nlohmann::json> reply(int id) {
    return wait([id](const nlohmann::json& m) { return m.contains("id") && m["id"] == id; });
  }

  std::size_t count(const std::function<bool(const nlohmann::json&)>& pred) {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& m : messages_) n += pred(m) ? 1 : 0;
    return n;
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<nlohmann::json> messages_;
};

inline bool is_frame(const nlohmann::json& m) { return m.contains("frame"); }

inline splatsim::PipelineConfig small_service_config() {
  splatsim::PipelineConfig c;
  c.sim.grid_resolution = 16;
  c.sim.substeps = 5;
  c.service.width = 64;
  c.service.height = 48;
  c.service.max_steps_per_sec = 200.0;
  c.service.port = 0;
  return c;
}

inline void write_block_scene(const std::filesystem::path& path) {
  splatsim::Scene s = splatsim::fixtures::solid_block(splatsim::Vec3(-0.2, -0.2, 2.8), {5, 5, 5}, 0.1);
  splatsim::save_scene(s, path);
}

}  // namespace testing
