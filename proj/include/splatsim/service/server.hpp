#pragma once

#include "splatsim/config.hpp"

#include <atomic>
#include <optional>
#include <string>

namespace splatsim::service {

/// Accepts TCP clients and gives each its own Session. A client speaks either
/// length-prefixed JSON or, when its first bytes are an HTTP upgrade, WebSocket text
/// frames carrying the same messages.
class Server {
 public:
  Server(PipelineConfig cfg, std::optional<std::string> initial_scene = std::nullopt,
         std::optional<Camera> camera = std::nullopt);
  ~Server();

  /// Binds and listens; returns the bound port (useful when the configured port is 0).
  int listen();
  /// Accept loop; returns after stop().
  void run();
  void stop();

 private:
  void serve_client(int fd);

  PipelineConfig cfg_;
  std::optional<std::string> initial_scene_;
  std::optional<Camera> camera_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::atomic<int> active_{0};
};

}  // namespace splatsim::service
