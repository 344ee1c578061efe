#include "splatsim/service/server.hpp"

#include "splatsim/service/session.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>

namespace splatsim::service {
namespace {

bool write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(std::size_t(n));
  }
  return true;
}

}  // namespace

Server::Server(PipelineConfig cfg, std::optional<std::string> initial_scene, std::optional<Camera> camera)
    : cfg_(std::move(cfg)), initial_scene_(std::move(initial_scene)), camera_(std::move(camera)) {
  cfg_.validate();
}

Server::~Server() {
  stop();
  while (active_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(5));
}

int Server::listen() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw RuntimeFailure(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(std::uint16_t(cfg_.service.port));
  if (::inet_pton(AF_INET, cfg_.service.host.c_str(), &addr.sin_addr) != 1)
    throw ValidationError("service.host must be an IPv4 address: " + cfg_.service.host);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
    throw RuntimeFailure("bind " + cfg_.service.host + ":" + std::to_string(cfg_.service.port) + ": " +
                         std::strerror(errno));
  if (::listen(listen_fd_, 16) < 0) throw RuntimeFailure(std::string("listen: ") + std::strerror(errno));
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

void Server::stop() {
  stopping_ = true;
}

void Server::run() {
  if (listen_fd_ < 0) listen();
  while (!stopping_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, 100);
    if (r <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    ++active_;
    std::thread([this, fd] {
      try {
        serve_client(fd);
      } catch (const std::exception& e) {
        spdlog::warn("client error: {}", e.what());
      }
      ::close(fd);
      --active_;
    }).detach();
  }
  ::close(listen_fd_);
  listen_fd_ = -1;
}

void Server::serve_client(int fd) {
  std::string buffer;
  char chunk[65536];
  auto read_more = [&]() -> bool {
    for (;;) {
      if (stopping_) return false;
      pollfd p{fd, POLLIN, 0};
      const int r = ::poll(&p, 1, 100);
      if (r == 0) continue;
      if (r < 0 && errno == EINTR) continue;
      if (r < 0) return false;
      const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n <= 0) return false;
      buffer.append(chunk, std::size_t(n));
      return true;
    }
  };

  // Sniff the transport from the first bytes.
  while (buffer.size() < 4)
    if (!read_more()) return;
  const bool websocket = buffer.starts_with("GET ");
  if (websocket) {
    while (buffer.find("\r\n\r\n") == std::string::npos) {
      if (buffer.size() > 16384 || !read_more()) return;
    }
    const std::size_t end = buffer.find("\r\n\r\n") + 4;
    std::string response;
    try {
      response = websocket_handshake_response(std::string_view(buffer).substr(0, end));
    } catch (const ProtocolError& e) {
      write_all(fd, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n");
      return;
    }
    buffer.erase(0, end);
    if (!write_all(fd, response)) return;
  }
  spdlog::info("client connected ({})", websocket ? "websocket" : "length-prefixed");

  std::atomic<bool> broken{false};
  std::mutex write_mutex;
  auto write_locked = [&](std::string_view wire) {
    std::lock_guard lock(write_mutex);
    if (!write_all(fd, wire)) broken = true;
  };
  Session::Sink sink = [&](const std::string& msg) {
    if (broken) return;
    write_locked(websocket ? encode_websocket_frame(msg) : encode_length_prefixed(msg));
  };
  Session session(cfg_, sink, camera_);
  if (initial_scene_) session.submit(nlohmann::json{{"cmd", "load"}, {"scene_path", *initial_scene_}}.dump());

  std::string fragments;
  try {
    for (;;) {
      if (broken) break;
      if (websocket) {
        std::optional<WsFrame> f = decode_websocket_frame(buffer);
        if (!f) {
          if (!read_more()) break;
          continue;
        }
        if (f->opcode == 0x8) {
          write_locked(encode_websocket_frame("", 0x8));
          break;
        }
        if (f->opcode == 0x9) {
          write_locked(encode_websocket_frame(f->payload, 0xA));
          continue;
        }
        if (f->opcode == 0xA) continue;
        fragments += f->payload;
        if (!f->fin) continue;
        session.submit(fragments);
        fragments.clear();
      } else {
        std::optional<std::string> msg = decode_length_prefixed(buffer);
        if (!msg) {
          if (!read_more()) break;
          continue;
        }
        session.submit(*msg);
      }
    }
  } catch (const ProtocolError& e) {
    spdlog::warn("closing client: {}", e.what());
  }
  session.stop();
  spdlog::info("client disconnected");
}

}  // namespace splatsim::service
