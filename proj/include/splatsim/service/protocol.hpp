#pragma once

#include "splatsim/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace splatsim::service {

/// Malformed bytes or message on the wire.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kMaxMessageBytes = 64u << 20;

/// 4-byte big-endian length followed by the payload.
std::string encode_length_prefixed(std::string_view payload);
/// Pops one complete message from the front of `buffer`, if present.
std::optional<std::string> decode_length_prefixed(std::string& buffer);

// WebSocket (RFC 6455) framing for browser clients.
std::string websocket_accept_key(std::string_view client_key);
/// 101 response for an HTTP upgrade request; throws ProtocolError when it is not one.
std::string websocket_handshake_response(std::string_view request);
std::string encode_websocket_frame(std::string_view payload, int opcode = 1);
struct WsFrame {
  bool fin = true;
  int opcode = 1;
  std::string payload;
};
std::optional<WsFrame> decode_websocket_frame(std::string& buffer);

// Commands.
struct LoadCmd {
  std::string scene_path;
};
struct StartCmd {};
struct PauseCmd {};
struct ResetCmd {};
struct SetMaterialCmd {
  std::optional<double> youngs_modulus;
  std::optional<double> poisson_ratio;
};
struct ApplyForceCmd {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
  Vec3 force = Vec3::Zero();
  int duration_steps = 1;
};
struct SetCameraCmd {
  nlohmann::json camera;  // subset of camera fields
};
struct GetStateCmd {};
struct StepCmd {
  int count = 1;
};

using Command = std::variant<LoadCmd, StartCmd, PauseCmd, ResetCmd, SetMaterialCmd, ApplyForceCmd, SetCameraCmd,
                             GetStateCmd, StepCmd>;

struct Request {
  std::string name;
  nlohmann::json id;  // echoed back when present
  Command command;
};

/// Parses and validates one client message; throws ProtocolError with the reason.
Request parse_request(std::string_view text);

nlohmann::json error_response(const std::string& cmd, const nlohmann::json& id, const std::string& reason);

}  // namespace splatsim::service
