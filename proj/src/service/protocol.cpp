#include "splatsim/service/protocol.hpp"

#include "splatsim/image_io.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace splatsim::service {

using nlohmann::json;

std::string encode_length_prefixed(std::string_view payload) {
  if (payload.size() > kMaxMessageBytes) throw ProtocolError("message too large");
  const auto n = std::uint32_t(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(char((n >> shift) & 0xff));
  out.append(payload);
  return out;
}

std::optional<std::string> decode_length_prefixed(std::string& buffer) {
  if (buffer.size() < 4) return std::nullopt;
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n = (n << 8) | std::uint8_t(buffer[i]);
  if (n > kMaxMessageBytes) throw ProtocolError("declared message length " + std::to_string(n) + " exceeds limit");
  if (buffer.size() < 4 + std::size_t(n)) return std::nullopt;
  std::string payload = buffer.substr(4, n);
  buffer.erase(0, 4 + std::size_t(n));
  return payload;
}

std::string websocket_accept_key(std::string_view client_key) {
  const std::string joined = std::string(client_key) + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  std::vector<std::uint8_t> digest(SHA_DIGEST_LENGTH);
  SHA1(reinterpret_cast<const unsigned char*>(joined.data()), joined.size(), digest.data());
  return base64_encode(digest);
}

std::string websocket_handshake_response(std::string_view request) {
  if (!request.starts_with("GET ")) throw ProtocolError("not an HTTP upgrade request");
  std::string key;
  std::size_t pos = request.find("\r\n");
  while (pos != std::string_view::npos && pos + 2 < request.size()) {
    const std::size_t end = request.find("\r\n", pos + 2);
    const std::string_view line = request.substr(pos + 2, end == std::string_view::npos ? end : end - pos - 2);
    const std::size_t colon = line.find(':');
    if (colon != std::string_view::npos) {
      std::string name(line.substr(0, colon));
      std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
      if (name == "sec-websocket-key") {
        std::string_view value = line.substr(colon + 1);
        while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
        while (!value.empty() && value.back() == ' ') value.remove_suffix(1);
        key = value;
      }
    }
    pos = end;
  }
  if (key.empty()) throw ProtocolError("missing Sec-WebSocket-Key header");
  return "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: " +
         websocket_accept_key(key) + "\r\n\r\n";
}

std::string encode_websocket_frame(std::string_view payload, int opcode) {
  std::string out;
  out.push_back(char(0x80 | (opcode & 0x0f)));
  const std::uint64_t n = payload.size();
  if (n < 126) {
    out.push_back(char(n));
  } else if (n <= 0xffff) {
    out.push_back(char(126));
    out.push_back(char((n >> 8) & 0xff));
    out.push_back(char(n & 0xff));
  } else {
    out.push_back(char(127));
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(char((n >> shift) & 0xff));
  }
  out.append(payload);
  return out;
}

std::optional<WsFrame> decode_websocket_frame(std::string& buffer) {
  if (buffer.size() < 2) return std::nullopt;
  const auto b0 = std::uint8_t(buffer[0]), b1 = std::uint8_t(buffer[1]);
  std::size_t header = 2;
  std::uint64_t n = b1 & 0x7f;
  if (n == 126) {
    if (buffer.size() < 4) return std::nullopt;
    n = (std::uint64_t(std::uint8_t(buffer[2])) << 8) | std::uint8_t(buffer[3]);
    header = 4;
  } else if (n == 127) {
    if (buffer.size() < 10) return std::nullopt;
    n = 0;
    for (int i = 0; i < 8; ++i) n = (n << 8) | std::uint8_t(buffer[2 + i]);
    header = 10;
  }
  if (n > kMaxMessageBytes) throw ProtocolError("websocket frame too large");
  const bool masked = b1 & 0x80;
  const std::size_t mask_at = header;
  if (masked) header += 4;
  if (buffer.size() < header + n) return std::nullopt;
  WsFrame f;
  f.fin = b0 & 0x80;
  f.opcode = b0 & 0x0f;
  f.payload = buffer.substr(header, std::size_t(n));
  if (masked)
    for (std::size_t i = 0; i < f.payload.size(); ++i) f.payload[i] ^= buffer[mask_at + (i & 3)];
  buffer.erase(0, header + std::size_t(n));
  return f;
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed) {
  std::set<std::string> ok{"cmd", "id"};
  for (const char* a : allowed) ok.insert(a);
  for (const auto& item : j.items())
    if (!ok.count(item.key())) throw ProtocolError("unknown field '" + item.key() + "'");
}

const json& require(const json& j, const char* key) {
  if (!j.contains(key)) throw ProtocolError(std::string("missing field '") + key + "'");
  return j.at(key);
}

double number(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number()) throw ProtocolError(std::string("field '") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ProtocolError(std::string("field '") + key + "' must be finite");
  return d;
}

Vec3 vec3(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); }))
    throw ProtocolError(std::string("field '") + key + "' must be an array of 3 numbers");
  Vec3 out(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  if (!out.allFinite()) throw ProtocolError(std::string("field '") + key + "' must be finite");
  return out;
}

int positive_int(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number_integer() || v.get<long long>() < 1 || v.get<long long>() > 1000000)
    throw ProtocolError(std::string("field '") + key + "' must be an integer in [1, 1000000]");
  return v.get<int>();
}

}  // namespace

Request parse_request(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ProtocolError("message is not valid JSON");
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");
  if (!j.contains("cmd") || !j["cmd"].is_string()) throw ProtocolError("missing string field 'cmd'");
  Request r;
  r.name = j["cmd"].get<std::string>();
  if (j.contains("id")) r.id = j["id"];
  const std::string& c = r.name;
  if (c == "load") {
    check_keys(j, {"scene_path"});
    const json& p = require(j, "scene_path");
    if (!p.is_string() || p.get<std::string>().empty()) throw ProtocolError("field 'scene_path' must be a non-empty string");
    r.command = LoadCmd{p.get<std::string>()};
  } else if (c == "start") {
    check_keys(j, {});
    r.command = StartCmd{};
  } else if (c == "pause") {
    check_keys(j, {});
    r.command = PauseCmd{};
  } else if (c == "reset") {
    check_keys(j, {});
    r.command = ResetCmd{};
  } else if (c == "set_material") {
    check_keys(j, {"E", "nu"});
    SetMaterialCmd m;
    if (j.contains("E")) m.youngs_modulus = number(j, "E");
    if (j.contains("nu")) m.poisson_ratio = number(j, "nu");
    if (!m.youngs_modulus && !m.poisson_ratio) throw ProtocolError("set_material needs 'E' and/or 'nu'");
    r.command = m;
  } else if (c == "apply_force") {
    check_keys(j, {"center", "radius", "force", "duration_steps"});
    ApplyForceCmd f;
    f.center = vec3(j, "center");
    f.radius = number(j, "radius");
    if (!(f.radius > 0)) throw ProtocolError("field 'radius' must be > 0");
    f.force = vec3(j, "force");
    f.duration_steps = positive_int(j, "duration_steps");
    r.command = f;
  } else if (c == "set_camera") {
    check_keys(j, {"camera"});
    const json& cam = require(j, "camera");
    if (!cam.is_object()) throw ProtocolError("field 'camera' must be an object");
    for (const auto& item : cam.items()) {
      static const std::set<std::string> fields{"fx", "fy", "cx", "cy", "width", "height", "world_to_camera"};
      if (!fields.count(item.key())) throw ProtocolError("unknown camera field '" + item.key() + "'");
    }
    r.command = SetCameraCmd{cam};
  } else if (c == "get_state") {
    check_keys(j, {});
    r.command = GetStateCmd{};
  } else if (c == "step") {
    check_keys(j, {"count"});
    StepCmd s;
    if (j.contains("count")) s.count = positive_int(j, "count");
    r.command = s;
  } else {
    throw ProtocolError("unknown command '" + c + "'");
  }
  return r;
}

json error_response(const std::string& cmd, const json& id, const std::string& reason) {
  json out{{"ok", false}, {"error", reason}};
  if (!cmd.empty()) out["cmd"] = cmd;
  if (!id.is_null()) out["id"] = id;
  return out;
}

}  // namespace splatsim::service
