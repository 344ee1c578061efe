#include "splatsim/service/session.hpp"
#include "session_support.hpp"
#include "support.hpp"

#include <doctest.h>

#include <thread>

using namespace splatsim;
using namespace splatsim::service;
using nlohmann::json;
using testing::Inbox;

namespace {

std::string cmd(json j, int id) {
  j["id"] = id;
  return j.dump();
}

}  // namespace

TEST_SUITE("session") {

TEST_CASE("commands before a scene is loaded are refused") {
  Inbox inbox;
  Session s(testing::small_service_config(), [&](const std::string& m) { inbox.push(m); });
  s.submit(cmd({{"cmd", "start"}}, 1));
  s.submit(cmd({{"cmd", "get_state"}}, 2));
  s.submit(cmd({{"cmd", "apply_force"}, {"center", {0, 0, 3}}, {"radius", 0.1}, {"force", {0, 0, 1}}, {"duration_steps", 1}}, 3));
  const auto start = inbox.reply(1);
  REQUIRE(start);
  CHECK((*start)["ok"] == false);
  CHECK((*start)["phase"] == "empty");
  const auto state = inbox.reply(2);
  REQUIRE(state);
  CHECK((*state)["phase"] == "empty");
  CHECK((*state)["material"].is_null());
  CHECK((*inbox.reply(3))["ok"] == false);
}

TEST_CASE("malformed input is answered without changing state") {
  Inbox inbox;
  Session s(testing::small_service_config(), [&](const std::string& m) { inbox.push(m); });
  s.submit("{not json");
  s.submit(R"({"cmd":"step","count":-1,"id":5})");
  const auto bad = inbox.wait([](const json& m) { return m.contains("error") && !m.contains("id"); });
  REQUIRE(bad);
  CHECK((*bad)["ok"] == false);
  const auto step = inbox.reply(5);
  REQUIRE(step);
  CHECK((*step)["cmd"] == "step");
  CHECK((*step)["error"].get<std::string>().find("count") != std::string::npos);
}

TEST_CASE("load, step, push, pause and reset walk through the phases") {
  testing::TempDir dir;
  testing::write_block_scene(dir.path / "block.ply");
  Inbox inbox;
  Session s(testing::small_service_config(), [&](const std::string& m) { inbox.push(m); });

  s.submit(cmd({{"cmd", "load"}, {"scene_path", (dir.path / "missing.ply").string()}}, 1));
  CHECK((*inbox.reply(1))["ok"] == false);

  s.submit(cmd({{"cmd", "load"}, {"scene_path", (dir.path / "block.ply").string()}}, 2));
  const auto loaded = inbox.reply(2);
  REQUIRE(loaded);
  CHECK((*loaded)["phase"] == "loaded");
  CHECK((*loaded)["gaussian_count"] == 125);
  CHECK(inbox.wait([](const json& m) { return testing::is_frame(m) && m["frame"]["step"] == 0; }));

  s.submit(cmd({{"cmd", "apply_force"}, {"center", {0, 0, 40}}, {"radius", 0.1}, {"force", {0, 0, 1}}, {"duration_steps", 1}}, 3));
  const auto empty = inbox.reply(3);
  REQUIRE(empty);
  CHECK((*empty)["ok"] == true);
  CHECK((*empty)["queued"] == false);
  CHECK((*empty).contains("warning"));

  s.submit(cmd({{"cmd", "apply_force"}, {"center", {0, 0, 2.8}}, {"radius", 0.15}, {"force", {0, 0, 20}}, {"duration_steps", 2}}, 4));
  CHECK((*inbox.reply(4))["queued"] == true);
  s.submit(cmd({{"cmd", "step"}, {"count", 3}}, 5));
  const auto stepped = inbox.reply(5);
  REQUIRE(stepped);
  CHECK((*stepped)["step"] == 3);
  const auto frame = inbox.wait([](const json& m) { return testing::is_frame(m) && m["frame"]["step"] == 3; });
  REQUIRE(frame);
  CHECK((*frame)["frame"]["image_b64"].get<std::string>().starts_with("iVBORw0KGgo"));  // PNG signature

  s.submit(cmd({{"cmd", "set_material"}, {"E", 5000.0}}, 6));
  CHECK((*inbox.reply(6))["material"]["E"] == 5000.0);
  s.submit(cmd({{"cmd", "set_material"}, {"nu", 0.6}}, 7));
  CHECK((*inbox.reply(7))["ok"] == false);

  s.submit(cmd({{"cmd", "start"}}, 8));
  CHECK((*inbox.reply(8))["phase"] == "running");
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  s.submit(cmd({{"cmd", "pause"}}, 9));
  CHECK((*inbox.reply(9))["phase"] == "paused");
  s.submit(cmd({{"cmd", "get_state"}}, 10));
  const auto state = inbox.reply(10);
  REQUIRE(state);
  CHECK((*state)["phase"] == "paused");
  CHECK((*state)["step"].get<int>() >= 3);
  CHECK((*state)["gaussian_count"] == 125);
  CHECK((*state)["material"]["E"] == 5000.0);
  CHECK((*state)["center_depth"].is_number());

  s.submit(cmd({{"cmd", "reset"}}, 11));
  const auto reset = inbox.reply(11);
  REQUIRE(reset);
  CHECK((*reset)["phase"] == "loaded");
  CHECK((*reset)["step"] == (*state)["step"]);  // the counter keeps running across resets

  s.submit(cmd({{"cmd", "set_camera"}, {"camera", {{"fx", 80.0}}}}, 12));
  CHECK((*inbox.reply(12))["camera"]["fx"] == 80.0);
  s.stop();
}

}
