#include "splatsim/config.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace splatsim;
using nlohmann::json;
using testing::TempDir;

TEST_SUITE("config") {

TEST_CASE("defaults survive a round trip through JSON") {
  const PipelineConfig d;
  CHECK_NOTHROW(d.validate());
  const json j = to_json(d);
  CHECK(to_json(merge_json(PipelineConfig{}, j)) == j);
  CHECK(j["sim"]["domain"].is_null());
  CHECK(j["sim"]["faces"]["+z"] == "sticky");
}

TEST_CASE("a config file overrides only the fields it names") {
  const PipelineConfig c = merge_json({}, json::parse(R"({"optim": {"eta": 0.5, "lr": {"color": 0.01}},
                                                          "sim": {"faces": {"-x": "free"}, "base_face": "-z"}})"));
  CHECK(c.optim.eta == 0.5);
  CHECK(c.optim.lr.color == 0.01);
  CHECK(c.optim.lr.opacity == LearningRates{}.opacity);
  CHECK(c.optim.huber_delta == OptimConfig{}.huber_delta);
  CHECK(c.sim.faces[kNegX] == Boundary::free);
  CHECK(c.sim.faces[kPosX] == Boundary::sticky);
  CHECK(c.sim.base_face == kNegZ);
  CHECK_FALSE(c.material_overridden);
}

TEST_CASE("command line overrides win over the file") {
  TempDir dir;
  std::ofstream(dir.path / "c.json") << R"({"material": {"youngs_modulus": 1500}, "padding": {"grid": 50}})";
  PipelineConfig c = load_config((dir.path / "c.json").string());
  CHECK(c.material.youngs_modulus == 1500.0);
  CHECK(c.material_overridden);
  c = apply_overrides(c, {"padding.grid=70", "sim.gravity=[0,-9.8,0]", "service.host=0.0.0.0"});
  CHECK(c.padding.grid == 70);
  CHECK(c.material.youngs_modulus == 1500.0);
  CHECK(c.sim.gravity == Vec3(0, -9.8, 0));
  CHECK(c.service.host == "0.0.0.0");
}

TEST_CASE("unknown keys and wrong types are rejected with their path") {
  CHECK_THROWS_WITH_AS(merge_json({}, json::parse(R"({"optim": {"etaa": 1}})")),
                       doctest::Contains("optim.etaa"), ValidationError);
  CHECK_THROWS_WITH_AS(merge_json({}, json::parse(R"({"bogus": 1})")), doctest::Contains("bogus"), ValidationError);
  CHECK_THROWS_WITH_AS(merge_json({}, json::parse(R"({"padding": {"grid": 1.5}})")),
                       doctest::Contains("padding.grid"), ValidationError);
  CHECK_THROWS_AS(merge_json({}, json::parse(R"({"sim": {"faces": {"up": "free"}}})")), ValidationError);
  CHECK_THROWS_AS(merge_json({}, json::parse(R"({"sim": {"domain": {"min": [1,1,1], "max": [0,0,0]}}})")),
                  ValidationError);
  CHECK_THROWS_AS(apply_overrides({}, {"padding.grid"}), ValidationError);
  CHECK_THROWS_AS(apply_overrides({}, {"padding..grid=3"}), ValidationError);
}

TEST_CASE("a domain can be set and cleared") {
  PipelineConfig c = merge_json({}, json::parse(R"({"sim": {"domain": {"min": [0,0,0], "max": [1,2,3]}}})"));
  REQUIRE(c.sim.domain.has_value());
  CHECK(c.sim.domain->max == Vec3(1, 2, 3));
  c = merge_json(c, json::parse(R"({"sim": {"domain": null}})"));
  CHECK_FALSE(c.sim.domain.has_value());
}

TEST_CASE("validation catches out of range values") {
  PipelineConfig c;
  c.service.port = 70000;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = PipelineConfig{};
  c.material.poisson_ratio = 0.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = PipelineConfig{};
  c.padding.grid = 1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ValidationError);
}

}
