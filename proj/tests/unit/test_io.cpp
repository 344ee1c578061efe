#include "splatsim/fixtures.hpp"
#include "splatsim/frame.hpp"
#include "splatsim/image_io.hpp"
#include "splatsim/ply_io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

using namespace splatsim;
namespace fs = std::filesystem;
using testing::TempDir;

namespace {

Scene sample_scene() {
  Scene s;
  s.gaussians.push_back(Gaussian::make(Vec3(0.1, -0.2, 3.0), Vec4(0.9, 0.1, 0.2, 0.3), Vec3(0.01, 0.02, 0.03),
                                       Vec3(0.9, 0.4, 0.3), 0.7));
  s.gaussians.push_back(Gaussian::make(Vec3(1.0 / 3.0, 2.0, 2.5), Vec4(1, 0, 0, 0), Vec3(0.05, 0.05, 0.05),
                                       Vec3(0.1, 0.2, 0.3), 0.25));
  Gaussian pad = Gaussian::make(Vec3(0, 0, 3.2), Vec4(1, 0, 0, 0), Vec3::Constant(0.02), Vec3(0.5, 0.5, 0.5), 0.5);
  pad.opacity_logit = -std::numeric_limits<double>::infinity();
  pad.padded = true;
  s.gaussians.push_back(pad);
  s.material = {2500.0, 0.3, 1100.0};
  s.bounds = {Vec3(-1, -1, 2), Vec3(1, 2, 4)};
  s.cell_volume = 1e-6;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<Frame> tiny_frames(int count) {
  std::vector<Frame> frames;
  for (int k = 0; k < count; ++k) {
    Frame fr;
    fr.index = k;
    fr.camera = Camera::look_at(Vec3(0.1 * k, 0, 0), Vec3(0, 0, 3), Vec3(0, -1, 0), 8, 8, 6, 4);
    fr.image = ImageRGB(6, 4, Vec3(0.2, 0.4, 0.6));
    fr.depth = ImageF(6, 4, 3.0 + 0.25 * k);
    fr.mask = Mask(6, 4, 0);
    fr.mask(1, 1) = 1;
    frames.push_back(fr);
  }
  return frames;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("scene round-trips through PLY field by field") {
  TempDir dir;
  const Scene s = sample_scene();
  save_scene(s, dir.path / "s.ply");
  const Scene r = load_scene(dir.path / "s.ply");
  REQUIRE(r.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(r.gaussians[i] == s.gaussians[i]);
  CHECK(r.material.youngs_modulus == s.material.youngs_modulus);
  CHECK(r.material.poisson_ratio == s.material.poisson_ratio);
  CHECK(r.material.density == s.material.density);
  CHECK(r.bounds.min == s.bounds.min);
  CHECK(r.bounds.max == s.bounds.max);
  CHECK(r.cell_volume == s.cell_volume);
  CHECK(r.padded_count() == 1);
}

TEST_CASE("empty scene writes a valid file and loads empty") {
  TempDir dir;
  save_scene(Scene{}, dir.path / "e.ply");
  const Scene r = load_scene(dir.path / "e.ply");
  CHECK(r.empty());
  CHECK(r.bounds.empty());
}

TEST_CASE("NaN position is reported at its record") {
  TempDir dir;
  save_scene(sample_scene(), dir.path / "s.ply");
  std::string bytes = slurp(dir.path / "s.ply");
  const std::size_t body = bytes.find("end_header\n") + std::string("end_header\n").size();
  const std::size_t record = 14 * sizeof(double) + 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(bytes.data() + body + record, &nan, sizeof(double));  // x of record 1
  std::ofstream(dir.path / "bad.ply", std::ios::binary) << bytes;
  try {
    load_scene(dir.path / "bad.ply");
    FAIL("expected a parse error");
  } catch (const PlyParseError& e) {
    CHECK(e.record() == 1);
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
  }
}

TEST_CASE("truncated and foreign files are rejected") {
  TempDir dir;
  save_scene(sample_scene(), dir.path / "s.ply");
  std::string bytes = slurp(dir.path / "s.ply");
  std::ofstream(dir.path / "short.ply", std::ios::binary) << bytes.substr(0, bytes.size() - 10);
  CHECK_THROWS_AS(load_scene(dir.path / "short.ply"), PlyParseError);
  std::ofstream(dir.path / "text.ply") << "hello\n";
  CHECK_THROWS_AS(load_scene(dir.path / "text.ply"), PlyParseError);
  CHECK_THROWS_AS(load_scene(dir.path / "missing.ply"), PlyParseError);
}

TEST_CASE("PLY files with float properties and extra fields load") {
  TempDir dir;
  std::string header =
      "ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
      "property float x\nproperty float y\nproperty float z\nproperty float nx\n"
      "property float rot_w\nproperty float rot_x\nproperty float rot_y\nproperty float rot_z\n"
      "property float scale_x\nproperty float scale_y\nproperty float scale_z\n"
      "property float red\nproperty float green\nproperty float blue\nproperty float opacity\nend_header\n";
  const float values[15] = {1, 2, 3, 9, 1, 0, 0, 0, -2, -2, -2, 0.5f, 0.25f, 0.125f, 0};
  header.append(reinterpret_cast<const char*>(values), sizeof(values));
  std::ofstream(dir.path / "f.ply", std::ios::binary) << header;
  const Scene r = load_scene(dir.path / "f.ply");
  REQUIRE(r.size() == 1);
  CHECK(r.gaussians[0].position == Vec3(1, 2, 3));
  CHECK(r.gaussians[0].opacity() == 0.5);
  CHECK_FALSE(r.gaussians[0].padded);
}

TEST_CASE("three complete frames load in index order") {
  TempDir dir;
  auto frames = tiny_frames(3);
  std::swap(frames[0], frames[2]);  // write order must not matter
  save_frames(frames, dir.path);
  const auto loaded = load_frames(dir.path);
  REQUIRE(loaded.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(loaded[k].index == k);
    CHECK(loaded[k].depth(0, 0) == doctest::Approx(3.0 + 0.25 * k));
    CHECK(loaded[k].mask(1, 1) == 1);
    CHECK(loaded[k].mask(0, 0) == 0);
    CHECK(loaded[k].camera.pose().isApprox(tiny_frames(3)[k].camera.pose(), 1e-12));
  }
}

TEST_CASE("mask resolution mismatch names the frame") {
  TempDir dir;
  save_frames(tiny_frames(2), dir.path);
  write_png_gray(dir.path / "mask_00001.png", Mask(3, 3, 0));
  try {
    load_frames(dir.path);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
    CHECK(std::string(e.what()).find("mask") != std::string::npos);
  }
}

TEST_CASE("zero depth at an unmasked pixel is rejected") {
  TempDir dir;
  auto frames = tiny_frames(1);
  frames[0].depth(2, 2) = 0.0;
  save_frames(frames, dir.path);
  CHECK_THROWS_WITH_AS(load_frames(dir.path), doctest::Contains("must be positive"), ValidationError);
  // The same zero under the tool mask is fine.
  frames[0].mask(2, 2) = 1;
  save_frames(frames, dir.path);
  CHECK(load_frames(dir.path).size() == 1);
}

TEST_CASE("missing depth and mask files are listed together") {
  TempDir dir;
  save_frames(tiny_frames(2), dir.path);
  fs::remove(dir.path / "depth_00000.pfm");
  fs::remove(dir.path / "mask_00001.png");
  try {
    load_frames(dir.path);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("depth_00000.pfm") != std::string::npos);
    CHECK(msg.find("mask_00001.png") != std::string::npos);
  }
}

TEST_CASE("cameras.json entries must be complete") {
  TempDir dir;
  std::ofstream(dir.path / "cameras.json") << R"({"frames":[{"index":0,"width":4,"height":4,"fx":1}]})";
  CHECK_THROWS_AS(load_cameras(dir.path / "cameras.json"), ValidationError);
}

TEST_CASE("partial camera updates keep the other fields") {
  const Camera base = fixtures::front_camera();
  const Camera c = camera_from_json({{"fx", 200.0}}, base);
  CHECK(c.fx == 200.0);
  CHECK(c.fy == base.fy);
  CHECK(c.width == base.width);
  CHECK_THROWS_AS(camera_from_json({{"fx", -1.0}}, base), ValidationError);
  CHECK_THROWS_AS(camera_from_json({{"width", "wide"}}, base), ValidationError);
}

TEST_CASE("PNG and PFM round-trip") {
  TempDir dir;
  ImageRGB img(5, 3, Vec3::Zero());
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x) img(x, y) = Vec3(x / 4.0, y / 2.0, 1.0);
  write_png(dir.path / "a.png", img);
  const ImageRGB back = read_png_rgb(dir.path / "a.png");
  for (std::size_t i = 0; i < img.size(); ++i) CHECK((back.data[i] - img.data[i]).cwiseAbs().maxCoeff() <= 0.5 / 255.0);

  ImageF depth(4, 2, 0.0);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) depth(x, y) = 1.5 + x + 10 * y;
  write_pfm(dir.path / "d.pfm", depth);
  const ImageF d2 = read_pfm(dir.path / "d.pfm");
  CHECK(d2.data == depth.data);  // values are exact in float32
}

TEST_CASE("base64 matches the reference alphabet") {
  CHECK(base64_encode({}) == "");
  CHECK(base64_encode({'f'}) == "Zg==");
  CHECK(base64_encode({'f', 'o'}) == "Zm8=");
  CHECK(base64_encode({'f', 'o', 'o', 'b', 'a', 'r'}) == "Zm9vYmFy");
}

}
