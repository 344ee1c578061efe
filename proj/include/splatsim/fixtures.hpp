#pragma once

#include "splatsim/frame.hpp"
#include "splatsim/scene.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace splatsim::fixtures {

/// Wavy tissue surface seen by a few nearby cameras, with a tool bar masked in each view.
struct TissueOptions {
  int grid_x = 25;  // grid_x * grid_y ground-truth Gaussians
  int grid_y = 20;
  int views = 3;
  int width = 160;
  int height = 128;
  double focal = 140.0;
  double distance = 3.0;
  std::uint64_t seed = 0;
};

struct TissueFixture {
  Scene ground_truth;
  std::vector<Frame> frames;
};

TissueFixture tissue(const TissueOptions& opts = {});
/// Depth of the tissue surface at (x, y).
double tissue_height(double x, double y);

/// Closed hemisphere shell: a dome bulging toward the camera plus a flat base at
/// z = center.z. Bounds hug the solid with a small margin.
struct HemisphereOptions {
  Vec3 center = Vec3(0, 0, 3);
  double radius = 1.0;
  int dome_points = 1600;
  int base_points = 500;
  std::uint64_t seed = 0;
};
Scene hemisphere(const HemisphereOptions& opts = {});
/// Camera at the origin looking along +z.
Camera front_camera(int width = 160, int height = 128, double focal = 140.0);
/// Signed distance-free membership test for the solid half ball.
bool inside_hemisphere(const HemisphereOptions& opts, const Vec3& p, double tolerance = 0.0);

/// Closed box shell of Gaussians on a regular lattice over [lo, hi].
Scene box_shell(const Vec3& lo, const Vec3& hi, double spacing);

/// Solid lattice of isotropic particles, `n` per axis, spacing `h`, starting at `lo`.
Scene solid_block(const Vec3& lo, const std::array<int, 3>& n, double h);

}  // namespace splatsim::fixtures
