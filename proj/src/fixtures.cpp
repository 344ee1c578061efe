#include "splatsim/fixtures.hpp"

#include "splatsim/renderer.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <random>

namespace splatsim::fixtures {
namespace {

Vec4 rotation_to_normal(const Vec3& normal) {
  const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), normal.normalized());
  return {q.w(), q.x(), q.y(), q.z()};
}

Vec3 tissue_color(double x, double y) {
  const double vessel = std::exp(-std::pow((y - 0.35 * std::sin(2.2 * x)) / 0.08, 2));
  const double mottle = 0.5 + 0.5 * std::sin(3.1 * x + 1.3) * std::cos(2.7 * y - 0.4);
  Vec3 c(0.78 + 0.12 * mottle, 0.38 + 0.10 * mottle, 0.36 + 0.08 * mottle);
  c = (1.0 - 0.55 * vessel) * c + 0.55 * vessel * Vec3(0.55, 0.12, 0.16);
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

// Tool bar: a slanted band whose offset depends on the view.
bool tool_pixel(int x, int y, int view, int width, int height) {
  const double u = double(x) / width, v = double(y) / height;
  const double offset = 0.25 + 0.22 * view;
  const double d = (u - offset) * 0.8 + (v - 1.0) * 0.6;
  return std::abs(d) < 0.07 && v > 0.35;
}

}  // namespace

double tissue_height(double x, double y) {
  return 0.15 * std::sin(1.7 * x + 0.3) * std::cos(1.3 * y) + 0.05 * x;
}

TissueFixture tissue(const TissueOptions& opts) {
  TissueFixture fx;
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> jitter(-0.25, 0.25);
  std::uniform_real_distribution<double> tint(-0.04, 0.04);
  const double half_w = 0.5 * opts.width / opts.focal * opts.distance * 1.12;
  const double half_h = 0.5 * opts.height / opts.focal * opts.distance * 1.12;
  const double sx = 2 * half_w / (opts.grid_x - 1), sy = 2 * half_h / (opts.grid_y - 1);
  for (int j = 0; j < opts.grid_y; ++j) {
    for (int i = 0; i < opts.grid_x; ++i) {
      const double x = -half_w + (i + jitter(rng)) * sx;
      const double y = -half_h + (j + jitter(rng)) * sy;
      const double z = opts.distance + tissue_height(x, y);
      const double h = 1e-4;
      const Vec3 n(-(tissue_height(x + h, y) - tissue_height(x - h, y)) / (2 * h),
                   -(tissue_height(x, y + h) - tissue_height(x, y - h)) / (2 * h), -1.0);
      Vec3 color = tissue_color(x, y) + Vec3(tint(rng), tint(rng), tint(rng));
      color = color.cwiseMax(0.0).cwiseMin(1.0);
      const Vec3 scale(0.75 * sx, 0.75 * sy, 0.25 * std::min(sx, sy));
      fx.ground_truth.gaussians.push_back(Gaussian::make({x, y, z}, rotation_to_normal(n), scale, color, 0.95));
    }
  }
  fx.ground_truth.bounds = Scene::fit_bounds(fx.ground_truth.gaussians, 0.1);

  const Vec3 target(0, 0, opts.distance);
  const Vec3 eyes[] = {{0, 0, 0}, {0.25, 0.0, 0.05}, {-0.12, 0.2, -0.05}, {0.1, -0.22, 0.0}};
  RenderOptions ropts;
  ropts.normalize_depth = true;
  const Vec3 tool_color(0.72, 0.74, 0.78);
  for (int v = 0; v < opts.views; ++v) {
    const Vec3 eye = eyes[v % 4] * (1 + v / 4);
    Camera cam = Camera::look_at(eye, target, Vec3(0, -1, 0), opts.focal, opts.focal, opts.width, opts.height);
    cam.cx = 0.5 * opts.width;
    cam.cy = 0.5 * opts.height;
    const RenderOutput out = rasterize(fx.ground_truth, cam, ropts);
    Frame f;
    f.index = v;
    f.camera = cam;
    f.image = out.color;
    f.depth = out.depth;
    f.mask = Mask(opts.width, opts.height, 0);
    for (int y = 0; y < opts.height; ++y) {
      for (int x = 0; x < opts.width; ++x) {
        if (tool_pixel(x, y, v, opts.width, opts.height)) {
          f.mask(x, y) = 1;
          f.image(x, y) = tool_color;
          f.depth(x, y) *= 0.5;
        }
      }
    }
    fx.frames.push_back(std::move(f));
  }
  return fx;
}

Scene hemisphere(const HemisphereOptions& opts) {
  Scene scene;
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> tint(-0.05, 0.05);
  const double r = opts.radius;
  const double dome_spacing = r * std::sqrt(2 * std::numbers::pi / opts.dome_points);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  // Fibonacci points on the half sphere z <= center.z.
  for (int i = 0; i < opts.dome_points; ++i) {
    const double h = (i + 0.5) / opts.dome_points;  // cos of angle from the pole
    const double s = std::sqrt(1 - h * h);
    const Vec3 n(s * std::cos(golden * i), s * std::sin(golden * i), -h);
    const Vec3 color = (Vec3(0.82, 0.42, 0.40) + Vec3::Constant(tint(rng))).cwiseMax(0.0).cwiseMin(1.0);
    const Vec3 scale(0.6 * dome_spacing, 0.6 * dome_spacing, 0.2 * dome_spacing);
    scene.gaussians.push_back(Gaussian::make(opts.center + r * n, rotation_to_normal(n), scale, color, 0.9));
  }
  const double base_spacing = r * std::sqrt(std::numbers::pi / opts.base_points);
  for (int i = 0; i < opts.base_points; ++i) {
    const double rho = r * std::sqrt((i + 0.5) / opts.base_points);
    const Vec3 p = opts.center + Vec3(rho * std::cos(golden * i), rho * std::sin(golden * i), 0);
    const Vec3 scale(0.6 * base_spacing, 0.6 * base_spacing, 0.2 * base_spacing);
    scene.gaussians.push_back(Gaussian::make(p, Vec4(1, 0, 0, 0), scale, Vec3(0.6, 0.3, 0.3), 0.9));
  }
  const double margin = 0.05 * r;
  scene.bounds.min = opts.center - Vec3(r, r, r) - Vec3::Constant(margin);
  scene.bounds.max = opts.center + Vec3(r, r, 0) + Vec3::Constant(margin);
  return scene;
}

Camera front_camera(int width, int height, double focal) {
  Camera cam = Camera::look_at(Vec3::Zero(), Vec3::UnitZ(), Vec3(0, -1, 0), focal, focal, width, height);
  return cam;
}

bool inside_hemisphere(const HemisphereOptions& opts, const Vec3& p, double tolerance) {
  return (p - opts.center).norm() <= opts.radius + tolerance && p.z() <= opts.center.z() + tolerance;
}

Scene box_shell(const Vec3& lo, const Vec3& hi, double spacing) {
  Scene scene;
  std::array<int, 3> n;
  for (int a = 0; a < 3; ++a) n[a] = std::max(1, int(std::lround((hi[a] - lo[a]) / spacing)));
  const Vec3 step = (hi - lo).cwiseQuotient(Vec3(n[0], n[1], n[2]));
  const Vec3 scale = Vec3::Constant(0.5 * spacing);
  for (int i = 0; i <= n[0]; ++i) {
    for (int j = 0; j <= n[1]; ++j) {
      for (int k = 0; k <= n[2]; ++k) {
        if (i != 0 && j != 0 && k != 0 && i != n[0] && j != n[1] && k != n[2]) continue;
        const Vec3 p = lo + step.cwiseProduct(Vec3(i, j, k));
        const double shade = 0.7 + 0.3 * double(k) / n[2];
        scene.gaussians.push_back(Gaussian::make(p, Vec4(1, 0, 0, 0), scale, shade * Vec3(0.85, 0.45, 0.42), 0.9));
      }
    }
  }
  const double margin = 0.5 * spacing;
  scene.bounds = {lo - Vec3::Constant(margin), hi + Vec3::Constant(margin)};
  return scene;
}

Scene solid_block(const Vec3& lo, const std::array<int, 3>& n, double h) {
  Scene scene;
  for (int i = 0; i < n[0]; ++i)
    for (int j = 0; j < n[1]; ++j)
      for (int k = 0; k < n[2]; ++k)
        scene.gaussians.push_back(Gaussian::make(lo + h * Vec3(i, j, k), Vec4(1, 0, 0, 0), Vec3::Constant(0.5 * h),
                                                 Vec3(0.8, 0.4, 0.4), 0.9));
  scene.bounds = {lo - Vec3::Constant(h), lo + h * Vec3(n[0] - 1, n[1] - 1, n[2] - 1) + Vec3::Constant(h)};
  scene.cell_volume = h * h * h;
  return scene;
}

}  // namespace splatsim::fixtures
