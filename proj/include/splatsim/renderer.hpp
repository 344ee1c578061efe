#pragma once

#include "splatsim/camera.hpp"
#include "splatsim/scene.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace splatsim {

struct RenderOptions {
  double low_pass = 0.3;                // pixel^2 added to the 2D covariance diagonal
  double min_alpha = 1.0 / 255.0;       // contributions below are skipped
  double max_alpha = 1.0;
  double min_transmittance = 1e-4;      // traversal stops once T falls below
  double near_plane = 0.01;
  double footprint_sigmas = 3.0;
  bool normalize_depth = false;         // divide rendered depth by accumulated alpha
  int tile_size = 16;
};

/// Renderer input: a Gaussian with its full 3D covariance. During simulation the
/// covariance comes from F * cov0 * F^T instead of the rotation/scale factorization.
struct Splat {
  Vec3 position = Vec3::Zero();
  Mat3 covariance = Mat3::Identity();
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
};

Splat to_splat(const Gaussian& g);
std::vector<Splat> to_splats(const Scene& scene);

struct ProjectedGaussian {
  Vec2 pixel_center = Vec2::Zero();
  Mat2 cov2d = Mat2::Zero();   // J W Sigma W^T J^T, without the low-pass term
  Mat2 conic = Mat2::Zero();   // (cov2d + low_pass I)^-1
  double depth = 0.0;          // camera z of the center
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  double power_floor = 0.0;    // below this exponent alpha is certainly under min_alpha
  int radius = 0;              // footprint half-width in pixels
  std::size_t source_index = 0;
};

/// Perspective projection of one splat; nullopt when behind the near plane or
/// when the footprint misses the viewport.
std::optional<ProjectedGaussian> project(const Splat& splat, const Camera& cam, const RenderOptions& opts,
                                         std::size_t source_index = 0);

/// Per-frame binning state shared between forward and backward passes.
struct RasterCache;

struct RenderOutput {
  ImageRGB color;
  ImageF depth;
  ImageF alpha;
  std::shared_ptr<const RasterCache> cache;
};

RenderOutput rasterize(std::span<const Splat> splats, const Camera& cam, const RenderOptions& opts = {});
RenderOutput rasterize(const Scene& scene, const Camera& cam, const RenderOptions& opts = {});

/// Gradient of a scalar loss with respect to one Gaussian's stored parameters.
struct GaussianGrad {
  Vec3 position = Vec3::Zero();
  Vec4 rotation = Vec4::Zero();
  Vec3 log_scale = Vec3::Zero();
  Vec3 color = Vec3::Zero();
  double opacity_logit = 0.0;
  Vec2 pixel_center = Vec2::Zero();  // dL / d(projected center), pixels
  bool visible = false;              // projected into this view

  GaussianGrad& operator+=(const GaussianGrad& o);
};

/// Backpropagates L = sum_p grad_color(p) . C(p) + grad_depth(p) * D(p) to every
/// Gaussian of `scene`. `output` must come from rasterize(scene, cam, opts).
std::vector<GaussianGrad> rasterize_backward(const Scene& scene, const Camera& cam, const RenderOutput& output,
                                             const ImageRGB& grad_color, const ImageF& grad_depth,
                                             const RenderOptions& opts = {});

}  // namespace splatsim
