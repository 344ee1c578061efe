#include "splatsim/renderer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace splatsim {

// The fields the per-pixel loop touches, packed into one cache line.
struct alignas(64) TileSplat {
  double cx, cy;
  double conic_xx, conic_xy, conic_yy;
  double opacity;
  double power_floor;
  float radius;
  std::uint32_t index;  // into RasterCache::projected
  float reach_x, reach_y;  // half-extents of the region where alpha can reach min_alpha
};

struct RasterCache {
  RenderOptions opts;
  int width = 0;
  int height = 0;
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<ProjectedGaussian> projected;
  std::vector<std::uint32_t> tile_offsets;  // tiles + 1
  std::vector<std::uint32_t> tile_entries;  // indices into `projected`, front to back
  std::vector<TileSplat> tile_splats;       // hot fields of tile_entries, same layout
};

namespace {

struct PixelRange {
  int x0, x1, y0, y1;  // inclusive
};

PixelRange footprint(const ProjectedGaussian& p, int width, int height) {
  const double r = p.radius;
  return {std::max(0, int(std::ceil(p.pixel_center.x() - r))), std::min(width - 1, int(std::floor(p.pixel_center.x() + r))),
          std::max(0, int(std::ceil(p.pixel_center.y() - r))), std::min(height - 1, int(std::floor(p.pixel_center.y() + r)))};
}

Mat23 projection_jacobian(const Vec3& t, const Camera& cam) {
  const double inv_z = 1.0 / t.z();
  const double inv_z2 = inv_z * inv_z;
  Mat23 j;
  j << cam.fx * inv_z, 0.0, -cam.fx * t.x() * inv_z2,
       0.0, cam.fy * inv_z, -cam.fy * t.y() * inv_z2;
  return j;
}

std::shared_ptr<RasterCache> bin(std::span<const Splat> splats, const Camera& cam, const RenderOptions& opts) {
  auto cache = std::make_shared<RasterCache>();
  cache->opts = opts;
  cache->width = cam.width;
  cache->height = cam.height;
  const int ts = std::max(1, opts.tile_size);
  cache->tiles_x = (cam.width + ts - 1) / ts;
  cache->tiles_y = (cam.height + ts - 1) / ts;
  const std::size_t num_tiles = std::size_t(cache->tiles_x) * std::size_t(cache->tiles_y);

  std::vector<std::optional<ProjectedGaussian>> slots(splats.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(splats.size()); ++i) {
    // Anything that can never reach min_alpha is invisible.
    if (splats[i].opacity < opts.min_alpha) continue;
    slots[i] = project(splats[i], cam, opts, std::size_t(i));
  }
  for (auto& s : slots)
    if (s) cache->projected.push_back(*s);

  auto& proj = cache->projected;
  std::vector<std::uint32_t> order(proj.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (proj[a].depth != proj[b].depth) return proj[a].depth < proj[b].depth;
    return proj[a].source_index < proj[b].source_index;
  });

  std::vector<std::uint32_t> counts(num_tiles + 1, 0);
  auto tile_range = [&](const ProjectedGaussian& p) {
    const PixelRange r = footprint(p, cam.width, cam.height);
    return std::array<int, 4>{r.x0 / ts, r.x1 / ts, r.y0 / ts, r.y1 / ts};
  };
  for (std::uint32_t idx : order) {
    const auto t = tile_range(proj[idx]);
    for (int ty = t[2]; ty <= t[3]; ++ty)
      for (int tx = t[0]; tx <= t[1]; ++tx) ++counts[std::size_t(ty) * cache->tiles_x + tx + 1];
  }
  std::partial_sum(counts.begin(), counts.end(), counts.begin());
  cache->tile_entries.resize(counts.back());
  std::vector<std::uint32_t> cursor(counts.begin(), counts.end() - 1);
  for (std::uint32_t idx : order) {
    const auto t = tile_range(proj[idx]);
    for (int ty = t[2]; ty <= t[3]; ++ty)
      for (int tx = t[0]; tx <= t[1]; ++tx) cache->tile_entries[cursor[std::size_t(ty) * cache->tiles_x + tx]++] = idx;
  }
  cache->tile_offsets = std::move(counts);
  cache->tile_splats.resize(cache->tile_entries.size());
  for (std::size_t e = 0; e < cache->tile_entries.size(); ++e) {
    const std::uint32_t idx = cache->tile_entries[e];
    const ProjectedGaussian& p = proj[idx];
    // Level set -0.5 d^T conic d = power_floor has half-extents sqrt(-2 floor cov_ii).
    const double det = p.conic.determinant();
    const double level = -2.0 * p.power_floor;
    double rx = p.radius;
    double ry = p.radius;
    if (level >= 0.0) {  // false for NaN: keep the full footprint
      rx = std::min(rx, std::sqrt(level * p.conic(1, 1) / det));
      ry = std::min(ry, std::sqrt(level * p.conic(0, 0) / det));
    }
    cache->tile_splats[e] = {p.pixel_center.x(), p.pixel_center.y(), p.conic(0, 0), p.conic(0, 1), p.conic(1, 1),
                             p.opacity, p.power_floor, float(p.radius), idx, float(rx), float(ry)};
  }
  return cache;
}

struct Contribution {
  std::uint32_t entry;  // position inside the tile list
  double alpha;
  double transmittance;  // before this Gaussian
  double gauss;          // exp(power)
  bool clamped;
};

/// Walks one pixel front to back, calling `visit` for every contributing Gaussian.
template <typename Visit>
void traverse_pixel(const RasterCache& cache, std::uint32_t begin, std::span<const std::uint32_t> entries, int px,
                    int py, Visit&& visit) {
  const RenderOptions& o = cache.opts;
  double t = 1.0;
  for (const std::uint32_t e : entries) {
    const TileSplat& p = cache.tile_splats[e];
    const double dx = px - p.cx;
    const double dy = py - p.cy;
    if (std::abs(dx) > p.radius || std::abs(dy) > p.radius) continue;
    const double power = -0.5 * (p.conic_xx * dx * dx + p.conic_yy * dy * dy) - p.conic_xy * dx * dy;
    if (power > 0.0 || power < p.power_floor) continue;
    const double gauss = std::exp(power);
    double alpha = p.opacity * gauss;
    bool clamped = false;
    if (alpha > o.max_alpha) {
      alpha = o.max_alpha;
      clamped = true;
    }
    if (alpha < o.min_alpha) continue;
    visit(Contribution{e - begin, alpha, t, gauss, clamped}, cache.projected[p.index], dx, dy);
    t *= 1.0 - alpha;
    if (t < o.min_transmittance) break;
  }
}

constexpr int kSubtile = 4;

/// Visits every pixel of `tile` in 4x4 blocks. Each block first gathers the
/// tile entries whose footprint can reach it, so pixels skip most misses.
template <typename Fn>
void for_each_pixel(const RasterCache& cache, std::size_t tile, std::vector<std::uint32_t>& scratch, Fn&& fn) {
  const int ts = std::max(1, cache.opts.tile_size);
  const std::uint32_t begin = cache.tile_offsets[tile];
  const std::uint32_t end = cache.tile_offsets[tile + 1];
  if (begin == end) return;
  const int x_lo = int(tile % cache.tiles_x) * ts;
  const int y_lo = int(tile / cache.tiles_x) * ts;
  const int x_hi = std::min(cache.width, x_lo + ts);
  const int y_hi = std::min(cache.height, y_lo + ts);
  for (int by = y_lo; by < y_hi; by += kSubtile) {
    for (int bx = x_lo; bx < x_hi; bx += kSubtile) {
      const int ex = std::min(x_hi, bx + kSubtile) - 1;
      const int ey = std::min(y_hi, by + kSubtile) - 1;
      scratch.clear();
      // Half a pixel of slack keeps the gather conservative; the exact test
      // happens per pixel.
      for (std::uint32_t e = begin; e < end; ++e) {
        const TileSplat& p = cache.tile_splats[e];
        const double rx = p.reach_x + 0.5;
        const double ry = p.reach_y + 0.5;
        if (p.cx + rx < bx || p.cx - rx > ex || p.cy + ry < by || p.cy - ry > ey) continue;
        scratch.push_back(e);
      }
      for (int py = by; py <= ey; ++py)
        for (int px = bx; px <= ex; ++px) fn(px, py, begin, std::span<const std::uint32_t>(scratch));
    }
  }
}

}  // namespace

GaussianGrad& GaussianGrad::operator+=(const GaussianGrad& o) {
  position += o.position;
  rotation += o.rotation;
  log_scale += o.log_scale;
  color += o.color;
  opacity_logit += o.opacity_logit;
  pixel_center += o.pixel_center;
  visible = visible || o.visible;
  return *this;
}

Splat to_splat(const Gaussian& g) { return {g.position, g.covariance(), g.color, g.opacity()}; }

std::vector<Splat> to_splats(const Scene& scene) {
  std::vector<Splat> out(scene.gaussians.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = to_splat(scene.gaussians[i]);
  return out;
}

std::optional<ProjectedGaussian> project(const Splat& splat, const Camera& cam, const RenderOptions& opts,
                                         std::size_t source_index) {
  const Vec3 t = cam.to_camera(splat.position);
  if (!(t.z() > opts.near_plane)) return std::nullopt;

  const Mat23 jw = projection_jacobian(t, cam) * cam.rotation;
  Mat2 cov2d = jw * splat.covariance * jw.transpose();
  cov2d(1, 0) = cov2d(0, 1) = 0.5 * (cov2d(0, 1) + cov2d(1, 0));

  Mat2 filtered = cov2d;
  filtered(0, 0) += opts.low_pass;
  filtered(1, 1) += opts.low_pass;
  const double det = filtered.determinant();
  if (!(det > 0.0)) return std::nullopt;

  ProjectedGaussian p;
  p.cov2d = cov2d;
  p.conic << filtered(1, 1) / det, -filtered(0, 1) / det, -filtered(1, 0) / det, filtered(0, 0) / det;
  p.pixel_center = {cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy};
  p.depth = t.z();
  p.color = splat.color;
  p.opacity = splat.opacity;
  // A small margin keeps the skip conservative; borderline cases still go through exp.
  p.power_floor = std::log(opts.min_alpha / splat.opacity) - 1e-6;
  p.source_index = source_index;

  const double mid = 0.5 * (filtered(0, 0) + filtered(1, 1));
  const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
  p.radius = int(std::ceil(opts.footprint_sigmas * std::sqrt(lambda_max)));

  const double r = p.radius;
  if (p.pixel_center.x() + r < 0.0 || p.pixel_center.x() - r > cam.width - 1 || p.pixel_center.y() + r < 0.0 ||
      p.pixel_center.y() - r > cam.height - 1)
    return std::nullopt;
  return p;
}

RenderOutput rasterize(std::span<const Splat> splats, const Camera& cam, const RenderOptions& opts) {
  auto cache = bin(splats, cam, opts);
  RenderOutput out;
  out.color = ImageRGB(cam.width, cam.height, Vec3::Zero());
  out.depth = ImageF(cam.width, cam.height, 0.0);
  out.alpha = ImageF(cam.width, cam.height, 0.0);

  const std::ptrdiff_t num_tiles = std::ptrdiff_t(cache->tiles_x) * cache->tiles_y;
#pragma omp parallel
  {
    std::vector<std::uint32_t> scratch;
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t tile = 0; tile < num_tiles; ++tile) {
      for_each_pixel(*cache, std::size_t(tile), scratch,
                     [&](int px, int py, std::uint32_t begin, std::span<const std::uint32_t> entries) {
                       Vec3 c = Vec3::Zero();
                       double d = 0.0;
                       double a = 0.0;
                       traverse_pixel(*cache, begin, entries, px, py,
                                      [&](const Contribution& k, const ProjectedGaussian& p, double, double) {
                                        const double w = k.alpha * k.transmittance;
                                        c += w * p.color;
                                        d += w * p.depth;
                                        a += w;
                                      });
                       if (opts.normalize_depth && a > 0.0) d /= a;
                       out.color(px, py) = c;
                       out.depth(px, py) = d;
                       out.alpha(px, py) = a;
                     });
    }
  }
  out.cache = std::move(cache);
  return out;
}

RenderOutput rasterize(const Scene& scene, const Camera& cam, const RenderOptions& opts) {
  const auto splats = to_splats(scene);
  return rasterize(std::span<const Splat>(splats), cam, opts);
}

namespace {

struct ScreenGrad {
  Vec2 mean = Vec2::Zero();
  Mat2 conic = Mat2::Zero();
  double depth = 0.0;
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;

  void add(const ScreenGrad& o) {
    mean += o.mean;
    conic += o.conic;
    depth += o.depth;
    color += o.color;
    opacity += o.opacity;
  }
};

/// d L / d q for R(q / |q|), given G = d L / d R.
Vec4 rotation_grad(const Vec4& q_raw, const Mat3& g) {
  const double n = q_raw.norm();
  const Vec4 q = q_raw / n;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 dq;
  dq[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  dq[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
               w * g(2, 1) - 2 * x * g(2, 2));
  dq[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
               z * g(2, 1) - 2 * y * g(2, 2));
  dq[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
               x * g(2, 0) + y * g(2, 1));
  return (dq - q * q.dot(dq)) / n;
}

GaussianGrad chain_to_parameters(const Gaussian& g, const ProjectedGaussian& p, const ScreenGrad& s,
                                 const Camera& cam) {
  GaussianGrad out;
  out.visible = true;
  out.color = s.color;
  const double op = sigmoid(g.opacity_logit);
  out.opacity_logit = s.opacity * op * (1.0 - op);
  out.pixel_center = s.mean;

  const Mat3& w = cam.rotation;
  const Vec3 t = cam.to_camera(g.position);
  const double tx = t.x(), ty = t.y(), tz = t.z();
  const double inv_z = 1.0 / tz, inv_z2 = inv_z * inv_z, inv_z3 = inv_z2 * inv_z;
  const Mat23 j = projection_jacobian(t, cam);
  const Mat23 tm = j * w;

  const Mat3 r = g.rotation_matrix();
  const Vec3 scale = g.scale();
  const Mat3 m = r * scale.asDiagonal();
  const Mat3 sigma = m * m.transpose();

  // Conic is the inverse of the filtered 2D covariance.
  const Mat2 g_cov2d = -p.conic * s.conic * p.conic;
  const Mat23 g_t = 2.0 * g_cov2d * tm * sigma;
  const Mat3 g_sigma = tm.transpose() * g_cov2d * tm;
  const Mat23 g_j = g_t * w.transpose();

  Vec3 g_cam;
  g_cam.x() = s.mean.x() * cam.fx * inv_z + g_j(0, 2) * (-cam.fx * inv_z2);
  g_cam.y() = s.mean.y() * cam.fy * inv_z + g_j(1, 2) * (-cam.fy * inv_z2);
  g_cam.z() = -s.mean.x() * cam.fx * tx * inv_z2 - s.mean.y() * cam.fy * ty * inv_z2 + s.depth +
              g_j(0, 0) * (-cam.fx * inv_z2) + g_j(0, 2) * (2.0 * cam.fx * tx * inv_z3) +
              g_j(1, 1) * (-cam.fy * inv_z2) + g_j(1, 2) * (2.0 * cam.fy * ty * inv_z3);
  out.position = w.transpose() * g_cam;

  const Mat3 g_m = 2.0 * g_sigma * m;
  const Mat3 g_r = g_m * scale.asDiagonal();
  const Mat3 rt_gm = r.transpose() * g_m;
  for (int k = 0; k < 3; ++k) out.log_scale[k] = rt_gm(k, k) * scale[k];
  out.rotation = rotation_grad(g.rotation, g_r);
  return out;
}

}  // namespace

std::vector<GaussianGrad> rasterize_backward(const Scene& scene, const Camera& cam, const RenderOutput& output,
                                             const ImageRGB& grad_color, const ImageF& grad_depth,
                                             const RenderOptions& opts) {
  std::shared_ptr<const RasterCache> cache = output.cache;
  if (!cache || cache->width != cam.width || cache->height != cam.height) {
    const auto splats = to_splats(scene);
    cache = bin(splats, cam, opts);
  }
  const RasterCache& c = *cache;
  const RenderOptions& o = c.opts;
  const std::size_t num_tiles = std::size_t(c.tiles_x) * c.tiles_y;

  // Per-tile accumulators indexed like tile_entries; reduced in tile order below so
  // the result does not depend on thread scheduling.
  std::vector<ScreenGrad> local(c.tile_entries.size());
#pragma omp parallel
  {
    std::vector<Contribution> contribs;
    std::vector<const ProjectedGaussian*> owners;
    std::vector<Vec2> offsets;
    std::vector<std::uint32_t> scratch;
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t tile = 0; tile < std::ptrdiff_t(num_tiles); ++tile) {
      for_each_pixel(c, std::size_t(tile), scratch,
                     [&](int px, int py, std::uint32_t begin, std::span<const std::uint32_t> entries) {
        const Vec3 gc = grad_color(px, py);
        double gd = grad_depth(px, py);
        if (gc.isZero(0.0) && gd == 0.0) return;
        double ga = 0.0;
        if (o.normalize_depth) {
          const double a = output.alpha(px, py);
          if (a > 0.0) {
            ga = -gd * output.depth(px, py) / a;
            gd = gd / a;
          } else {
            gd = 0.0;
          }
        }
        contribs.clear();
        owners.clear();
        offsets.clear();
        traverse_pixel(c, begin, entries, px, py,
                       [&](const Contribution& k, const ProjectedGaussian& p, double dx, double dy) {
                         contribs.push_back(k);
                         owners.push_back(&p);
                         offsets.emplace_back(dx, dy);
                       });
        double suffix = 0.0;
        for (std::size_t i = contribs.size(); i-- > 0;) {
          const Contribution& k = contribs[i];
          const ProjectedGaussian& p = *owners[i];
          const double weight = gc.dot(p.color) + gd * p.depth + ga;
          const double d_alpha = k.transmittance * (weight - suffix);
          suffix = weight * k.alpha + (1.0 - k.alpha) * suffix;

          ScreenGrad& acc = local[begin + k.entry];
          const double w = k.alpha * k.transmittance;
          acc.color += w * gc;
          acc.depth += w * gd;
          if (k.clamped) continue;
          acc.opacity += d_alpha * k.gauss;
          const double d_power = d_alpha * k.alpha;
          const Vec2& d = offsets[i];
          acc.mean += d_power * (p.conic * d);
          acc.conic += (-0.5 * d_power) * (d * d.transpose());
        }
      });
    }
  }

  std::vector<ScreenGrad> per_projected(c.projected.size());
  for (std::size_t e = 0; e < c.tile_entries.size(); ++e) per_projected[c.tile_entries[e]].add(local[e]);

  std::vector<GaussianGrad> grads(scene.gaussians.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(c.projected.size()); ++i) {
    const ProjectedGaussian& p = c.projected[i];
    grads[p.source_index] = chain_to_parameters(scene.gaussians[p.source_index], p, per_projected[i], cam);
  }
  return grads;
}

}  // namespace splatsim
