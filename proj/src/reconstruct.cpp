#include "splatsim/reconstruct.hpp"
#include "splatsim/knn.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace splatsim {
namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-15;

template <typename V>
void adam_update(V& param, V& m, V& v, const V& g, double lr, double bc1, double bc2) {
  m = kBeta1 * m + (1.0 - kBeta1) * g;
  v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
  param -= lr * ((m / bc1).array() / ((v / bc2).array().sqrt() + kEps)).matrix();
}

void adam_update(double& param, double& m, double& v, double g, double lr, double bc1, double bc2) {
  m = kBeta1 * m + (1.0 - kBeta1) * g;
  v = kBeta2 * v + (1.0 - kBeta2) * g * g;
  param -= lr * (m / bc1) / (std::sqrt(v / bc2) + kEps);
}

bool all_zero(const GaussianGrad& g) {
  return g.position.isZero(0.0) && g.rotation.isZero(0.0) && g.log_scale.isZero(0.0) && g.color.isZero(0.0) &&
         g.opacity_logit == 0.0;
}

int auto_stride(std::size_t unmasked, int target) {
  if (target <= 0 || unmasked <= std::size_t(target)) return 1;
  const double s = std::sqrt(double(unmasked) / double(target));
  const int lo = std::max(1, int(std::floor(s)));
  const int hi = lo + 1;
  const double n_lo = double(unmasked) / double(lo * lo);
  const double n_hi = double(unmasked) / double(hi * hi);
  return std::abs(n_lo - target) <= std::abs(n_hi - target) ? lo : hi;
}

}  // namespace

void OptimConfig::validate() const {
  std::ostringstream err;
  if (iterations < 0) err << "iterations must be >= 0";
  else if (!(eta >= 0)) err << "eta must be >= 0";
  else if (!(gamma > 1)) err << "gamma must be > 1";
  else if (!(huber_delta > 0)) err << "huber_delta must be > 0";
  else if (densify_interval <= 0) err << "densify_interval must be > 0";
  else if (init_stride < 0) err << "init_stride must be >= 0";
  else if (!(init_coverage_gain >= 0 && init_coverage_gain <= 1)) err << "init_coverage_gain must lie in [0,1]";
  else if (init_neighbors < 1) err << "init_neighbors must be >= 1";
  if (!err.str().empty()) throw ValidationError("optim: " + err.str());
}

bool is_anisotropic(const Gaussian& g, double gamma) {
  // max/min of exp(log_scale) compared as a log-space spread, which is exact for
  // scales stored in log form.
  return g.log_scale.maxCoeff() - g.log_scale.minCoeff() > std::log(gamma);
}

Scene prune_anisotropic(const Scene& scene, double gamma) {
  if (!(gamma > 1)) throw ValidationError("prune_anisotropic: gamma must be > 1");
  Scene out = scene;
  std::erase_if(out.gaussians, [gamma](const Gaussian& g) { return is_anisotropic(g, gamma); });
  return out;
}

Scene initialize_from_depth(const std::vector<Frame>& frames, const OptimConfig& cfg) {
  if (frames.empty()) throw ValidationError("initialize_from_depth: no frames");
  const int w = frames[0].camera.width;
  const int h = frames[0].camera.height;

  std::size_t first_unmasked = 0;
  for (auto v : frames[0].mask.data) first_unmasked += v == 0;
  // The point target is quoted for a 640x512 image and scales with pixel count,
  // so small frames get a comparable sampling density. Tiny frames are never thinned
  // below a thousand points.
  const int scaled = int(std::lround(double(cfg.init_target_points) * w * h / (640.0 * 512.0)));
  const int target = std::max(scaled, std::min(cfg.init_target_points, 1024));
  const int stride = cfg.init_stride > 0 ? cfg.init_stride : auto_stride(first_unmasked, target);

  std::vector<std::uint8_t> covered(std::size_t(w) * h, 0);
  std::vector<Vec3> points;
  std::vector<Vec3> colors;
  std::vector<double> pixel_sizes;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const Frame& fr = frames[k];
    if (!fr.mask.same_shape(w, h)) continue;
    std::size_t hole = 0, revealed = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = std::size_t(y) * w + x;
        if (!covered[i]) {
          ++hole;
          if (!fr.masked(x, y)) ++revealed;
        }
      }
    if (revealed == 0) continue;
    if (k > 0 && double(revealed) < cfg.init_coverage_gain * double(hole)) continue;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = std::size_t(y) * w + x;
        if (covered[i] || fr.masked(x, y)) continue;
        covered[i] = 1;
        if (x % stride != 0 || y % stride != 0) continue;
        const double d = fr.depth(x, y);
        points.push_back(fr.camera.to_world(fr.camera.backproject(x, y, d)));
        colors.push_back(fr.image(x, y).cwiseMax(0.0).cwiseMin(1.0));
        pixel_sizes.push_back(stride * d / std::sqrt(fr.camera.fx * fr.camera.fy));
      }
  }
  if (points.empty()) throw ValidationError("initialize_from_depth: no visible tissue (every pixel is masked)");

  const auto spacing = mean_neighbor_distance(points, cfg.init_neighbors);
  Scene scene;
  scene.gaussians.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double s = std::max(points.size() > 1 ? spacing[i] : pixel_sizes[i], 1e-7);
    scene.gaussians.push_back(Gaussian::make(points[i], Vec4(1, 0, 0, 0), Vec3::Constant(s), colors[i], 0.5));
  }
  scene.bounds = Scene::fit_bounds(scene.gaussians, 0.1);
  spdlog::debug("initialized {} Gaussians (stride {})", scene.size(), stride);
  return scene;
}

GaussianAdam::GaussianAdam(const LearningRates& lr, double position_scale) : lr_(lr), position_scale_(position_scale) {}

void GaussianAdam::resize(std::size_t n) { moments_.resize(n); }

double GaussianAdam::position_lr(int iteration, int total_iterations) const {
  const double t = total_iterations > 0 ? std::clamp(double(iteration) / double(total_iterations), 0.0, 1.0) : 0.0;
  const double log_lr = (1.0 - t) * std::log(lr_.position_init) + t * std::log(lr_.position_final);
  return std::exp(log_lr) * position_scale_;
}

void GaussianAdam::step(std::vector<Gaussian>& gaussians, const std::vector<GaussianGrad>& grads, int iteration,
                        int total_iterations) {
  if (moments_.size() != gaussians.size()) moments_.resize(gaussians.size());
  ++steps_;
  const double bc1 = 1.0 - std::pow(kBeta1, steps_);
  const double bc2 = 1.0 - std::pow(kBeta2, steps_);
  const double pos_lr = position_lr(iteration, total_iterations);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(gaussians.size()); ++i) {
    const GaussianGrad& g = grads[i];
    if (all_zero(g)) continue;
    Gaussian& p = gaussians[i];
    Moments& m = moments_[i];
    adam_update(p.position, m.m_pos, m.v_pos, g.position, pos_lr, bc1, bc2);
    adam_update(p.rotation, m.m_rot, m.v_rot, g.rotation, lr_.rotation, bc1, bc2);
    adam_update(p.log_scale, m.m_scale, m.v_scale, g.log_scale, lr_.log_scale, bc1, bc2);
    adam_update(p.color, m.m_color, m.v_color, g.color, lr_.color, bc1, bc2);
    adam_update(p.opacity_logit, m.m_op, m.v_op, g.opacity_logit, lr_.opacity, bc1, bc2);
    const double n = p.rotation.norm();
    p.rotation = n > 0 ? Vec4(p.rotation / n) : Vec4(1, 0, 0, 0);
    p.color = p.color.cwiseMax(0.0).cwiseMin(1.0);
  }
}

void GaussianAdam::compact(const std::vector<bool>& keep, std::size_t added) {
  std::vector<Moments> next;
  next.reserve(moments_.size() + added);
  for (std::size_t i = 0; i < moments_.size(); ++i)
    if (keep[i]) next.push_back(moments_[i]);
  next.resize(next.size() + added);
  moments_ = std::move(next);
}

double training_psnr(const Scene& scene, const std::vector<Frame>& frames, const RenderOptions& opts) {
  double sum = 0.0;
  for (const auto& fr : frames) sum += masked_psnr(rasterize(scene, fr.camera, opts).color, fr);
  return frames.empty() ? 0.0 : sum / double(frames.size());
}

double mean_depth_error(const Scene& scene, const std::vector<Frame>& frames, const RenderOptions& opts) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& fr : frames) {
    const RenderOutput r = rasterize(scene, fr.camera, opts);
    for (int y = 0; y < fr.camera.height; ++y)
      for (int x = 0; x < fr.camera.width; ++x) {
        if (fr.masked(x, y)) continue;
        sum += std::abs(fr.depth(x, y) - r.depth(x, y));
        ++n;
      }
  }
  return n ? sum / double(n) : 0.0;
}

namespace {

class Trainer {
 public:
  Trainer(const std::vector<Frame>& frames, const OptimConfig& cfg)
      : frames_(frames), cfg_(cfg), rng_(cfg.seed), adam_(cfg.lr, 1.0) {}

  FitResult run(const ProgressFn& progress) {
    FitResult result;
    scene_ = initialize_from_depth(frames_, cfg_);
    extent_ = 0.5 * scene_.bounds.extent().norm();
    adam_ = GaussianAdam(cfg_.lr, extent_);
    adam_.resize(scene_.size());
    reset_stats();

    const LossOptions loss_opts{cfg_.eta, cfg_.huber_delta, cfg_.mask_depth};
    std::uniform_int_distribution<std::size_t> pick(0, frames_.size() - 1);
    const auto t0 = std::chrono::steady_clock::now();

    for (int it = 0; it < cfg_.iterations; ++it) {
      const Frame& frame = frames_[pick(rng_)];
      const RenderOutput render = rasterize(scene_, frame.camera, cfg_.render);
      const LossResult loss = compute_loss(render, frame, loss_opts);
      if (!std::isfinite(loss.total)) {
        throw RuntimeFailure("reconstruction diverged at iteration " + std::to_string(it) + " (loss is not finite)");
      }
      const auto grads =
          rasterize_backward(scene_, frame.camera, render, loss.grad_color, loss.grad_depth, cfg_.render);
      accumulate_stats(grads, frame.camera);
      adam_.step(scene_.gaussians, grads, it, cfg_.iterations);

      const int done = it + 1;
      if (done >= cfg_.densify_from && done <= cfg_.densify_until && done % cfg_.densify_interval == 0 &&
          done < cfg_.iterations) {
        maintain();
      }

      MetricsRow row;
      row.iteration = it;
      row.loss = loss.total;
      row.color_loss = loss.color;
      row.depth_loss = loss.depth;
      row.psnr = std::numeric_limits<double>::quiet_NaN();
      if ((cfg_.psnr_interval > 0 && done % cfg_.psnr_interval == 0) || done == cfg_.iterations) {
        row.psnr = training_psnr(scene_, frames_, cfg_.render);
      }
      row.gaussian_count = scene_.size();
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      result.trace.push_back(row);
      if (progress) progress(row);
    }

    if (cfg_.iterations > 0) scene_ = prune_anisotropic(scene_, cfg_.gamma);
    scene_.bounds = Scene::fit_bounds(scene_.gaussians, 0.1);
    result.scene = std::move(scene_);
    return result;
  }

 private:
  void reset_stats() {
    grad_accum_.assign(scene_.size(), 0.0);
    grad_count_.assign(scene_.size(), 0);
  }

  void accumulate_stats(const std::vector<GaussianGrad>& grads, const Camera& cam) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!grads[i].visible) continue;
      // Normalized-device-coordinate gradient magnitude.
      const Vec2 ndc(grads[i].pixel_center.x() * 0.5 * cam.width, grads[i].pixel_center.y() * 0.5 * cam.height);
      grad_accum_[i] += ndc.norm();
      grad_count_[i] += 1;
    }
  }

  void maintain() {
    std::vector<Gaussian> added;
    std::vector<bool> keep(scene_.size(), true);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double big = cfg_.percent_dense * extent_;
    const std::size_t n = scene_.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (grad_count_[i] == 0) continue;
      if (cfg_.max_gaussians > 0 && n + added.size() >= cfg_.max_gaussians) break;
      if (grad_accum_[i] / grad_count_[i] < cfg_.densify_grad_threshold) continue;
      const Gaussian& g = scene_.gaussians[i];
      const Vec3 s = g.scale();
      if (s.maxCoeff() <= big) {
        added.push_back(g);
      } else {
        const Mat3 r = g.rotation_matrix();
        for (int k = 0; k < 2; ++k) {
          Gaussian child = g;
          const Vec3 offset(normal(rng_) * s.x(), normal(rng_) * s.y(), normal(rng_) * s.z());
          child.position = g.position + r * offset;
          child.log_scale = (s / 1.6).array().log();
          added.push_back(child);
        }
        keep[i] = false;
      }
    }
    auto prunable = [&](const Gaussian& g) {
      return g.opacity() < cfg_.min_opacity || is_anisotropic(g, cfg_.gamma);
    };
    std::erase_if(added, prunable);
    const std::size_t added_count = added.size();
    for (std::size_t i = 0; i < n; ++i)
      if (prunable(scene_.gaussians[i])) keep[i] = false;
    std::vector<Gaussian> next;
    next.reserve(n + added_count);
    for (std::size_t i = 0; i < n; ++i)
      if (keep[i]) next.push_back(scene_.gaussians[i]);
    for (auto& g : added) next.push_back(g);
    scene_.gaussians = std::move(next);
    adam_.compact(keep, added_count);
    reset_stats();
  }

  const std::vector<Frame>& frames_;
  OptimConfig cfg_;
  std::mt19937_64 rng_;
  GaussianAdam adam_;
  Scene scene_;
  double extent_ = 1.0;
  std::vector<double> grad_accum_;
  std::vector<int> grad_count_;
};

}  // namespace

FitResult fit(const std::vector<Frame>& frames, const OptimConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (frames.empty()) throw ValidationError("fit: no frames");
  for (const auto& f : frames) f.validate();
  Trainer trainer(frames, cfg);
  return trainer.run(progress);
}

}  // namespace splatsim
