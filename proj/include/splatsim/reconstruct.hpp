#pragma once

#include "splatsim/frame.hpp"
#include "splatsim/loss.hpp"
#include "splatsim/renderer.hpp"
#include "splatsim/scene.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace splatsim {

struct LearningRates {
  double position_init = 1.6e-4;   // multiplied by the scene extent
  double position_final = 1.6e-6;
  double rotation = 1e-3;
  double log_scale = 5e-3;
  double color = 2.5e-3;
  double opacity = 5e-2;
};

struct OptimConfig {
  int iterations = 7000;
  double eta = 0.3;
  double huber_delta = 0.2;
  double gamma = 10.0;
  bool mask_depth = true;
  LearningRates lr;

  int densify_from = 500;
  int densify_until = 5000;
  int densify_interval = 100;
  double densify_grad_threshold = 2e-4;
  double percent_dense = 0.01;
  double min_opacity = 0.005;
  std::size_t max_gaussians = 0;  // 0: unbounded

  int init_stride = 0;            // 0: pick the stride closest to init_target_points
  int init_target_points = 50000;  // per 640x512 pixels
  double init_coverage_gain = 0.2;
  int init_neighbors = 3;

  int psnr_interval = 100;
  std::uint64_t seed = 0;
  RenderOptions render;

  /// Throws ValidationError on out-of-range values.
  void validate() const;
};

struct MetricsRow {
  int iteration = 0;
  double loss = 0.0;
  double color_loss = 0.0;
  double depth_loss = 0.0;
  double psnr = 0.0;  // NaN on iterations without evaluation
  std::size_t gaussian_count = 0;
  double wall_ms = 0.0;
};

struct FitResult {
  Scene scene;
  std::vector<MetricsRow> trace;
};

/// Back-projects unmasked pixels of the first frame, plus pixels newly revealed by
/// later frames that uncover at least `init_coverage_gain` of the remaining hole.
Scene initialize_from_depth(const std::vector<Frame>& frames, const OptimConfig& cfg);

/// Removes every Gaussian whose max/min linear scale exceeds gamma.
Scene prune_anisotropic(const Scene& scene, double gamma);
bool is_anisotropic(const Gaussian& g, double gamma);

/// Adam with per-group learning rates over the stored Gaussian parameters. Only
/// Gaussians with a non-zero gradient are touched, so a zero gradient is a no-op.
class GaussianAdam {
 public:
  explicit GaussianAdam(const LearningRates& lr, double position_scale);

  void resize(std::size_t n);
  void step(std::vector<Gaussian>& gaussians, const std::vector<GaussianGrad>& grads, int iteration,
            int total_iterations);
  /// Keep moments for kept[i] == true, then append `added` fresh entries.
  void compact(const std::vector<bool>& keep, std::size_t added);
  double position_lr(int iteration, int total_iterations) const;

 private:
  struct Moments {
    Vec3 m_pos = Vec3::Zero(), v_pos = Vec3::Zero();
    Vec4 m_rot = Vec4::Zero(), v_rot = Vec4::Zero();
    Vec3 m_scale = Vec3::Zero(), v_scale = Vec3::Zero();
    Vec3 m_color = Vec3::Zero(), v_color = Vec3::Zero();
    double m_op = 0.0, v_op = 0.0;
  };
  LearningRates lr_;
  double position_scale_;
  std::vector<Moments> moments_;
  int steps_ = 0;
};

using ProgressFn = std::function<void(const MetricsRow&)>;

/// Full reconstruction: initialization, masked color + depth optimization,
/// densification and anisotropy pruning. The result never contains a Gaussian with
/// scale ratio above gamma.
FitResult fit(const std::vector<Frame>& frames, const OptimConfig& cfg, const ProgressFn& progress = {});

/// Mean masked PSNR of `scene` over `frames`.
double training_psnr(const Scene& scene, const std::vector<Frame>& frames, const RenderOptions& opts);
/// Mean |D_k - D_rendered| over unmasked pixels of all frames.
double mean_depth_error(const Scene& scene, const std::vector<Frame>& frames, const RenderOptions& opts);

}  // namespace splatsim
