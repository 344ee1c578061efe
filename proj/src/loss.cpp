#include "splatsim/loss.hpp"

#include <cmath>
#include <limits>

namespace splatsim {

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_derivative(double r, double delta) {
  if (std::abs(r) <= delta) return r;
  return r > 0 ? delta : -delta;
}

LossResult compute_loss(const RenderOutput& render, const Frame& frame, const LossOptions& opts) {
  const int w = frame.camera.width;
  const int h = frame.camera.height;
  if (!render.color.same_shape(w, h)) throw ValidationError("loss: render resolution differs from frame");

  LossResult out;
  out.grad_color = ImageRGB(w, h, Vec3::Zero());
  out.grad_depth = ImageF(w, h, 0.0);

  std::size_t color_count = 0;
  std::size_t depth_count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool tool = frame.masked(x, y);
      if (!tool) ++color_count;
      if (!tool || (!opts.mask_depth && frame.depth(x, y) > 0.0)) ++depth_count;
    }
  }

  double color_sum = 0.0;
  double depth_sum = 0.0;
  const double inv_color = color_count ? 1.0 / double(color_count) : 0.0;
  const double inv_depth = depth_count ? 1.0 / double(depth_count) : 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool tool = frame.masked(x, y);
      if (!tool) {
        const Vec3 diff = render.color(x, y) - frame.image(x, y);
        color_sum += diff.cwiseAbs().sum();
        for (int c = 0; c < 3; ++c) {
          out.grad_color(x, y)[c] = (diff[c] > 0 ? 1.0 : diff[c] < 0 ? -1.0 : 0.0) * inv_color;
        }
      }
      const bool supervise_depth = !tool || (!opts.mask_depth && frame.depth(x, y) > 0.0);
      if (supervise_depth && opts.eta != 0.0) {
        const double r = frame.depth(x, y) - render.depth(x, y);
        depth_sum += huber(r, opts.huber_delta);
        out.grad_depth(x, y) = -opts.eta * huber_derivative(r, opts.huber_delta) * inv_depth;
      } else if (supervise_depth) {
        depth_sum += huber(frame.depth(x, y) - render.depth(x, y), opts.huber_delta);
      }
    }
  }
  out.color = color_sum * inv_color;
  out.depth = depth_sum * inv_depth;
  out.total = out.color + opts.eta * out.depth;
  return out;
}

double masked_psnr(const ImageRGB& rendered, const Frame& frame) {
  double se = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < frame.camera.height; ++y) {
    for (int x = 0; x < frame.camera.width; ++x) {
      if (frame.masked(x, y)) continue;
      se += (rendered(x, y) - frame.image(x, y)).squaredNorm();
      n += 3;
    }
  }
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  const double mse = se / double(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

}  // namespace splatsim
