#pragma once

#include "splatsim/frame.hpp"
#include "splatsim/renderer.hpp"

namespace splatsim {

struct LossOptions {
  double eta = 0.3;           // depth term weight
  double huber_delta = 0.2;
  bool mask_depth = true;     // false applies the depth term on tool pixels too
};

struct LossResult {
  double total = 0.0;
  double color = 0.0;   // mean masked L1, summed over channels
  double depth = 0.0;   // mean masked Huber, before eta
  ImageRGB grad_color;  // dL/dC
  ImageF grad_depth;    // dL/dD_rendered
};

double huber(double r, double delta);
double huber_derivative(double r, double delta);

/// Per pixel: (1-M) |C - I|_1 + eta (1-M) Huber(D_k - D_rendered), averaged over
/// unmasked pixels. With mask_depth off, the depth term covers every pixel with a
/// positive depth reading and is averaged over those instead.
LossResult compute_loss(const RenderOutput& render, const Frame& frame, const LossOptions& opts);

/// PSNR in dB over unmasked pixels (peak 1.0); +inf for an exact match.
double masked_psnr(const ImageRGB& rendered, const Frame& frame);

}  // namespace splatsim
