#pragma once

#include "splatsim/gaussian.hpp"
#include "splatsim/material.hpp"

#include <vector>

namespace splatsim {

struct Scene {
  std::vector<Gaussian> gaussians;
  MaterialParams material;
  Aabb bounds;
  /// Volume represented by one padded particle; 0 when the scene was never padded.
  double cell_volume = 0.0;

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }
  std::size_t padded_count() const;

  /// Box around all centers, widened by `relative_margin` of the extent on every side.
  static Aabb fit_bounds(const std::vector<Gaussian>& gaussians, double relative_margin);
};

}  // namespace splatsim
