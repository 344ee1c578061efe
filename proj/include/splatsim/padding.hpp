#pragma once

#include "splatsim/camera.hpp"
#include "splatsim/scene.hpp"

#include <array>
#include <vector>

namespace splatsim {

/// Sampled opacity density on a node lattice spanning Scene::bounds (nodes sit on
/// both faces of the box).
struct OpacityField {
  std::array<int, 3> resolution{0, 0, 0};
  Vec3 origin = Vec3::Zero();
  Vec3 cell_size = Vec3::Ones();
  std::vector<double> values;

  std::size_t index(int i, int j, int k) const {
    return (std::size_t(i) * resolution[1] + std::size_t(j)) * resolution[2] + std::size_t(k);
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 node_position(int i, int j, int k) const {
    return origin + cell_size.cwiseProduct(Vec3(i, j, k));
  }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < resolution[0] && j < resolution[1] && k < resolution[2];
  }
};

struct PaddingOptions {
  int grid = 100;
  double tau = 0.1;             // minimum occluder value on the view ray
  double footprint_sigmas = 3.0;
};

/// O(x) = sum_i opacity_i exp(-1/2 (x - x_i)^T Sigma_i^-1 (x - x_i)) over Gaussians
/// whose 3-sigma ellipsoid contains the node.
OpacityField compute_opacity_field(const Scene& scene, int resolution, double footprint_sigmas = 3.0);

/// Adds an invisible (opacity 0) isotropic Gaussian at every node that lies behind a
/// denser node on its camera ray. Existing Gaussians are untouched and nodes that
/// already carry a padded Gaussian are skipped.
Scene pad_interior(const Scene& scene, const OpacityField& field, const Camera& cam, double tau);

/// compute_opacity_field followed by pad_interior.
Scene pad_scene(const Scene& scene, const Camera& cam, const PaddingOptions& opts = {});

}  // namespace splatsim
