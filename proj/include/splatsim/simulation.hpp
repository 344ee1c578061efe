#pragma once

#include "splatsim/mpm.hpp"
#include "splatsim/renderer.hpp"
#include "splatsim/scene.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace splatsim {

/// Total energy split into its parts; potential is measured against gravity.
struct Energy {
  double kinetic = 0.0;
  double strain = 0.0;
  double potential = 0.0;
  double total() const { return kinetic + strain + potential; }
};

/// A scene under simulation. Each Gaussian is one particle; rendering uses the
/// deformed covariance F * cov0 * F^T.
class Simulation {
 public:
  Simulation(const Scene& scene, const SimConfig& cfg);

  /// Runs cfg.substeps substeps and advances the step counter.
  void step();
  void run_substeps(int n);

  /// Queues a push lasting `duration_substeps` starting at the next substep.
  /// Returns false (and still queues nothing) when no particle can reach the region.
  bool apply_force(const Vec3& center, double radius, const Vec3& force, std::int64_t duration_substeps);
  void set_material(const MaterialParams& m);
  /// Restores the particle state captured at construction; counters are kept.
  void reset();

  std::vector<Splat> splats() const;
  /// Current state as a Scene, with each covariance factored back into rotation and scale.
  Scene snapshot_scene() const;
  Energy energy() const;
  /// Largest distance of any particle from its rest position.
  double max_displacement() const;

  const Particles& particles() const { return particles_; }
  const Scene& rest_scene() const { return scene_; }
  const MaterialParams& material() const { return material_; }
  const GridSpec& grid() const { return solver_.grid(); }
  const SimConfig& config() const { return cfg_; }
  const SubstepReport& last_report() const { return solver_.last_report(); }
  std::int64_t substep_count() const { return substep_; }
  std::int64_t step_count() const { return steps_; }
  std::size_t pending_forces() const { return forces_.size(); }

 private:
  static GridSpec make_grid(const Scene& scene, const SimConfig& cfg);

  Scene scene_;
  SimConfig cfg_;
  MaterialParams material_;
  LameParams lame_;
  MpmSolver solver_;
  Particles particles_;
  Particles rest_;
  std::vector<ForceEvent> forces_;
  std::int64_t substep_ = 0;
  std::int64_t steps_ = 0;
  bool cfl_warned_ = false;
};

/// Particle volume rule: padded particles use the padding cell volume, originals the
/// ellipsoid volume capped by it.
double particle_volume(const Gaussian& g, double cell_volume, double dx);

/// Covariance of a Gaussian carried by deformation gradient F: F * cov0 * F^T,
/// symmetrized so round-off cannot leave it lopsided.
Mat3 deformed_covariance(const Mat3& F, const Mat3& cov0);

/// Factor a symmetric positive definite covariance into rotation and log scale.
void factor_covariance(const Mat3& cov, Vec4& rotation_wxyz, Vec3& log_scale);

}  // namespace splatsim
