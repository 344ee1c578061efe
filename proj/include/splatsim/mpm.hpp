#pragma once

#include "splatsim/material.hpp"
#include "splatsim/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace splatsim {

enum class Boundary { sticky, free };

/// Faces in order -x, +x, -y, +y, -z, +z.
enum Face : int { kNegX = 0, kPosX, kNegY, kPosY, kNegZ, kPosZ };

struct SimConfig {
  int grid_resolution = 64;
  int substeps = 80;
  double dt = 5e-4;
  Vec3 gravity = Vec3::Zero();
  double damping = 0.0;  // velocity damping rate, 1/s
  std::array<Boundary, 6> faces{Boundary::sticky, Boundary::sticky, Boundary::sticky,
                                Boundary::sticky, Boundary::sticky, Boundary::sticky};
  int base_face = kPosZ;  // forced sticky; +z points away from a camera looking down +z
  int boundary_cells = 2;
  double mass_epsilon = 1e-12;
  std::optional<Aabb> domain;  // defaults to the scene bounds
  double inversion_det = 1e-4;
  double singular_min = 0.05;
  double singular_max = 4.0;
  bool track_conservation = false;

  void validate() const;
};

/// A user push: `force` spread over grid mass within `radius` of `center` for
/// substeps in [start_substep, end_substep).
struct ForceEvent {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  Vec3 force = Vec3::Zero();
  std::int64_t start_substep = 0;
  std::int64_t end_substep = 0;

  bool active(std::int64_t substep) const { return substep >= start_substep && substep < end_substep; }
  void validate() const;
};

/// Struct-of-arrays particle state.
struct Particles {
  std::vector<Vec3> position;
  std::vector<Vec3> velocity;
  std::vector<double> mass;
  std::vector<double> volume0;
  std::vector<Mat3> F;
  std::vector<Mat3> C;     // APIC affine velocity
  std::vector<Mat3> cov0;  // covariance at rest

  std::size_t size() const { return position.size(); }
  void push_back(const Vec3& x, double m, double vol, const Mat3& cov);
};

struct GridSpec {
  Vec3 origin = Vec3::Zero();
  double dx = 1.0;
  std::array<int, 3> nodes{0, 0, 0};

  /// Cubic cells with `resolution` nodes along the longest axis of `box`, plus
  /// `boundary_cells` layers on each side.
  static GridSpec around(const Aabb& box, int resolution, int boundary_cells);
  std::size_t node_count() const { return std::size_t(nodes[0]) * nodes[1] * nodes[2]; }
  std::size_t index(int i, int j, int k) const {
    return (std::size_t(i) * nodes[1] + std::size_t(j)) * nodes[2] + std::size_t(k);
  }
  Vec3 node_position(int i, int j, int k) const { return origin + dx * Vec3(i, j, k); }
};

struct SubstepReport {
  double particle_mass = 0.0;
  Vec3 particle_momentum = Vec3::Zero();
  double grid_mass = 0.0;       // after particle-to-grid
  Vec3 grid_momentum = Vec3::Zero();
  int empty_force_regions = 0;
};

/// MLS-MPM with APIC transfers and quadratic B-spline weights.
class MpmSolver {
 public:
  MpmSolver(const GridSpec& grid, const SimConfig& cfg);

  /// One particle-to-grid / grid update / grid-to-particle cycle. Throws
  /// RuntimeFailure naming `substep_index` when a node velocity turns non-finite.
  void substep(Particles& particles, const LameParams& lame, std::span<const ForceEvent> forces, double dt,
               std::int64_t substep_index);

  const GridSpec& grid() const { return grid_; }
  const SimConfig& config() const { return cfg_; }
  const SubstepReport& last_report() const { return report_; }

 private:
  static constexpr int kBlock = 4;

  // (momentum x, y, z, mass); momentum holds velocity after update_grid.
  using Node = Eigen::Vector4d;
  struct Stencil {
    std::size_t base = 0;  // node index of the lowest corner
    Vec3 frac = Vec3::Zero();
    std::array<Vec3, 3> w;  // w[offset][axis]
  };

  void bucket(const Particles& particles);
  void particle_to_grid(Particles& particles, const LameParams& lame, double dt);
  void update_grid(std::span<const ForceEvent> forces, double dt, std::int64_t substep_index);
  void grid_to_particle(Particles& particles, double dt);
  void clear_touched();
  template <typename Fn>
  void for_touched_nodes(Fn&& fn);

  GridSpec grid_;
  SimConfig cfg_;
  std::vector<Node> nodes_;
  std::array<int, 3> particle_blocks_{};
  std::array<int, 3> owner_blocks_{};
  std::vector<std::uint32_t> block_start_;
  std::vector<std::uint32_t> order_;
  std::vector<std::uint32_t> particle_block_;
  std::vector<Stencil> stencils_;
  std::vector<std::uint8_t> touched_;
  std::vector<std::uint32_t> touched_list_;
  std::array<std::vector<std::uint8_t>, 3> sticky_band_;  // per axis: node index lies in a sticky band
  SubstepReport report_;
};

}  // namespace splatsim
