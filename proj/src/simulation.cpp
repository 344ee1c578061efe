#include "splatsim/simulation.hpp"

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace splatsim {

double particle_volume(const Gaussian& g, double cell_volume, double dx) {
  const Vec3 s = g.scale();
  if (g.padded) return cell_volume > 0 ? cell_volume : 8.0 * s.prod();
  const double cap = cell_volume > 0 ? cell_volume : dx * dx * dx / 8.0;
  return std::min(4.0 / 3.0 * std::numbers::pi * s.prod(), cap);
}

Mat3 deformed_covariance(const Mat3& F, const Mat3& cov0) {
  const Mat3 cov = F * cov0 * F.transpose();
  return 0.5 * (cov + cov.transpose());
}

void factor_covariance(const Mat3& cov, Vec4& rotation_wxyz, Vec3& log_scale) {
  Eigen::SelfAdjointEigenSolver<Mat3> eig(0.5 * (cov + cov.transpose()));
  Mat3 r = eig.eigenvectors();
  if (r.determinant() < 0) r.col(0) = -r.col(0);
  const Vec3 ev = eig.eigenvalues().cwiseMax(1e-300);
  rotation_wxyz = matrix_to_quaternion(r);
  log_scale = 0.5 * ev.array().log();
}

GridSpec Simulation::make_grid(const Scene& scene, const SimConfig& cfg) {
  Aabb box = cfg.domain ? *cfg.domain : scene.bounds;
  if (box.empty()) box = Scene::fit_bounds(scene.gaussians, 0.1);
  if (box.empty()) throw ValidationError("simulation needs a non-empty scene or domain");
  return GridSpec::around(box, cfg.grid_resolution, cfg.boundary_cells);
}

Simulation::Simulation(const Scene& scene, const SimConfig& cfg)
    : scene_(scene), cfg_(cfg), material_(scene.material), solver_(make_grid(scene, cfg), cfg) {
  validate(material_);
  lame_ = lame(material_);
  const GridSpec& g = solver_.grid();
  Aabb reach;
  reach.min = g.origin + Vec3::Constant(0.5 * g.dx);
  for (int a = 0; a < 3; ++a) reach.max[a] = g.origin[a] + (g.nodes[a] - 2.5) * g.dx;
  std::size_t outside = 0;
  for (const Gaussian& gs : scene_.gaussians) {
    if (!reach.contains(gs.position)) ++outside;
    const double vol = particle_volume(gs, scene_.cell_volume, g.dx);
    particles_.push_back(gs.position, material_.density * vol, vol, gs.covariance());
  }
  if (outside > 0) spdlog::warn("{} particles lie outside the simulation domain and will be clamped", outside);
  rest_ = particles_;
}

void Simulation::run_substeps(int n) {
  const double dt = cfg_.dt;
  for (int s = 0; s < n; ++s) {
    solver_.substep(particles_, lame_, forces_, dt, substep_);
    if (solver_.last_report().empty_force_regions > 0) {
      spdlog::warn("force region empty at substep {}", substep_);
    }
    ++substep_;
    std::erase_if(forces_, [&](const ForceEvent& e) { return e.end_substep <= substep_; });
  }
  if (!cfl_warned_) {
    double vmax = 0;
    for (const Vec3& v : particles_.velocity) vmax = std::max(vmax, v.norm());
    if (vmax * dt >= solver_.grid().dx) {
      spdlog::warn("CFL violated: max speed {} * dt {} >= dx {}", vmax, dt, solver_.grid().dx);
      cfl_warned_ = true;
    }
  }
}

void Simulation::step() {
  run_substeps(cfg_.substeps);
  ++steps_;
}

bool Simulation::apply_force(const Vec3& center, double radius, const Vec3& force, std::int64_t duration_substeps) {
  ForceEvent ev{center, radius, force, substep_, substep_ + std::max<std::int64_t>(duration_substeps, 0)};
  ev.validate();
  // A node within radius gathers mass only from particles within 1.5 cells per axis.
  const double reach = radius + 1.5 * std::sqrt(3.0) * solver_.grid().dx;
  const bool any = std::any_of(particles_.position.begin(), particles_.position.end(),
                               [&](const Vec3& p) { return (p - center).norm() <= reach; });
  if (!any) return false;
  if (duration_substeps > 0) forces_.push_back(ev);
  return true;
}

void Simulation::set_material(const MaterialParams& m) {
  validate(m);
  if (m.density != material_.density) {
    for (std::size_t p = 0; p < particles_.size(); ++p) particles_.mass[p] = m.density * particles_.volume0[p];
    for (std::size_t p = 0; p < rest_.size(); ++p) rest_.mass[p] = m.density * rest_.volume0[p];
  }
  material_ = m;
  lame_ = lame(m);
}

void Simulation::reset() {
  particles_ = rest_;
  forces_.clear();
  cfl_warned_ = false;
}

std::vector<Splat> Simulation::splats() const {
  std::vector<Splat> out(particles_.size());
  for (std::size_t p = 0; p < particles_.size(); ++p) {
    const Gaussian& g = scene_.gaussians[p];
    out[p] = {particles_.position[p], deformed_covariance(particles_.F[p], particles_.cov0[p]), g.color, g.opacity()};
  }
  return out;
}

Scene Simulation::snapshot_scene() const {
  Scene out = scene_;
  for (std::size_t p = 0; p < particles_.size(); ++p) {
    Gaussian& g = out.gaussians[p];
    g.position = particles_.position[p];
    if (particles_.F[p] != Mat3::Identity()) {
      factor_covariance(deformed_covariance(particles_.F[p], particles_.cov0[p]), g.rotation, g.log_scale);
    }
  }
  out.material = material_;
  return out;
}

Energy Simulation::energy() const {
  Energy e;
  for (std::size_t p = 0; p < particles_.size(); ++p) {
    e.kinetic += 0.5 * particles_.mass[p] * particles_.velocity[p].squaredNorm();
    e.strain += particles_.volume0[p] * strain_energy_density(particles_.F[p], lame_.mu, lame_.lambda);
    e.potential -= particles_.mass[p] * cfg_.gravity.dot(particles_.position[p]);
  }
  return e;
}

double Simulation::max_displacement() const {
  double m = 0;
  for (std::size_t p = 0; p < particles_.size(); ++p)
    m = std::max(m, (particles_.position[p] - rest_.position[p]).norm());
  return m;
}

}  // namespace splatsim
