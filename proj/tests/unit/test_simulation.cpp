#include "splatsim/fixtures.hpp"
#include "splatsim/simulation.hpp"

#include <doctest.h>
#include <Eigen/Dense>

#include <random>

using namespace splatsim;

namespace {

Scene block() { return fixtures::solid_block(Vec3(-0.2, -0.2, 2.8), {5, 5, 5}, 0.1); }

SimConfig config() {
  SimConfig c;
  c.grid_resolution = 16;
  c.substeps = 10;
  return c;
}

Mat3 spd(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat3 a;
  for (int i = 0; i < 9; ++i) a.data()[i] = n(rng);
  return a * a.transpose() + 0.1 * Mat3::Identity();
}

}  // namespace

TEST_SUITE("simulation") {

TEST_CASE("deformed covariance follows F Sigma F^T") {
  std::mt19937_64 rng(9);
  const Mat3 cov = spd(rng);
  CHECK(deformed_covariance(Mat3::Identity(), cov) == 0.5 * (cov + cov.transpose()));
  CHECK((deformed_covariance(2.0 * Mat3::Identity(), cov) - 4.0 * cov).norm() < 1e-12);
  const Mat3 r = Eigen::Quaterniond(0.3, -0.2, 0.9, 0.1).normalized().toRotationMatrix();
  const Mat3 rotated = deformed_covariance(r, cov);
  CHECK(rotated == rotated.transpose());
  Eigen::SelfAdjointEigenSolver<Mat3> a(cov), b(rotated);
  CHECK((a.eigenvalues() - b.eigenvalues()).norm() < 1e-9);
}

TEST_CASE("covariance factoring round-trips") {
  const Gaussian g = Gaussian::make(Vec3::Zero(), Vec4(0.8, 0.2, -0.4, 0.4).normalized(), Vec3(0.1, 0.3, 0.2),
                                    Vec3::Zero(), 0.5);
  Vec4 q;
  Vec3 ls;
  factor_covariance(g.covariance(), q, ls);
  Gaussian h = g;
  h.rotation = q;
  h.log_scale = ls;
  CHECK((h.covariance() - g.covariance()).norm() < 1e-12);
}

TEST_CASE("before any substep splats reproduce the rest scene") {
  const Scene s = block();
  const Simulation sim(s, config());
  const auto sp = sim.splats();
  REQUIRE(sp.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(sp[i].position == s.gaussians[i].position);
    CHECK(sp[i].covariance == s.gaussians[i].covariance());
    CHECK(sp[i].opacity == doctest::Approx(s.gaussians[i].opacity()));
  }
  CHECK(sim.snapshot_scene().gaussians == s.gaussians);
  CHECK(sim.max_displacement() == 0.0);
}

TEST_CASE("energy at rest is only gravitational") {
  SimConfig c = config();
  c.gravity = Vec3(0, 0, -2.0);
  const Scene s = block();
  const Simulation sim(s, c);
  const Energy e = sim.energy();
  CHECK(e.kinetic == 0.0);
  CHECK(e.strain == 0.0);
  double expected = 0;
  for (std::size_t p = 0; p < s.size(); ++p) expected += sim.particles().mass[p] * 2.0 * sim.particles().position[p].z();
  CHECK(e.potential == doctest::Approx(expected));
}

TEST_CASE("forces are queued only where particles are") {
  Simulation sim(block(), config());
  CHECK_FALSE(sim.apply_force(Vec3(0, 0, 50), 0.1, Vec3(1, 0, 0), 10));
  CHECK(sim.pending_forces() == 0);
  CHECK(sim.apply_force(Vec3(0, 0, 3.0), 0.15, Vec3(0, 0, 20), 15));
  CHECK(sim.pending_forces() == 1);
  CHECK_THROWS_AS(sim.apply_force(Vec3(0, 0, 3.0), 0.0, Vec3(0, 0, 1), 5), ValidationError);
  sim.step();
  CHECK(sim.pending_forces() == 1);
  sim.step();
  CHECK(sim.pending_forces() == 0);
  CHECK(sim.max_displacement() > 0.0);
}

TEST_CASE("reset restores the rest state but keeps the counters") {
  Simulation sim(block(), config());
  sim.apply_force(Vec3(0, 0, 3.0), 0.15, Vec3(0, 0, 20), 10);
  sim.step();
  REQUIRE(sim.max_displacement() > 0.0);
  sim.reset();
  CHECK(sim.max_displacement() == 0.0);
  CHECK(sim.pending_forces() == 0);
  CHECK(sim.step_count() == 1);
  CHECK(sim.substep_count() == 10);
  for (const Vec3& v : sim.particles().velocity) CHECK(v.isZero(0.0));
}

TEST_CASE("material updates rescale masses and reject bad values") {
  Simulation sim(block(), config());
  const double m0 = sim.particles().mass[0];
  sim.set_material({5000.0, 0.3, 2000.0});
  CHECK(sim.particles().mass[0] == doctest::Approx(2.0 * m0));
  CHECK(sim.material().youngs_modulus == 5000.0);
  CHECK_THROWS_AS(sim.set_material({5000.0, 0.5, 1000.0}), ValidationError);
  CHECK(sim.material().poisson_ratio == 0.3);
}

TEST_CASE("particle volume is capped by the padding cell") {
  const Gaussian big = Gaussian::make(Vec3::Zero(), Vec4(1, 0, 0, 0), Vec3::Constant(1.0), Vec3::Zero(), 0.5);
  CHECK(particle_volume(big, 0.001, 0.1) == 0.001);
  Gaussian pad = big;
  pad.padded = true;
  CHECK(particle_volume(pad, 0.002, 0.1) == 0.002);
  const Gaussian tiny = Gaussian::make(Vec3::Zero(), Vec4(1, 0, 0, 0), Vec3::Constant(0.01), Vec3::Zero(), 0.5);
  CHECK(particle_volume(tiny, 1.0, 0.1) == doctest::Approx(4.0 / 3.0 * 3.14159265358979 * 1e-6));
}

TEST_CASE("an empty scene without a domain cannot be simulated") {
  CHECK_THROWS_AS(Simulation(Scene{}, config()), ValidationError);
}

}
