#include "splatsim/material.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <sstream>

namespace splatsim {

void validate(const MaterialParams& m) {
  std::ostringstream err;
  if (!(m.youngs_modulus > 0) || !std::isfinite(m.youngs_modulus)) err << "youngs_modulus must be > 0";
  else if (!(m.poisson_ratio >= 0.0 && m.poisson_ratio < 0.5)) err << "poisson_ratio must lie in [0, 0.5)";
  else if (!(m.density > 0) || !std::isfinite(m.density)) err << "density must be > 0";
  if (!err.str().empty()) throw ValidationError("material: " + err.str());
}

LameParams lame(const MaterialParams& m) {
  const double e = m.youngs_modulus;
  const double nu = m.poisson_ratio;
  return {e / (2.0 * (1.0 + nu)), e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))};
}

Mat3 pk1_stress(const Mat3& F, double mu, double lambda) {
  const double j = F.determinant();
  if (!(j > 0.0)) {
    std::ostringstream err;
    err << "deformation gradient is inverted (det F = " << j << ")";
    throw InversionError(err.str());
  }
  const Mat3 f_inv_t = F.inverse().transpose();
  return mu * (F - f_inv_t) + lambda * std::log(j) * f_inv_t;
}

double strain_energy_density(const Mat3& F, double mu, double lambda) {
  const double j = F.determinant();
  const double log_j = std::log(j);
  return 0.5 * mu * ((F.transpose() * F).trace() - 3.0) - mu * log_j + 0.5 * lambda * log_j * log_j;
}

Mat3 clamp_singular_values(const Mat3& F, double lo, double hi) {
  Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  Vec3 sigma = svd.singularValues();
  // Fold reflections into the smallest singular value so U and V are rotations.
  if (u.determinant() < 0) {
    u.col(2) *= -1;
    sigma[2] *= -1;
  }
  if (v.determinant() < 0) {
    v.col(2) *= -1;
    sigma[2] *= -1;
  }
  for (int i = 0; i < 3; ++i) sigma[i] = std::clamp(sigma[i], lo, hi);
  return u * sigma.asDiagonal() * v.transpose();
}

}  // namespace splatsim
