#pragma once

#include "splatsim/types.hpp"

namespace splatsim {

struct MaterialParams {
  double youngs_modulus = 3000.0;
  double poisson_ratio = 0.45;
  double density = 1000.0;
};

struct LameParams {
  double mu = 0.0;
  double lambda = 0.0;
};

/// Throws ValidationError unless E > 0, 0 <= nu < 0.5 and density > 0.
void validate(const MaterialParams& m);

/// mu = E / (2(1+nu)), lambda = E nu / ((1+nu)(1-2nu)).
LameParams lame(const MaterialParams& m);

/// Raised when the deformation gradient has non-positive determinant.
class InversionError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

/// Neo-Hookean first Piola-Kirchhoff stress:
///   P = mu (F - F^-T) + lambda log(det F) F^-T
Mat3 pk1_stress(const Mat3& F, double mu, double lambda);

/// Strain energy density psi(F) = mu/2 (tr(F^T F) - 3) - mu log J + lambda/2 (log J)^2.
double strain_energy_density(const Mat3& F, double mu, double lambda);

/// Clamp singular values of F into [lo, hi], keeping U and V proper rotations so the
/// result has positive determinant.
Mat3 clamp_singular_values(const Mat3& F, double lo, double hi);

}  // namespace splatsim
