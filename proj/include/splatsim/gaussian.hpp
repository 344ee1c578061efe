#pragma once

#include "splatsim/types.hpp"

#include <optional>
#include <string>

namespace splatsim {

/// One anisotropic splat. Scale and opacity are held in the same unconstrained
/// parameterization the optimizer works in (log scale, logit opacity), so
/// serialization is lossless and positivity/range invariants hold by construction.
struct Gaussian {
  Vec3 position = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);  // quaternion (w, x, y, z)
  Vec3 log_scale = Vec3::Zero();
  Vec3 color = Vec3::Zero();
  double opacity_logit = 0.0;
  bool padded = false;

  static Gaussian make(const Vec3& position, const Vec4& rotation_wxyz, const Vec3& scale,
                       const Vec3& color, double opacity);

  Vec3 scale() const { return log_scale.array().exp(); }
  double opacity() const;
  void set_opacity(double value);
  Mat3 rotation_matrix() const;
  /// R * diag(scale^2) * R^T with R from the normalized quaternion.
  Mat3 covariance() const;

  friend bool operator==(const Gaussian&, const Gaussian&) = default;
};

double sigmoid(double x);
double logit(double p);

/// Rotation matrix of a unit quaternion (w, x, y, z).
Mat3 quaternion_to_matrix(const Vec4& q);
Vec4 matrix_to_quaternion(const Mat3& r);

/// Describes the first violated Gaussian invariant, if any.
std::optional<std::string> check_invariants(const Gaussian& g);

/// Max over min linear scale.
double scale_ratio(const Gaussian& g);

}  // namespace splatsim
