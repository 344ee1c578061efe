#include "splatsim/gaussian.hpp"
#include "splatsim/scene.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <sstream>

namespace splatsim {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return std::log(p / (1.0 - p));
}

Mat3 quaternion_to_matrix(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Vec4 matrix_to_quaternion(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  Vec4 out(q.w(), q.x(), q.y(), q.z());
  if (out[0] < 0) out = -out;
  return out;
}

Gaussian Gaussian::make(const Vec3& position, const Vec4& rotation_wxyz, const Vec3& scale, const Vec3& color,
                        double opacity) {
  Gaussian g;
  g.position = position;
  g.rotation = rotation_wxyz.normalized();
  g.log_scale = scale.array().log();
  g.color = color;
  g.opacity_logit = logit(opacity);
  return g;
}

double Gaussian::opacity() const { return sigmoid(opacity_logit); }

void Gaussian::set_opacity(double value) { opacity_logit = logit(value); }

Mat3 Gaussian::rotation_matrix() const { return quaternion_to_matrix(rotation.normalized()); }

Mat3 Gaussian::covariance() const {
  const Mat3 r = rotation_matrix();
  const Vec3 s2 = (2.0 * log_scale).array().exp();
  Mat3 cov = r * s2.asDiagonal() * r.transpose();
  return 0.5 * (cov + cov.transpose());
}

std::optional<std::string> check_invariants(const Gaussian& g) {
  std::ostringstream err;
  if (!g.position.allFinite()) return "non-finite position";
  if (!g.rotation.allFinite()) return "non-finite rotation";
  if (!g.log_scale.allFinite()) return "non-finite scale";
  if (!g.color.allFinite()) return "non-finite color";
  if (std::isnan(g.opacity_logit)) return "NaN opacity";
  if (std::abs(g.rotation.norm() - 1.0) > 1e-6) {
    err << "quaternion norm " << g.rotation.norm() << " is not 1";
    return err.str();
  }
  if ((g.color.array() < 0.0).any() || (g.color.array() > 1.0).any()) return "color outside [0,1]";
  return std::nullopt;
}

double scale_ratio(const Gaussian& g) {
  // exp is monotone, so the ratio of linear scales is exp of the log-scale spread.
  return std::exp(g.log_scale.maxCoeff() - g.log_scale.minCoeff());
}

std::size_t Scene::padded_count() const {
  std::size_t n = 0;
  for (const auto& g : gaussians) n += g.padded ? 1 : 0;
  return n;
}

Aabb Scene::fit_bounds(const std::vector<Gaussian>& gaussians, double relative_margin) {
  Aabb box;
  for (const auto& g : gaussians) box.expand(g.position);
  if (box.empty()) return box;
  const double margin = std::max(relative_margin * box.extent().maxCoeff(), 1e-6);
  return box.padded(margin);
}

}  // namespace splatsim
