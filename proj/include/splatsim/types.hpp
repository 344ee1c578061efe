#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace splatsim {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Axis-aligned box. An empty box has min > max.
struct Aabb {
  Vec3 min = Vec3::Constant(1.0);
  Vec3 max = Vec3::Constant(-1.0);

  bool empty() const { return (min.array() > max.array()).any(); }
  Vec3 extent() const { return empty() ? Vec3::Zero() : Vec3(max - min); }
  Vec3 center() const { return 0.5 * (min + max); }

  void expand(const Vec3& p) {
    if (empty()) {
      min = max = p;
    } else {
      min = min.cwiseMin(p);
      max = max.cwiseMax(p);
    }
  }

  bool contains(const Vec3& p, double tolerance = 0.0) const {
    return (p.array() >= min.array() - tolerance).all() &&
           (p.array() <= max.array() + tolerance).all();
  }

  Aabb padded(double margin) const {
    if (empty()) return *this;
    return {min.array() - margin, max.array() + margin};
  }
};

/// Row-major H x W raster. Pixel (x, y) lives at index y * width + x.
template <typename T>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int w, int h, const T& fill = T{}) : width(w), height(h), data(std::size_t(w) * std::size_t(h), fill) {}

  std::size_t size() const { return data.size(); }
  T& operator()(int x, int y) { return data[std::size_t(y) * std::size_t(width) + std::size_t(x)]; }
  const T& operator()(int x, int y) const { return data[std::size_t(y) * std::size_t(width) + std::size_t(x)]; }
  bool same_shape(int w, int h) const { return width == w && height == h; }
};

using ImageRGB = Raster<Vec3>;
using ImageF = Raster<double>;
using Mask = Raster<std::uint8_t>;

/// Input violates a documented precondition or file-format rule.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical failure during optimization or simulation.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace splatsim
