#include "splatsim/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace splatsim {

PointGrid::PointGrid(std::span<const Vec3> points, double cell_size)
    : points_(points.begin(), points.end()), cell_(cell_size > 0 ? cell_size : 1.0) {
  Aabb box;
  for (std::uint32_t i = 0; i < points_.size(); ++i) {
    cells_[key(points_[i])].push_back(i);
    box.expand(points_[i]);
  }
  max_ring_ = box.empty() ? 0 : long(std::ceil(box.extent().maxCoeff() / cell_)) + 1;
  if (!box.empty()) {
    lo_ = key(box.min);
    hi_ = key(box.max);
  }
}

long PointGrid::ring_limit(const Key& c) const {
  return std::max({std::labs(c.x - lo_.x), std::labs(c.x - hi_.x), std::labs(c.y - lo_.y), std::labs(c.y - hi_.y),
                   std::labs(c.z - lo_.z), std::labs(c.z - hi_.z)});
}

PointGrid::Key PointGrid::key(const Vec3& p) const {
  return {long(std::floor(p.x() / cell_)), long(std::floor(p.y() / cell_)), long(std::floor(p.z() / cell_))};
}

long PointGrid::nearest(const Vec3& q) const {
  if (points_.empty()) return -1;
  const Key c = key(q);
  long best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (long ring = 0; ring <= ring_limit(c); ++ring) {
    for (long dx = -ring; dx <= ring; ++dx)
      for (long dy = -ring; dy <= ring; ++dy)
        for (long dz = -ring; dz <= ring; ++dz) {
          if (std::max({std::labs(dx), std::labs(dy), std::labs(dz)}) != ring) continue;
          auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == cells_.end()) continue;
          for (std::uint32_t i : it->second) {
            const double d2 = (points_[i] - q).squaredNorm();
            if (d2 < best_d2 || (d2 == best_d2 && long(i) < best)) {
              best_d2 = d2;
              best = i;
            }
          }
        }
    // Everything outside this ring is at least `ring * cell` away.
    if (best >= 0 && std::sqrt(best_d2) <= ring * cell_) break;
  }
  return best;
}

std::vector<double> PointGrid::k_nearest_distances(std::size_t self, int k) const {
  const Vec3& q = points_[self];
  const Key c = key(q);
  std::vector<double> found;
  for (long ring = 0; ring <= max_ring_; ++ring) {
    for (long dx = -ring; dx <= ring; ++dx)
      for (long dy = -ring; dy <= ring; ++dy)
        for (long dz = -ring; dz <= ring; ++dz) {
          if (std::max({std::labs(dx), std::labs(dy), std::labs(dz)}) != ring) continue;
          auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == cells_.end()) continue;
          for (std::uint32_t i : it->second)
            if (i != self) found.push_back((points_[i] - q).norm());
        }
    if (int(found.size()) >= k) {
      std::sort(found.begin(), found.end());
      if (found[std::size_t(k) - 1] <= ring * cell_) break;
    }
  }
  std::sort(found.begin(), found.end());
  if (int(found.size()) > k) found.resize(std::size_t(k));
  return found;
}

std::vector<double> mean_neighbor_distance(std::span<const Vec3> points, int k) {
  std::vector<double> out(points.size(), 0.0);
  if (points.size() < 2) return out;
  Aabb box;
  for (const auto& p : points) box.expand(p);
  // Cell sized for roughly a handful of points per occupied cell on a 2D sheet.
  // Collinear input has no area, so the linear extent sets a floor.
  const Vec3 ext = box.extent();
  const double n = double(points.size());
  double area = std::max({ext.x() * ext.y(), ext.y() * ext.z(), ext.x() * ext.z(), 1e-12});
  double cell = std::max(std::sqrt(area / n), ext.maxCoeff() / n) * 2.0;
  if (!(cell > 0)) cell = 1.0;
  PointGrid grid(points, cell);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(points.size()); ++i) {
    const auto d = grid.k_nearest_distances(std::size_t(i), k);
    double s = 0.0;
    for (double v : d) s += v;
    out[i] = d.empty() ? 0.0 : s / double(d.size());
  }
  return out;
}

}  // namespace splatsim
