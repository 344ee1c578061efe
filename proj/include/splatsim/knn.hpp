#pragma once

#include "splatsim/types.hpp"

#include <span>
#include <unordered_map>
#include <vector>

namespace splatsim {

/// Uniform hash grid over a fixed point set for nearest-neighbour queries.
class PointGrid {
 public:
  PointGrid(std::span<const Vec3> points, double cell_size);

  /// Index of the closest point to `q` (ties: lowest index); -1 when empty.
  long nearest(const Vec3& q) const;
  /// Distances to the k nearest points other than point `self`, ascending.
  std::vector<double> k_nearest_distances(std::size_t self, int k) const;

  double cell_size() const { return cell_; }

 private:
  struct Key {
    long x, y, z;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return std::size_t(k.x * 73856093L) ^ std::size_t(k.y * 19349663L) ^ std::size_t(k.z * 83492791L);
    }
  };
  Key key(const Vec3& p) const;
  long ring_limit(const Key& c) const;

  std::vector<Vec3> points_;
  double cell_;
  std::unordered_map<Key, std::vector<std::uint32_t>, KeyHash> cells_;
  long max_ring_ = 0;
  Key lo_{0, 0, 0};
  Key hi_{0, 0, 0};
};

/// Mean distance from each point to its k nearest neighbours.
std::vector<double> mean_neighbor_distance(std::span<const Vec3> points, int k);

}  // namespace splatsim
