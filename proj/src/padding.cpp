#include "splatsim/padding.hpp"
#include "splatsim/knn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace splatsim {
namespace {

Aabb field_box(const Scene& scene) {
  if (!scene.bounds.empty()) return scene.bounds;
  Aabb box = Scene::fit_bounds(scene.gaussians, 0.1);
  if (box.empty()) box = Aabb{Vec3::Zero(), Vec3::Ones()};
  return box;
}

}  // namespace

OpacityField compute_opacity_field(const Scene& scene, int resolution, double footprint_sigmas) {
  if (resolution < 2) throw ValidationError("opacity field resolution must be >= 2");
  const Aabb box = field_box(scene);
  OpacityField field;
  field.resolution = {resolution, resolution, resolution};
  field.origin = box.min;
  Vec3 ext = box.extent();
  const double fallback = ext.maxCoeff() > 0 ? ext.maxCoeff() : 1.0;
  for (int a = 0; a < 3; ++a)
    if (!(ext[a] > 0)) ext[a] = fallback;
  field.cell_size = ext / double(resolution - 1);
  field.values.assign(std::size_t(resolution) * resolution * resolution, 0.0);

  struct Prepared {
    Vec3 center;
    Mat3 precision;
    double opacity;
    std::array<int, 6> range;  // i0 i1 j0 j1 k0 k1 inclusive
  };
  std::vector<Prepared> prepared;
  std::vector<std::vector<std::uint32_t>> slabs(resolution);
  const double max_m2 = footprint_sigmas * footprint_sigmas;
  for (const auto& g : scene.gaussians) {
    const double op = g.opacity();
    if (!(op > 0)) continue;
    const Mat3 cov = g.covariance();
    Prepared p{g.position, cov.inverse(), op, {}};
    bool empty = false;
    for (int a = 0; a < 3; ++a) {
      const double half = footprint_sigmas * std::sqrt(cov(a, a));
      const double lo = (g.position[a] - half - field.origin[a]) / field.cell_size[a];
      const double hi = (g.position[a] + half - field.origin[a]) / field.cell_size[a];
      p.range[2 * a] = std::max(0, int(std::ceil(lo)));
      p.range[2 * a + 1] = std::min(resolution - 1, int(std::floor(hi)));
      empty = empty || p.range[2 * a] > p.range[2 * a + 1];
    }
    if (empty) continue;
    const auto id = std::uint32_t(prepared.size());
    for (int i = p.range[0]; i <= p.range[1]; ++i) slabs[i].push_back(id);
    prepared.push_back(p);
  }

  // Gather per x-slab; each node sums its Gaussians in scene order.
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < resolution; ++i) {
    for (std::uint32_t id : slabs[i]) {
      const Prepared& p = prepared[id];
      for (int j = p.range[2]; j <= p.range[3]; ++j) {
        for (int k = p.range[4]; k <= p.range[5]; ++k) {
          const Vec3 d = field.node_position(i, j, k) - p.center;
          const double m2 = d.dot(p.precision * d);
          if (m2 > max_m2) continue;
          field.values[field.index(i, j, k)] += p.opacity * std::exp(-0.5 * m2);
        }
      }
    }
  }
  return field;
}

Scene pad_interior(const Scene& scene, const OpacityField& field, const Camera& cam, double tau) {
  Scene out = scene;
  if (scene.empty()) return out;
  const auto [nx, ny, nz] = field.resolution;
  const Vec3 eye = cam.center();
  const double step = field.cell_size.minCoeff();

  auto node_of = [&](const Vec3& p) {
    const Vec3 g = (p - field.origin).cwiseQuotient(field.cell_size);
    return std::array<int, 3>{int(std::lround(g.x())), int(std::lround(g.y())), int(std::lround(g.z()))};
  };

  std::unordered_set<std::size_t> occupied;
  std::vector<Vec3> originals;
  std::vector<std::size_t> original_ids;
  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    const auto& g = scene.gaussians[i];
    if (g.padded) {
      const auto n = node_of(g.position);
      if (field.contains(n[0], n[1], n[2])) occupied.insert(field.index(n[0], n[1], n[2]));
    } else {
      originals.push_back(g.position);
      original_ids.push_back(i);
    }
  }

  std::vector<std::vector<std::array<int, 3>>> per_slab(nx);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      for (int k = 0; k < nz; ++k) {
        if (occupied.count(field.index(i, j, k))) continue;
        const double value = field.at(i, j, k);
        const Vec3 x = field.node_position(i, j, k);
        const Vec3 to_eye = eye - x;
        const double dist = to_eye.norm();
        if (!(dist > 0)) continue;
        const Vec3 dir = to_eye / dist;
        bool interior = false;
        for (int s = 1; s * step < dist; ++s) {
          const auto n = node_of(x + (s * step) * dir);
          if (!field.contains(n[0], n[1], n[2])) break;
          if (n[0] == i && n[1] == j && n[2] == k) continue;
          const double occluder = field.at(n[0], n[1], n[2]);
          if (occluder > value && occluder > tau) {
            interior = true;
            break;
          }
        }
        if (interior) per_slab[i].push_back({i, j, k});
      }
    }
  }

  const double cell = field.cell_size.minCoeff();
  const PointGrid nearest(originals, std::max(cell * 2.0, 1e-9));
  for (const auto& slab : per_slab) {
    for (const auto& n : slab) {
      const Vec3 x = field.node_position(n[0], n[1], n[2]);
      const long near = nearest.nearest(x);
      const Vec3 color = near >= 0 ? scene.gaussians[original_ids[std::size_t(near)]].color : Vec3::Constant(0.5);
      Gaussian g = Gaussian::make(x, Vec4(1, 0, 0, 0), Vec3::Constant(0.5 * cell), color, 0.0);
      g.padded = true;
      out.gaussians.push_back(g);
    }
  }
  if (out.bounds.empty()) out.bounds = field_box(scene);
  out.cell_volume = field.cell_size.prod();
  return out;
}

Scene pad_scene(const Scene& scene, const Camera& cam, const PaddingOptions& opts) {
  const OpacityField field = compute_opacity_field(scene, opts.grid, opts.footprint_sigmas);
  return pad_interior(scene, field, cam, opts.tau);
}

}  // namespace splatsim
