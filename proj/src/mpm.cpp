#include "splatsim/mpm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace splatsim {

void SimConfig::validate() const {
  std::ostringstream err;
  if (grid_resolution < 2 * boundary_cells + 4) err << "grid_resolution too small";
  else if (substeps < 0) err << "substeps must be >= 0";
  else if (!(dt > 0)) err << "dt must be > 0";
  else if (!(damping >= 0)) err << "damping must be >= 0";
  else if (!gravity.allFinite()) err << "gravity must be finite";
  else if (base_face < 0 || base_face > 5) err << "base_face must be in [0,5]";
  else if (boundary_cells < 1) err << "boundary_cells must be >= 1";
  else if (!(singular_min > 0 && singular_min <= 1 && singular_max >= 1)) err << "invalid singular value clamp";
  if (!err.str().empty()) throw ValidationError("sim: " + err.str());
}

void ForceEvent::validate() const {
  if (!(radius > 0) || !std::isfinite(radius)) throw ValidationError("force event radius must be > 0");
  if (!force.allFinite() || !center.allFinite()) throw ValidationError("force event must be finite");
}

void Particles::push_back(const Vec3& x, double m, double vol, const Mat3& cov) {
  position.push_back(x);
  velocity.push_back(Vec3::Zero());
  mass.push_back(m);
  volume0.push_back(vol);
  F.push_back(Mat3::Identity());
  C.push_back(Mat3::Zero());
  cov0.push_back(cov);
}

GridSpec GridSpec::around(const Aabb& box, int resolution, int boundary_cells) {
  GridSpec g;
  Vec3 ext = box.extent();
  double longest = ext.maxCoeff();
  if (!(longest > 0)) longest = 1.0;
  const int interior = std::max(1, resolution - 2 * boundary_cells - 1);
  g.dx = longest / interior;
  g.origin = box.min - Vec3::Constant(boundary_cells * g.dx);
  for (int a = 0; a < 3; ++a) {
    g.nodes[a] = int(std::ceil(ext[a] / g.dx - 1e-9)) + 2 * boundary_cells + 1;
    g.nodes[a] = std::max(g.nodes[a], 2 * boundary_cells + 3);
  }
  return g;
}

MpmSolver::MpmSolver(const GridSpec& grid, const SimConfig& cfg) : grid_(grid), cfg_(cfg) {
  cfg_.validate();
  std::array<bool, 6> sticky{};
  for (int f = 0; f < 6; ++f) sticky[f] = cfg_.faces[f] == Boundary::sticky;
  sticky[cfg_.base_face] = true;
  const int bc = cfg_.boundary_cells;
  for (int a = 0; a < 3; ++a) {
    if (grid_.nodes[a] < 3) throw ValidationError("mpm grid needs at least 3 nodes per axis");
    particle_blocks_[a] = (grid_.nodes[a] - 3) / kBlock + 1;
    owner_blocks_[a] = (grid_.nodes[a] + kBlock - 1) / kBlock;
    sticky_band_[a].assign(grid_.nodes[a], 0);
    for (int i = 0; i < grid_.nodes[a]; ++i)
      sticky_band_[a][i] = (i < bc && sticky[2 * a]) || (i >= grid_.nodes[a] - bc && sticky[2 * a + 1]);
  }
  nodes_.assign(grid_.node_count(), Node::Zero());
  touched_.assign(std::size_t(owner_blocks_[0]) * owner_blocks_[1] * owner_blocks_[2], 0);
}

void MpmSolver::bucket(const Particles& particles) {
  const std::size_t nblocks = std::size_t(particle_blocks_[0]) * particle_blocks_[1] * particle_blocks_[2];
  const std::size_t np = particles.size();
  particle_block_.resize(np);
  stencils_.resize(np);
  block_start_.assign(nblocks + 1, 0);
  const double inv_dx = 1.0 / grid_.dx;
  for (std::size_t p = 0; p < np; ++p) {
    Stencil& s = stencils_[p];
    const Vec3 xg = (particles.position[p] - grid_.origin) * inv_dx;
    std::array<int, 3> base;
    for (int a = 0; a < 3; ++a) {
      const double shifted = xg[a] - 0.5;
      int cell = int(shifted);  // truncation; corrected to floor below
      if (shifted < cell) --cell;
      base[a] = std::clamp(cell, 0, grid_.nodes[a] - 3);
      const double f = xg[a] - base[a];
      s.frac[a] = f;
      s.w[0][a] = 0.5 * (1.5 - f) * (1.5 - f);
      s.w[1][a] = 0.75 - (f - 1.0) * (f - 1.0);
      s.w[2][a] = 0.5 * (f - 0.5) * (f - 0.5);
    }
    s.base = grid_.index(base[0], base[1], base[2]);
    const std::size_t b = (std::size_t(base[0] / kBlock) * particle_blocks_[1] + std::size_t(base[1] / kBlock)) *
                              particle_blocks_[2] +
                          std::size_t(base[2] / kBlock);
    particle_block_[p] = std::uint32_t(b);
    ++block_start_[b + 1];
  }
  for (std::size_t b = 0; b < nblocks; ++b) block_start_[b + 1] += block_start_[b];
  order_.resize(np);
  std::vector<std::uint32_t> cursor(block_start_.begin(), block_start_.end() - 1);
  for (std::size_t p = 0; p < np; ++p) order_[cursor[particle_block_[p]]++] = std::uint32_t(p);

  // Nodes written by particle block b are owned by blocks b + {0,1}^3.
  touched_list_.clear();
  for (int bi = 0; bi < particle_blocks_[0]; ++bi)
    for (int bj = 0; bj < particle_blocks_[1]; ++bj)
      for (int bk = 0; bk < particle_blocks_[2]; ++bk) {
        const std::size_t b = (std::size_t(bi) * particle_blocks_[1] + bj) * particle_blocks_[2] + bk;
        if (block_start_[b] == block_start_[b + 1]) continue;
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj)
            for (int dk = 0; dk < 2; ++dk) {
              const int oi = bi + di, oj = bj + dj, ok = bk + dk;
              if (oi >= owner_blocks_[0] || oj >= owner_blocks_[1] || ok >= owner_blocks_[2]) continue;
              const std::size_t o = (std::size_t(oi) * owner_blocks_[1] + oj) * owner_blocks_[2] + ok;
              if (!touched_[o]) {
                touched_[o] = 1;
                touched_list_.push_back(std::uint32_t(o));
              }
            }
      }
  std::sort(touched_list_.begin(), touched_list_.end());
}

template <typename Fn>
void MpmSolver::for_touched_nodes(Fn&& fn) {
  for (std::uint32_t o : touched_list_) {
    const int ok = int(o % owner_blocks_[2]);
    const int oj = int((o / owner_blocks_[2]) % owner_blocks_[1]);
    const int oi = int(o / (std::size_t(owner_blocks_[2]) * owner_blocks_[1]));
    const int i1 = std::min(grid_.nodes[0], (oi + 1) * kBlock);
    const int j1 = std::min(grid_.nodes[1], (oj + 1) * kBlock);
    const int k0 = ok * kBlock, k1 = std::min(grid_.nodes[2], (ok + 1) * kBlock);
    for (int i = oi * kBlock; i < i1; ++i)
      for (int j = oj * kBlock; j < j1; ++j) {
        const std::size_t row = grid_.index(i, j, 0);
        for (int k = k0; k < k1; ++k) fn(i, j, k, row + std::size_t(k));
      }
  }
}

void MpmSolver::particle_to_grid(Particles& particles, const LameParams& lame, double dt) {
  const double dx = grid_.dx;
  const double inv_d = 4.0 / (dx * dx);
  const std::size_t s0 = std::size_t(grid_.nodes[1]) * grid_.nodes[2], s1 = std::size_t(grid_.nodes[2]);
  const int pb1 = particle_blocks_[1], pb2 = particle_blocks_[2];
  std::vector<std::size_t> blocks;
  // Eight-colour sweep: same-colour blocks write disjoint node ranges, and each node
  // receives contributions in a fixed order regardless of the thread count.
  for (int color = 0; color < 8; ++color) {
    const int ci = color & 1, cj = (color >> 1) & 1, ck = (color >> 2) & 1;
    blocks.clear();
    for (int bi = ci; bi < particle_blocks_[0]; bi += 2)
      for (int bj = cj; bj < pb1; bj += 2)
        for (int bk = ck; bk < pb2; bk += 2) {
          const std::size_t b = (std::size_t(bi) * pb1 + bj) * pb2 + bk;
          if (block_start_[b] != block_start_[b + 1]) blocks.push_back(b);
        }
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t bidx = 0; bidx < std::ptrdiff_t(blocks.size()); ++bidx) {
      const std::size_t b = blocks[bidx];
      for (std::uint32_t e = block_start_[b]; e < block_start_[b + 1]; ++e) {
        const std::uint32_t p = order_[e];
        Mat3& F = particles.F[p];
        if (F.determinant() < cfg_.inversion_det) F = clamp_singular_values(F, cfg_.singular_min, cfg_.singular_max);
        const double m = particles.mass[p];
        const Mat3 affine =
            (-dt * particles.volume0[p] * inv_d) * pk1_stress(F, lame.mu, lame.lambda) * F.transpose() +
            m * particles.C[p];
        const Stencil& s = stencils_[p];
        // Node (a,b,c) receives w * (m v + A (x_node - x_p)), with x_node - x_p = dx ((a,b,c) - frac).
        Node q;
        q << m * particles.velocity[p] - dx * (affine * s.frac), m;
        Node a0, a1, a2;
        a0 << dx * affine.col(0), 0.0;
        a1 << dx * affine.col(1), 0.0;
        a2 << dx * affine.col(2), 0.0;
        for (int a = 0; a < 3; ++a) {
          const Node qa = q + double(a) * a0;
          for (int bq = 0; bq < 3; ++bq) {
            const Node t0 = qa + double(bq) * a1;
            const Node t1 = t0 + a2;
            const Node t2 = t1 + a2;
            const double wab = s.w[a][0] * s.w[bq][1];
            Node* row = &nodes_[s.base + a * s0 + bq * s1];
            row[0] += (wab * s.w[0][2]) * t0;
            row[1] += (wab * s.w[1][2]) * t1;
            row[2] += (wab * s.w[2][2]) * t2;
          }
        }
      }
    }
  }
}

void MpmSolver::update_grid(std::span<const ForceEvent> forces, double dt, std::int64_t substep_index) {
  const double eps = cfg_.mass_epsilon;
  struct Push {
    Vec3 center;
    double r2;
    Vec3 dv;
  };
  std::vector<Push> pushes;
  for (const ForceEvent& ev : forces) {
    if (!ev.active(substep_index)) continue;
    const double r2 = ev.radius * ev.radius;
    std::array<int, 3> lo, hi;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, int(std::ceil((ev.center[a] - ev.radius - grid_.origin[a]) / grid_.dx)));
      hi[a] = std::min(grid_.nodes[a] - 1, int(std::floor((ev.center[a] + ev.radius - grid_.origin[a]) / grid_.dx)));
    }
    double region_mass = 0.0;
    for (int i = lo[0]; i <= hi[0]; ++i)
      for (int j = lo[1]; j <= hi[1]; ++j)
        for (int k = lo[2]; k <= hi[2]; ++k) {
          const double m = nodes_[grid_.index(i, j, k)][3];
          if (m > eps && (grid_.node_position(i, j, k) - ev.center).squaredNorm() <= r2) region_mass += m;
        }
    if (!(region_mass > 0)) {
      ++report_.empty_force_regions;
      continue;
    }
    pushes.push_back({ev.center, r2, dt * ev.force / region_mass});
  }

  const double keep = cfg_.damping > 0 ? std::exp(-cfg_.damping * dt) : 1.0;
  const Vec3 gdt = dt * cfg_.gravity;
  const bool gravity = !gdt.isZero(0.0);
  const auto& band0 = sticky_band_[0];
  const auto& band1 = sticky_band_[1];
  const auto& band2 = sticky_band_[2];
  const int ob1 = owner_blocks_[1], ob2 = owner_blocks_[2];
  bool bad = false;
#pragma omp parallel for schedule(static) reduction(|| : bad)
  for (std::ptrdiff_t t = 0; t < std::ptrdiff_t(touched_list_.size()); ++t) {
    const std::uint32_t o = touched_list_[t];
    const int ok = int(o % ob2), oj = int((o / ob2) % ob1), oi = int(o / (std::size_t(ob2) * ob1));
    const int i0 = oi * kBlock, j0 = oj * kBlock, k0 = ok * kBlock;
    const int i1 = std::min(grid_.nodes[0], i0 + kBlock), j1 = std::min(grid_.nodes[1], j0 + kBlock),
              k1 = std::min(grid_.nodes[2], k0 + kBlock);
    // Only pushes whose sphere reaches this block are tested per node.
    std::array<const Push*, 4> near{};
    std::size_t n_near = 0;
    const Vec3 blo = grid_.node_position(i0, j0, k0), bhi = grid_.node_position(i1 - 1, j1 - 1, k1 - 1);
    for (const Push& push : pushes) {
      const Vec3 d = push.center.cwiseMax(blo).cwiseMin(bhi) - push.center;
      if (d.squaredNorm() <= push.r2 && n_near < near.size()) near[n_near++] = &push;
      else if (d.squaredNorm() <= push.r2) n_near = near.size() + 1;  // too many: fall back below
    }
    const bool all_pushes = n_near > near.size();
    for (int i = i0; i < i1; ++i)
      for (int j = j0; j < j1; ++j) {
        Node* row = &nodes_[grid_.index(i, j, 0)];
        const bool band_ij = band0[i] | band1[j];
        for (int k = k0; k < k1; ++k) {
          Node& n = row[k];
          if (!(n[3] > eps)) {
            n.head<3>().setZero();
            continue;
          }
          if (band_ij | band2[k]) {
            n.head<3>().setZero();
            bad = bad || !std::isfinite(n[3]);
            continue;
          }
          Vec3 v = n.head<3>() * (1.0 / n[3]);
          if (gravity) v += gdt;
          if (n_near > 0) {
            const Vec3 x = grid_.node_position(i, j, k);
            if (all_pushes) {
              for (const Push& push : pushes)
                if ((x - push.center).squaredNorm() <= push.r2) v += push.dv;
            } else {
              for (std::size_t q = 0; q < n_near; ++q)
                if ((x - near[q]->center).squaredNorm() <= near[q]->r2) v += near[q]->dv;
            }
          }
          if (keep != 1.0) v *= keep;
          bad = bad || !std::isfinite(v.sum());
          n.head<3>() = v;
        }
      }
  }
  if (bad) {
    throw RuntimeFailure("simulation produced a non-finite grid velocity at substep " + std::to_string(substep_index));
  }
}

void MpmSolver::grid_to_particle(Particles& particles, double dt) {
  const double dx = grid_.dx;
  const double c_scale = 4.0 / dx;  // (4/dx^2) * dx
  const std::size_t s0 = std::size_t(grid_.nodes[1]) * grid_.nodes[2], s1 = std::size_t(grid_.nodes[2]);
  const Vec3 lo = grid_.origin + Vec3::Constant(0.5 * dx);
  Vec3 hi;
  for (int a = 0; a < 3; ++a) hi[a] = grid_.origin[a] + (grid_.nodes[a] - 2.5) * dx - 1e-9 * dx;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < std::ptrdiff_t(particles.size()); ++p) {
    const Stencil& s = stencils_[p];
    // m0..m2: sums of w v times the node offset along each axis (4th lane unused).
    Node v4 = Node::Zero(), m0 = Node::Zero(), m1 = Node::Zero(), m2 = Node::Zero();
    for (int a = 0; a < 3; ++a) {
      Node va = Node::Zero();
      for (int bq = 0; bq < 3; ++bq) {
        const Node* row = &nodes_[s.base + a * s0 + bq * s1];
        const double wab = s.w[a][0] * s.w[bq][1];
        const Node w0 = (wab * s.w[0][2]) * row[0];
        const Node w1 = (wab * s.w[1][2]) * row[1];
        const Node w2 = (wab * s.w[2][2]) * row[2];
        const Node vab = w0 + w1 + w2;
        va += vab;
        m1 += double(bq) * vab;
        m2 += w1 + 2.0 * w2;
      }
      v4 += va;
      m0 += double(a) * va;
    }
    const Vec3 v = v4.head<3>();
    particles.velocity[p] = v;
    Mat3 moments;
    moments << m0.head<3>(), m1.head<3>(), m2.head<3>();
    const Mat3 c = c_scale * (moments - v * s.frac.transpose());
    particles.C[p] = c;
    particles.position[p] = (particles.position[p] + dt * v).cwiseMax(lo).cwiseMin(hi);
    particles.F[p] = (Mat3::Identity() + dt * c) * particles.F[p];
  }
}

void MpmSolver::clear_touched() {
  const int ob1 = owner_blocks_[1], ob2 = owner_blocks_[2];
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < std::ptrdiff_t(touched_list_.size()); ++t) {
    const std::uint32_t o = touched_list_[t];
    const int ok = int(o % ob2), oj = int((o / ob2) % ob1), oi = int(o / (std::size_t(ob2) * ob1));
    const int k0 = ok * kBlock, k1 = std::min(grid_.nodes[2], k0 + kBlock);
    for (int i = oi * kBlock; i < std::min(grid_.nodes[0], (oi + 1) * kBlock); ++i)
      for (int j = oj * kBlock; j < std::min(grid_.nodes[1], (oj + 1) * kBlock); ++j)
        for (int k = k0; k < k1; ++k) nodes_[grid_.index(i, j, k)].setZero();
  }
  for (std::uint32_t o : touched_list_) touched_[o] = 0;
  touched_list_.clear();
}

void MpmSolver::substep(Particles& particles, const LameParams& lame, std::span<const ForceEvent> forces, double dt,
                        std::int64_t substep_index) {
  report_ = {};
  bucket(particles);
  particle_to_grid(particles, lame, dt);
  if (cfg_.track_conservation) {
    for (std::size_t p = 0; p < particles.size(); ++p) {
      report_.particle_mass += particles.mass[p];
      report_.particle_momentum += particles.mass[p] * particles.velocity[p];
    }
    for_touched_nodes([&](int, int, int, std::size_t n) {
      report_.grid_mass += nodes_[n][3];
      report_.grid_momentum += nodes_[n].head<3>();
    });
  }
  try {
    update_grid(forces, dt, substep_index);
  } catch (...) {
    clear_touched();
    throw;
  }
  grid_to_particle(particles, dt);
  clear_touched();
}

}  // namespace splatsim
