// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <unordered_map>
#include <vector>

#include "smc/edges.hpp"
#include "smc/tensor.hpp"
#include "smc/volume.hpp"

namespace smc {

using Rng = std::mt19937_64;

/// Inclusive voxel box.
struct Roi {
  Index3 lo{0, 0, 0};
  Index3 hi{0, 0, 0};

  static Roi full(const Dims& d) { return {{0, 0, 0}, {d.h - 1, d.w - 1, d.d - 1}}; }
  bool contains(const Index3& p) const {
    for (int a = 0; a < 3; ++a) {
      if (p[a] < lo[a] || p[a] > hi[a]) return false;
    }
    return true;
  }
  bool contains(const Roi& inner) const {
    for (int a = 0; a < 3; ++a) {
      if (inner.lo[a] < lo[a] || inner.hi[a] > hi[a]) return false;
    }
    return true;
  }
  bool valid_in(const Dims& d) const {
    for (int a = 0; a < 3; ++a) {
      if (lo[a] < 0 || lo[a] > hi[a] || hi[a] >= d[a]) return false;
    }
    return true;
  }
  std::int64_t volume() const {
    std::int64_t v = 1;
    for (int a = 0; a < 3; ++a) v *= hi[a] - lo[a] + 1;
    return v;
  }
  bool operator==(const Roi&) const = default;
};

struct PointCloud {
  std::vector<Index3> coords;
  Dims source_dims;
  /// Set when the ROI had fewer edge voxels than requested.
  bool with_replacement = false;

  std::size_t size() const { return coords.size(); }
};

using PointLabels = std::vector<int>;

/// Uniform sample of `n` edge voxels inside `roi`: without replacement when
/// enough exist, otherwise every candidate once plus uniform draws to fill.
PointCloud sample_edge_points(const EdgeMap& edges, const Roi& roi, std::size_t n, Rng& rng);

/// Per-point class from `mask`, reading background points through a
/// foreground dilation of `dilate` voxels (Chebyshev ball).
PointLabels label_points(const PointCloud& pc, const SegMask& mask, int dilate = 1);

/// Point coordinates mapped onto [-1, 1] per axis of the source grid.
std::vector<double> normalized_coords(const PointCloud& pc);

/// Hash-indexed set of active voxels at some stride.
struct SparseGrid {
  int stride = 1;
  std::vector<Index3> active;
  Tensor feat;  // |active| x d
  std::unordered_map<std::uint64_t, std::int64_t> index;
  std::vector<std::int64_t> point_row;  // original point -> active row
  std::vector<double> counts;           // points per active row

  std::size_t rows() const { return active.size(); }
  /// Active row holding voxel `v` (already at this stride), or -1.
  std::int64_t find(const Index3& v) const;
  /// 3x3x3 neighbour table over the active set.
  std::shared_ptr<const SparseNeighbors> neighbors() const;
};

std::uint64_t voxel_key(const Index3& v);

/// Active set = unique floor(coords / stride) in first-seen order; features are
/// the per-voxel mean of the normalised point coordinates.
SparseGrid voxelize_points(const PointCloud& pc, int stride);

/// Rows of a dense channels-last feature grid [Hs, Ws, Ds, C] at
/// floor(coord / stride); differentiable through gather_rows.
Tensor gather_point_features(const Tensor& dense, const PointCloud& pc, int stride);

/// Feature of each point's containing coarse voxel.
Tensor nn_upscale(const SparseGrid& coarse, const Tensor& coarse_feat, const PointCloud& pc);

/// For each fine active voxel, the row of its parent at twice the stride.
std::vector<std::int64_t> parent_rows(const SparseGrid& fine, const SparseGrid& coarse);

/// ASCII PLY with one "x y z label" vertex per line and a "comment dims" line.
void write_ply(const std::filesystem::path& path, const PointCloud& pc, const PointLabels& labels);
struct LabeledCloud {
  PointCloud cloud;
  PointLabels labels;
};
LabeledCloud read_ply(const std::filesystem::path& path);

/// Tight box around the points whose label is nonzero (nullopt if none).
std::optional<Roi> foreground_bbox(const PointCloud& pc, const PointLabels& labels);

}  // namespace smc
