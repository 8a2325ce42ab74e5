// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "smc/points.hpp"
#include "smc/volume.hpp"

namespace smc {

using Vec3 = std::array<double, 3>;

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;  // outward (counter-clockwise seen from outside)

  bool empty() const { return faces.empty(); }
};

/// V - E + F over the vertices referenced by faces.
int euler_characteristic(const Mesh& m);

struct AlphaOptions {
  double jitter = 0.25;  // uniform +/- jitter in voxels before triangulation
  std::uint64_t seed = 0;
};

struct AlphaStats {
  std::size_t kept_cells = 0;
  std::size_t enclosed_cells = 0;  // dropped cells sealed off from infinity
  double solid_volume = 0.0;
  double enclosed_volume = 0.0;
  /// Share of the solid contributed by sealed-off cells; near zero when the
  /// kept shell has holes and encloses nothing.
  double enclosed_fraction() const { return solid_volume > 0.0 ? enclosed_volume / solid_volume : 0.0; }
};

/// Boundary of the alpha complex: Delaunay cells with circumradius <= alpha,
/// plus every enclosed cell not reachable from infinity through dropped cells.
Mesh alpha_shape(const std::vector<Vec3>& points, double alpha, const AlphaOptions& opt = {},
                 AlphaStats* stats = nullptr);

/// 3 x mean nearest-neighbour distance.
double default_alpha(const std::vector<Vec3>& points);

/// Generalized winding number of `p` with respect to a closed outward mesh
/// (1 inside, 0 outside).
double winding_number(const Mesh& mesh, const Vec3& p);

/// Solid voxels of a closed mesh. Voxels whose centre is within 0.5 of a
/// triangle form a band that blocks a 6-connected exterior flood from the
/// border; everything the flood cannot reach is solid, except band voxels
/// whose centre has winding number <= 0.5 or lies on the surface. Throws
/// GeometryError on leakage (> 90% filled).
SegMask voxelize_and_fill(const Mesh& mesh, const Dims& dims);

struct ReconstructOptions {
  double alpha = 0.0;  // <= 0 selects default_alpha
  int retries = 3;     // alpha doubles on an empty, open or leaking result
  /// A result enclosing less than this share of its solid counts as open.
  double min_enclosed_fraction = 0.25;
  bool keep_largest_component = true;
  /// Before meshing, keep only the largest cluster of points whose voxels are
  /// linked within this Chebyshev distance; 0 keeps every point.
  int cluster_link = 2;
  AlphaOptions alpha_opts;
};

/// Points of the largest cluster; voxels floor(p) within Chebyshev distance
/// `link` are connected. Ties go to the cluster seen first.
std::vector<Vec3> largest_point_cluster(const std::vector<Vec3>& points, int link);

struct Reconstruction {
  Mesh mesh;
  SegMask mask;
  double alpha = 0.0;
  int attempts = 0;
  AlphaStats stats;
  std::size_t points_used = 0;  // after clustering
};

Reconstruction reconstruct_points(const std::vector<Vec3>& points, const Dims& dims,
                                  const ReconstructOptions& opt = {});
/// Foreground (label != 0) points of a labelled cloud.
std::vector<Vec3> foreground_points(const PointCloud& pc, const PointLabels& labels);

void write_obj(const std::filesystem::path& path, const Mesh& m);
void write_mesh_ply(const std::filesystem::path& path, const Mesh& m);

}  // namespace smc
