// SPDX-License-Identifier: Apache-2.0
#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. None of these call into the code they are checking.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "smc/edges.hpp"
#include "smc/reconstruct.hpp"
#include "smc/tensor.hpp"
#include "smc/volume.hpp"

namespace smc::testing {

using Rng = std::mt19937_64;

std::vector<double> uniform(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0);
Tensor random_param(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0);
/// Rows drawn from a softmax of uniform logits in [-2, 2].
Tensor random_probs(std::size_t n, std::size_t c, Rng& rng);

/// Lovasz extension of the Jaccard loss evaluated directly from sets: the
/// sorted errors weighted by the increments of |M| / |G u M| over growing
/// prefixes M. Mean over classes present in `y`.
double lovasz_reference(const std::vector<double>& probs, const std::vector<int>& y, int classes);
/// 1 - IoU per class present in `y` from a hard prediction, averaged.
double hard_jaccard_loss(const std::vector<int>& pred, const std::vector<int>& y, int classes);

/// sum_c t_c log(t_c / s_c) averaged over rows.
double kl_reference(const std::vector<double>& teacher, const std::vector<double>& student, std::size_t classes);

/// O(n^2) ASSD over 6-neighbourhood boundary voxels.
double assd_bruteforce(const Grid<std::uint8_t>& pred, const Grid<std::uint8_t>& gt, const Spacing& spacing);

/// Binary ball mask with centre `c` and radius `r` (voxel centres at integers).
SegMask ball_mask(const Dims& dims, const Vec3& c, double r);
/// Uniform points on a sphere surface.
std::vector<Vec3> sphere_points(std::size_t n, const Vec3& c, double r, Rng& rng);

/// Share of edge voxels whose centre lies within `tol` of the sphere surface.
double sphere_fidelity(const EdgeMap& e, const Vec3& c, double r, double tol);
/// Share of `a`'s edge voxels with an edge of `b` in their 3x3x3 neighbourhood.
double dilated_overlap(const EdgeMap& a, const EdgeMap& b);

/// Number of 6-connected background components not touching the border.
int enclosed_background_components(const Grid<std::uint8_t>& fg);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace smc::testing
