// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "smc/volume.hpp"

namespace smc {

/// Binary edge map (1 = edge voxel) on the grid of its source volume.
struct EdgeMap {
  Grid<std::uint8_t> bits;

  const Dims& dims() const { return bits.dims(); }
  std::size_t count() const;
  /// Edge maps travel as two-class masks.
  SegMask as_mask(const Spacing& spacing = {}) const;
  static EdgeMap from_mask(const SegMask& m);
};

struct EdgeParams {
  double sigma = 1.5;
  double k = 1.6;
  /// Fraction of the response's 99th-percentile magnitude used as the
  /// zero-crossing floor when no explicit floor is given.
  double floor_fraction = 0.05;
  /// The floor never drops below this many standard deviations of the
  /// response to the volume's estimated noise; 0 disables the term.
  double noise_factor = 3.0;
};

/// Separable Gaussian, radius ceil(3 sigma), half-sample reflected borders,
/// kernel normalised to unit sum.
Field gaussian_smooth(const Field& f, double sigma);
Field gaussian_smooth(const Volume& v, double sigma);

/// The 1-D kernel used by gaussian_smooth (length 2 * ceil(3 sigma) + 1).
std::vector<double> gaussian_kernel(double sigma);

/// gaussian_smooth(v, sigma) - gaussian_smooth(v, k * sigma).
Field dog_response(const Volume& v, double sigma, double k);
Field dog_response(const Field& f, double sigma, double k);

/// Zero-crossing voxels of a DoG response. A voxel is marked when some
/// 6-neighbour has a different sign, the voxel is the one of the pair closer to
/// zero (ties mark both), and the response range across the pair is at least
/// `grad_floor`. The rule is invariant to flipping the response's sign.
EdgeMap extract_edges(const Field& response, double grad_floor);

/// 99th percentile of |response|, scaled by `fraction`.
double adaptive_floor(const Field& response, double fraction);

/// Robust noise level of a piecewise-smooth volume from the median absolute
/// first difference along the last axis.
double noise_sigma(const Volume& v);
/// Standard deviation of the DoG response to unit white noise.
double dog_noise_gain(double sigma, double k);
/// max(adaptive_floor, noise_factor * noise_sigma * dog_noise_gain).
double edge_floor(const Volume& v, const Field& response, const EdgeParams& params);

/// Full pipeline with the adaptive floor.
EdgeMap detect_edges(const Volume& v, const EdgeParams& params = {});

}  // namespace smc
