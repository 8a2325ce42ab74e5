// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "smc/error.hpp"

namespace smc {

/// Grid extent in voxels: H (first axis), W (second, split axis), D (third).
struct Dims {
  int h = 0, w = 0, d = 0;

  std::size_t count() const { return static_cast<std::size_t>(h) * w * d; }
  int operator[](int axis) const { return axis == 0 ? h : axis == 1 ? w : d; }
  bool contains(int i, int j, int k) const { return i >= 0 && j >= 0 && k >= 0 && i < h && j < w && k < d; }
  bool operator==(const Dims&) const = default;
};

using Index3 = std::array<int, 3>;

/// Dense 3-D grid, row-major with the last axis fastest.
template <class T>
class Grid {
 public:
  Grid() = default;
  explicit Grid(Dims dims, T fill = T{}) : dims_(dims), data_(dims.count(), fill) {}
  Grid(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
    if (data_.size() != dims_.count()) throw ContractError("grid payload does not match dims");
  }

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dims_.w + j) * dims_.d + k;
  }
  Index3 coords(std::size_t idx) const {
    const int k = static_cast<int>(idx % dims_.d);
    const std::size_t r = idx / dims_.d;
    return {static_cast<int>(r / dims_.w), static_cast<int>(r % dims_.w), k};
  }

  T& operator()(int i, int j, int k) { return data_[index(i, j, k)]; }
  const T& operator()(int i, int j, int k) const { return data_[index(i, j, k)]; }
  T& operator[](std::size_t idx) { return data_[idx]; }
  const T& operator[](std::size_t idx) const { return data_[idx]; }

  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  Dims dims_;
  std::vector<T> data_;
};

/// Physical voxel size in mm along (H, W, D).
struct Spacing {
  double x = 1.0, y = 1.0, z = 1.0;
  double operator[](int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
  bool operator==(const Spacing&) const = default;
};

using Field = Grid<double>;

struct Volume {
  Grid<float> voxels;
  Spacing spacing;

  const Dims& dims() const { return voxels.dims(); }
  /// Throws ParameterError unless dims >= 8, spacing > 0 and values finite.
  void validate() const;
};

struct SegMask {
  Grid<std::uint8_t> labels;
  int num_classes = 2;
  Spacing spacing;

  const Dims& dims() const { return labels.dims(); }
  void validate() const;
  std::size_t foreground_count() const;
};

// Codec. `stem` names the pair "<stem>.json" + "<stem>.bin"; by convention
// stems end in ".svol" / ".smask" (e.g. "case_000/image.svol").
void write_volume(const Volume& v, const std::filesystem::path& stem);
Volume read_volume(const std::filesystem::path& stem);
void write_mask(const SegMask& m, const std::filesystem::path& stem);
SegMask read_mask(const std::filesystem::path& stem);

/// Clips to the [p_lo, p_hi] percentiles (linear interpolation between order
/// statistics) and maps affinely onto [0, 1]. A constant volume maps to zeros.
Volume normalize_intensity(const Volume& v, double p_lo = 0.5, double p_hi = 99.5);

/// Resamples to unit spacing; output dim = round(dim * spacing). Trilinear for
/// intensities, nearest neighbour for masks.
Volume resample_unit_spacing(const Volume& v);
SegMask resample_unit_spacing(const SegMask& m);

/// The two halves along the second axis and where they sit in the whole.
template <class T>
struct SidePair {
  T left;
  T right;
  int right_offset = 0;  // W index of right.voxel(.,0,.) in the original
};

SidePair<Volume> split_sides(const Volume& v);
SidePair<SegMask> split_sides(const SegMask& m);
Volume join_sides(const SidePair<Volume>& halves);
SegMask join_sides(const SidePair<SegMask>& halves);

}  // namespace smc
