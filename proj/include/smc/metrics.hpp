// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "smc/volume.hpp"

namespace smc {

/// Foreground is every nonzero label.
double dice(const SegMask& pred, const SegMask& gt);
/// Average symmetric surface distance in physical units. Throws NumericError
/// ("undefined distance") when either foreground is empty.
double assd(const SegMask& pred, const SegMask& gt, const Spacing& spacing);
double assd(const SegMask& pred, const SegMask& gt);  // uses gt.spacing
double bbox_iou(const SegMask& pred, const SegMask& gt);

/// Foreground voxels with a background or out-of-range 6-neighbour.
Grid<std::uint8_t> boundary_voxels(const Grid<std::uint8_t>& fg);
/// Exact Euclidean distance to the nearest nonzero voxel of `seeds`; +inf if none.
Field distance_transform(const Grid<std::uint8_t>& seeds, const Spacing& spacing);

struct Components {
  Grid<std::int32_t> labels;  // 0 = background, 1..count
  int count = 0;
  std::vector<std::int64_t> sizes;  // sizes[k - 1] for component k
};
/// connectivity 6 or 26.
Components connected_components(const Grid<std::uint8_t>& fg, int connectivity = 26);

struct SideMetrics {
  double dice = 0;
  std::optional<double> assd;  // empty when undefined
  double bbox_iou = 0;
};

SideMetrics evaluate_side(const SegMask& pred, const SegMask& gt);

struct CaseReport {
  std::string case_id;
  SideMetrics left, right;
  double mean_dice() const { return 0.5 * (left.dice + right.dice); }
};

struct EvalReport {
  std::vector<CaseReport> cases;

  double mean_dice() const;
  /// Mean over cases and sides with a defined ASSD; empty when none.
  std::optional<double> mean_assd() const;
  double mean_bbox_iou() const;
};

/// Table layout: per metric an L, R and Mean column; final row aggregates.
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
void write_report_json(const std::filesystem::path& path, const EvalReport& report);

}  // namespace smc
