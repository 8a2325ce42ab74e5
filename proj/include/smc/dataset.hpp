// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "smc/edges.hpp"
#include "smc/phantom.hpp"
#include "smc/points.hpp"

namespace smc {

/// One kidney side of a case, preprocessed for training and inference.
struct SideItem {
  std::string case_id;
  int side = 0;  // 0 = left half, 1 = right half
  Volume volume;  // intensity-normalised, unit spacing
  EdgeMap edges;
  std::optional<SegMask> mask;

  std::string key() const { return case_id + (side == 0 ? "/L" : "/R"); }
};

/// Unit-spacing resample, intensity normalisation, side split and edge
/// detection of one case. `mask` may be null.
std::vector<SideItem> prepare_case(const std::string& case_id, const Volume& volume, const SegMask* mask,
                                   const EdgeParams& edges);

/// Side items of every case of `domain` in manifest order. Masks are only
/// read when `with_masks` is set.
std::vector<SideItem> load_side_items(const DatasetManifest& manifest, const std::string& domain,
                                      const EdgeParams& edges, bool with_masks);

/// All edge voxels of `edges` inside `roi`, in raster order.
PointCloud edge_voxels(const EdgeMap& edges, const Roi& roi);

}  // namespace smc
