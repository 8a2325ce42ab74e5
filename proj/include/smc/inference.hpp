// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smc/backbone.hpp"
#include "smc/dataset.hpp"
#include "smc/metrics.hpp"
#include "smc/reconstruct.hpp"

namespace smc {

/// Which final prediction is read out per point.
enum class Readout { point, image };

std::string to_string(Readout r);
Readout parse_readout(const std::string& s);

struct InferenceOptions {
  /// Edge voxels of the ROI are shuffled and split into near-equal chunks of
  /// at most this many points, matching the training sample size.
  std::size_t chunk = 8192;
  std::uint64_t seed = 0;
  Readout readout = Readout::point;
  ReconstructOptions reconstruct;
};

/// Labels every edge voxel of `item` inside `roi` (argmax, ties to the lower
/// class). Points come back in raster order.
LabeledCloud predict_side(const SmcNet& net, const SideItem& item, const Roi& roi, const InferenceOptions& opt);

struct SidePrediction {
  LabeledCloud cloud;
  SegMask mask;  // all background when reconstruction was impossible
  std::optional<Reconstruction> recon;
  std::string failure;  // why `recon` is empty
};

/// Foreground points -> alpha shape -> filled mask on the side grid.
SidePrediction reconstruct_side(LabeledCloud cloud, const InferenceOptions& opt);

struct EvalRun {
  EvalReport report;
  std::map<std::string, SidePrediction> sides;  // by SideItem::key()
};

/// Predicts, reconstructs and scores every item (all must carry masks and
/// come in left/right pairs per case). `rois` maps SideItem::key() to the
/// sampling box; missing keys use the full side.
EvalRun evaluate_items(const SmcNet& net, const std::vector<SideItem>& items, const InferenceOptions& opt,
                       const std::map<std::string, Roi>& rois = {});

}  // namespace smc
