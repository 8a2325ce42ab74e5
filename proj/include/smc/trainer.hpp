// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "smc/backbone.hpp"
#include "smc/dataset.hpp"
#include "smc/losses.hpp"
#include "smc/optim.hpp"

namespace smc {

enum class TrainMode { source_only, uda };
/// gradual: each face moves a tenth of its gap per validation.
/// jump: each face lands a tenth of its gap away from the predicted box.
enum class RoiRule { gradual, jump };

std::string to_string(TrainMode m);
TrainMode parse_mode(const std::string& s);
std::string to_string(RoiRule r);
RoiRule parse_roi_rule(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::uda;
  int max_iters = 3000;
  int val_interval = 250;
  int batch_source = 2;
  int batch_target = 4;
  double base_lr = 2e-4;
  std::vector<int> milestones{1800, 2500};
  double decay = 0.1;
  AdamOptions adam;
  std::uint64_t seed = 0;
  int points = 8192;
  LossWeights loss;
  double tau = 0.0;       // pseudo-label confidence cut
  int label_dilate = 1;   // source label lookup
  RoiRule roi_rule = RoiRule::gradual;
  int roi_divisor = 10;
  bool source_roi = true;  // shrink source ROIs toward the labelled organ too
  bool snapshots = true;   // write per-validation PLY predictions
  BackboneConfig backbone;
  EdgeParams edges;
  std::uint64_t init_seed = 1;  // parameter initialisation

  /// Throws ParameterError.
  void validate() const;
};

/// Desk-scale defaults.
TrainConfig desk_profile();
/// Full-length schedule: 15000 iterations, validation every 1000, decay at 9000 and 12500.
TrainConfig clinical_profile();
/// "desk" or "clinical".
TrainConfig profile(const std::string& name);

/// Piecewise-constant: base LR times decay^(milestones passed).
double lr_at(int iter, const TrainConfig& cfg);

struct RoiUpdate {
  Roi roi;
  std::optional<Roi> bbox;  // predicted foreground box
  bool no_foreground = false;
};

/// Shrinks `prev` toward the bounding box of the foreground points; every
/// face gap g >= 0 loses floor(g / divisor) (gradual) or all but that much
/// (jump). The result always contains the foreground box. Without foreground
/// points the ROI is returned unchanged and flagged.
RoiUpdate update_progressive_roi(const PointCloud& pc, const PointLabels& labels, const Roi& prev,
                                 RoiRule rule = RoiRule::gradual, int divisor = 10);

struct RoiEvent {
  int iter = 0;
  Roi roi;  // ROI in force after this event
  std::optional<Roi> bbox;
  bool no_foreground = false;
};

/// ROI of one side item and how it evolved.
struct RoiTrack {
  std::string domain;
  Roi roi;
  std::vector<RoiEvent> history;
};

/// Per-iteration record, batch means of every loss component.
struct StepLog {
  int iter = 0;  // 1-based index of the update
  double lr = 0;
  double loss = 0, loss_s = 0, loss_t = 0;
  double s_seg_pt = 0, s_seg_img = 0, s_seg_fuse = 0, s_seg_spt = 0, s_seg = 0, s_xm = 0;
  double t_seg_img = 0, t_seg_fuse = 0, t_seg_spt = 0, t_seg = 0, t_xm = 0;
  double t_kept = 0;
  int t_filtered = 0;  // target items with every pseudo-label dropped
};

/// One training item: a side with its sampled points (labels for source).
struct BatchItem {
  const SideItem* item = nullptr;
  PointCloud points;
  PointLabels labels;
};

/// Domain-alternate trainer: per update, a source batch under L_s and a
/// target batch under L_t, accumulated item by item into one Adam step.
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<SideItem> source, std::vector<SideItem> target);

  const TrainConfig& config() const { return cfg_; }
  SmcNet& net() { return net_; }
  const SmcNet& net() const { return net_; }
  int iteration() const { return iter_; }
  const std::map<std::string, RoiTrack>& rois() const { return rois_; }
  std::map<std::string, Roi> current_rois(const std::string& domain) const;
  const std::vector<SideItem>& source() const { return source_; }
  const std::vector<SideItem>& target() const { return target_; }

  /// Source and target batches for update `iter` (1-based). Each stream is
  /// seeded from (seed, iter) alone.
  std::vector<BatchItem> sample_source(int iter) const;
  std::vector<BatchItem> sample_target(int iter) const;

  /// Loss and gradients of the given batches, accumulated as batch means on
  /// the parameters (zeroed first). No update. Throws NumericError on a
  /// non-finite loss.
  StepLog accumulate(const std::vector<BatchItem>& source, const std::vector<BatchItem>& target);
  /// Samples, accumulates and applies one Adam update.
  StepLog train_step();

  struct Validation {
    int iter = 0;
    std::map<std::string, LabeledCloud> predictions;  // target P^pt by side key
  };
  /// Predicts every target side inside its ROI and updates all ROIs.
  Validation validate();

  /// Trains up to max_iters (or `stop_at`), validating every val_interval,
  /// and writes losses.csv, roi_history.json, checkpoints/ and snapshots/
  /// under `out`. Returns the number of snapshots written.
  int run(const std::filesystem::path& out, int stop_at = -1);

  /// Parameters, Adam state, iteration and ROIs.
  void save(const std::filesystem::path& path) const;
  void resume(const std::filesystem::path& checkpoint);

 private:
  void write_roi_history(const std::filesystem::path& path) const;

  TrainConfig cfg_;
  std::vector<SideItem> source_, target_;
  SmcNet net_;
  Adam adam_;
  int iter_ = 0;
  std::map<std::string, RoiTrack> rois_;
};

/// Label every edge voxel of a masked side for progressive-ROI updates.
LabeledCloud labelled_edges(const SideItem& item, const Roi& roi, int dilate);

nlohmann::json to_json(const Roi& r);
Roi roi_from_json(const nlohmann::json& j);
/// {"tracks": [{"key", "domain", "roi", "history": [...]}]}
nlohmann::json rois_to_json(const std::map<std::string, RoiTrack>& rois);
std::map<std::string, RoiTrack> rois_from_json(const nlohmann::json& j);

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t iter, std::uint64_t stream);

}  // namespace smc
