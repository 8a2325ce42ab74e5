// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "smc/backbone.hpp"

namespace smc {

struct LossWeights {
  double lambda_s1 = 0.1;  // source S^fuse terms
  double lambda_s2 = 0.1;  // source S^pt terms
  double lambda_1 = 0.1;   // target S^fuse terms
  double lambda_2 = 0.1;   // target S^pt terms
  double lambda_t = 0.01;
  double distill_ratio = 0.05;

  void validate() const;
};

/// Per-class label frequencies; entries >= floor and summing to 1.
using ClassFrequencies = std::vector<double>;

/// f_c = (1 - C*floor) * count_c / N + floor.
ClassFrequencies class_frequencies(const PointLabels& y, int classes, double floor = 1e-6);
std::vector<double> class_weights(const ClassFrequencies& f);  // 1 / sqrt(f_c)

/// Mean over classes present in y of the Lovasz extension of the Jaccard loss.
Tensor lovasz_softmax(const Tensor& probs, const PointLabels& y);
/// Discrete Jaccard-gradient sequence for a ground-truth indicator sorted by error.
std::vector<double> lovasz_grad(const std::vector<double>& gt_sorted);

/// mean_i -w_{y_i} log p_i(y_i) / sum_c w_c.
Tensor weighted_ce(const Tensor& probs, const PointLabels& y, const ClassFrequencies& f);
Tensor seg_loss(const Tensor& probs, const PointLabels& y, const ClassFrequencies& f);

/// Everything the objectives read from one forward pass.
struct LossInputs {
  Tensor p_pt, p_img;
  std::vector<Tensor> s_fuse, s_pt;
  Tensor l_xm;  // distillation loss over all points
};
LossInputs loss_inputs(const NetOutput& out);

struct SourceLoss {
  Tensor total;
  double seg_pt = 0, seg_img = 0;
  double seg_fuse = 0, seg_spt = 0;  // sums over scales, unweighted
  double seg = 0;                    // L_SEG_s
  double xm = 0;
  double value = 0;
};

struct PseudoLabels {
  PointLabels labels;
  std::vector<std::uint8_t> keep;
  std::size_t kept() const;
};

/// Hard argmax of P^pt (ties toward the lower class); rows with max < tau are dropped.
PseudoLabels pseudo_labels(const Tensor& p_pt, double tau = 0.0);

struct TargetLoss {
  Tensor total;
  double seg_img = 0, seg_fuse = 0, seg_spt = 0;
  double seg = 0;  // L_SEG_t
  double xm = 0;
  double value = 0;
  std::size_t kept = 0;
  bool all_filtered = false;
};

SourceLoss source_loss(const LossInputs& in, const PointLabels& y, const ClassFrequencies& f, const LossWeights& w);
/// Supervises P^img and the scale scores with pseudo-labels from P^pt. An empty
/// `f` means frequencies are taken from the pseudo-labels.
TargetLoss target_loss(const LossInputs& in, const LossWeights& w, double tau = 0.0, ClassFrequencies f = {});

}  // namespace smc
