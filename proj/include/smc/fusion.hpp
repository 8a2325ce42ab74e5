// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "smc/nn.hpp"

namespace smc {

struct FusionOutputs {
  Tensor pt2img;  // F^_l^pt2img
  Tensor fuse;    // F^_l^fuse
  Tensor gate;    // sigmoid(MLP(F^_l^fuse))
  Tensor fuse_e;  // F^_l^fuseE
  Tensor pt_e;    // F^_l^ptE
};

struct ScaleScores {
  Tensor fuse_logits, pt_logits;
  Tensor fuse;  // S_l^fuse, rows sum to 1
  Tensor pt;    // S_l^pt
};

/// Image-enhanced feature: img + gate (.) fuse.
Tensor enhance_image_feature(const Tensor& img, const Tensor& fuse, const Tensor& gate);

/// One scale of fusion-then-distillation.
class FusionBlock {
 public:
  FusionBlock() = default;
  FusionBlock(ParamSet& params, const std::string& name, std::size_t dim, std::size_t classes, Rng& rng);

  FusionOutputs fuse_scale(const Tensor& img, const Tensor& pt) const;
  ScaleScores scale_scores(const Tensor& fuse_e, const Tensor& pt_e) const;

  Mlp pt2img;   // d -> d
  Mlp mixer;    // 2d -> d
  Mlp learner;  // d -> d, sigmoid gate
  Mlp fuse_classifier;  // d -> C
  Mlp point_classifier; // d -> C
};

/// Sum over scales of the point-averaged KL(S_fuse || S_pt). The teacher
/// S_fuse is detached so gradient only reaches the point path. Probabilities
/// are floored at 1e-12 inside the logarithms.
Tensor distill_loss(const std::vector<Tensor>& teacher, const std::vector<Tensor>& student);

/// Same objective on a subset of rows.
Tensor distill_loss(const std::vector<Tensor>& teacher, const std::vector<Tensor>& student,
                    const std::vector<std::int64_t>& rows);

}  // namespace smc
