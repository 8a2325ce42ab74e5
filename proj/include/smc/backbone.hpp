// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "smc/fusion.hpp"
#include "smc/nn.hpp"
#include "smc/points.hpp"
#include "smc/volume.hpp"

namespace smc {

struct BackboneConfig {
  int scales = 4;
  std::vector<int> image_channels{8, 16, 32, 64};
  std::vector<int> point_channels{8, 16, 32, 64};
  int decoder_dim = 16;
  int classes = 2;
  int image_blocks = 2;  // residual blocks per image scale
  /// Average-pooling factor applied to the volume before the image encoder.
  int image_input_stride = 1;

  /// Throws ParameterError on invalid combinations.
  void validate() const;
};

/// Dense image encoder outputs.
struct ImageFeatures {
  std::vector<Tensor> dense;    // F_l^img: [H_l, W_l, D_l, c_l]
  std::vector<Tensor> decoded;  // 1x1x1-decoded, still at scale l: [H_l, W_l, D_l, d]
  std::vector<int> strides;     // voxel stride of scale l w.r.t. the original volume
};

/// Per-scale features of both branches, all per-point matrices N x d.
struct ScalePyramid {
  ImageFeatures image;
  std::vector<Tensor> point_img;  // F^_l^img (point-to-voxel mapped)
  std::vector<Tensor> point_pt;   // F^_l^pt
};

struct NetOutput {
  ScalePyramid pyramid;
  std::vector<FusionOutputs> fusion;
  std::vector<ScaleScores> scores;
  Tensor p_img;  // N x C
  Tensor p_pt;   // N x C
};

/// Dual-branch network: residual 3-D CNN on the image, submanifold sparse
/// encoder on the edge points, per-scale fusion blocks, and final classifiers.
class SmcNet {
 public:
  SmcNet(const BackboneConfig& cfg, std::uint64_t init_seed);

  const BackboneConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  ImageFeatures image_encode_decode(const Volume& patch) const;
  /// Full-resolution nearest upsampling of decoded scale l (F~_l^img).
  Tensor upscaled_image_features(const ImageFeatures& f, int scale) const;
  std::vector<Tensor> point_encode(const PointCloud& pc) const;

  /// (P^img, P^pt) from the concatenated per-point features.
  std::pair<Tensor, Tensor> classify_final(const ScalePyramid& pyramid) const;

  NetOutput forward(const Volume& patch, const PointCloud& pc) const;
  /// P^pt alone; never touches image data.
  Tensor predict_points(const PointCloud& pc) const;
  /// P^img for `pc` from already encoded image features.
  Tensor predict_image(const ImageFeatures& f, const PointCloud& pc) const;

  const FusionBlock& fusion(int scale) const { return fusion_[scale]; }
  const Linear& image_classifier() const { return cls_img_; }
  const Linear& point_classifier() const { return cls_pt_; }

 private:
  struct ImageScale {
    Conv3 entry;  // stem (scale 0) or stride-2 downsampling conv
    std::vector<std::pair<Conv3, Conv3>> blocks;
    Linear decode;
  };
  struct PointScale {
    Linear entry;  // input projection / after pooling
    Conv3 conv;
    Linear reduce;
    Conv3 mid;
    Linear expand;
    Linear project;  // p_l -> d
  };

  BackboneConfig cfg_;
  ParamSet params_;
  std::vector<ImageScale> image_;
  std::vector<PointScale> point_;
  std::vector<FusionBlock> fusion_;
  Linear cls_img_, cls_pt_;
};

/// Channels-last single-channel image tensor, average pooled by `stride`.
Tensor volume_tensor(const Volume& v, int stride);

}  // namespace smc
