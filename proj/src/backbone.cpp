// SPDX-License-Identifier: Apache-2.0
#include "smc/backbone.hpp"

#include <algorithm>

namespace smc {

void BackboneConfig::validate() const {
  if (scales < 2) throw ParameterError("backbone: scales must be >= 2");
  if (image_channels.size() != static_cast<std::size_t>(scales) ||
      point_channels.size() != static_cast<std::size_t>(scales)) {
    throw ParameterError("backbone: need one image and one point channel count per scale");
  }
  auto positive = [](int c) { return c > 0; };
  if (!std::all_of(image_channels.begin(), image_channels.end(), positive) ||
      !std::all_of(point_channels.begin(), point_channels.end(), positive)) {
    throw ParameterError("backbone: channel counts must be positive");
  }
  if (decoder_dim < 1) throw ParameterError("backbone: decoder_dim must be >= 1");
  if (classes < 2) throw ParameterError("backbone: classes must be >= 2");
  if (image_blocks < 0) throw ParameterError("backbone: image_blocks must be >= 0");
  if (image_input_stride < 1) throw ParameterError("backbone: image_input_stride must be >= 1");
}

Tensor volume_tensor(const Volume& v, int stride) {
  const Dims d = v.dims();
  if (stride < 1 || d.h % stride || d.w % stride || d.d % stride) {
    throw ContractError("volume_tensor: dims not divisible by stride " + std::to_string(stride));
  }
  const int h = d.h / stride, w = d.w / stride, dd = d.d / stride;
  std::vector<double> out(static_cast<std::size_t>(h) * w * dd, 0.0);
  const double norm = 1.0 / (static_cast<double>(stride) * stride * stride);
  for (int i = 0; i < d.h; ++i) {
    for (int j = 0; j < d.w; ++j) {
      for (int k = 0; k < d.d; ++k) {
        out[(static_cast<std::size_t>(i / stride) * w + j / stride) * dd + k / stride] += norm * v.voxels(i, j, k);
      }
    }
  }
  return Tensor::from({static_cast<std::size_t>(h), static_cast<std::size_t>(w), static_cast<std::size_t>(dd), 1},
                      std::move(out));
}

namespace {

Tensor flat(const Tensor& x) { return reshape(x, {x.numel() / x.dim(3), x.dim(3)}); }

Tensor apply_rows(const Linear& lin, const Tensor& grid) {
  Shape s = grid.shape();
  Tensor y = lin(flat(grid));
  s[3] = y.cols();
  return reshape(y, s);
}

}  // namespace

SmcNet::SmcNet(const BackboneConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  const auto d = static_cast<std::size_t>(cfg_.decoder_dim);
  const auto classes = static_cast<std::size_t>(cfg_.classes);
  const int L = cfg_.scales;

  std::size_t in = 1;
  for (int l = 0; l < L; ++l) {
    const std::string tag = "img.s" + std::to_string(l);
    const auto c = static_cast<std::size_t>(cfg_.image_channels[l]);
    ImageScale s;
    s.entry = Conv3(params_, tag + ".entry", in, c, rng, l == 0 ? 1 : 2);
    for (int b = 0; b < cfg_.image_blocks; ++b) {
      const std::string bt = tag + ".block" + std::to_string(b);
      s.blocks.emplace_back(Conv3(params_, bt + ".c1", c, c, rng), Conv3(params_, bt + ".c2", c, c, rng));
    }
    s.decode = Linear(params_, tag + ".decode", c, d, rng);
    image_.push_back(std::move(s));
    in = c;
  }

  in = 3;
  for (int l = 0; l < L; ++l) {
    const std::string tag = "pt.s" + std::to_string(l);
    const auto p = static_cast<std::size_t>(cfg_.point_channels[l]);
    const std::size_t mid = std::max<std::size_t>(1, p / 2);
    PointScale s;
    s.entry = Linear(params_, tag + ".entry", in, p, rng);
    s.conv = Conv3(params_, tag + ".conv", p, p, rng);
    s.reduce = Linear(params_, tag + ".reduce", p, mid, rng);
    s.mid = Conv3(params_, tag + ".mid", mid, mid, rng);
    s.expand = Linear(params_, tag + ".expand", mid, p, rng);
    s.project = Linear(params_, tag + ".project", p, d, rng);
    point_.push_back(std::move(s));
    in = p;
  }

  for (int l = 0; l < L; ++l) fusion_.emplace_back(params_, "fusion.s" + std::to_string(l), d, classes, rng);
  cls_img_ = Linear(params_, "cls.img", d * L, classes, rng);
  cls_pt_ = Linear(params_, "cls.pt", d * L, classes, rng);
}

ImageFeatures SmcNet::image_encode_decode(const Volume& patch) const {
  const Dims dims = patch.dims();
  const int unit = cfg_.image_input_stride << (cfg_.scales - 1);
  if (dims.h % unit || dims.w % unit || dims.d % unit) {
    throw ContractError("image_encode_decode: patch dims must be divisible by " + std::to_string(unit) +
                        " (padding contract)");
  }
  ImageFeatures f;
  Tensor x = volume_tensor(patch, cfg_.image_input_stride);
  int stride = cfg_.image_input_stride;
  for (int l = 0; l < cfg_.scales; ++l) {
    const ImageScale& s = image_[l];
    if (l > 0) stride *= 2;
    x = relu(s.entry.dense(x));
    for (const auto& [c1, c2] : s.blocks) x = relu(x + c2.dense(relu(c1.dense(x))));
    f.dense.push_back(x);
    f.decoded.push_back(apply_rows(s.decode, x));
    f.strides.push_back(stride);
  }
  return f;
}

Tensor SmcNet::upscaled_image_features(const ImageFeatures& f, int scale) const {
  const Tensor& coarse = f.decoded.at(scale);
  const int stride = f.strides.at(scale);
  const auto hs = coarse.dim(0), ws = coarse.dim(1), ds = coarse.dim(2);
  const std::size_t H = hs * stride, W = ws * stride, D = ds * stride;
  std::vector<std::int64_t> rows;
  rows.reserve(H * W * D);
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      for (std::size_t k = 0; k < D; ++k) {
        rows.push_back(static_cast<std::int64_t>(((i / stride) * ws + j / stride) * ds + k / stride));
      }
    }
  }
  return reshape(gather_rows(flat(coarse), rows), {H, W, D, coarse.dim(3)});
}

std::vector<Tensor> SmcNet::point_encode(const PointCloud& pc) const {
  if (pc.size() == 0) throw ContractError("point_encode: empty point cloud");
  std::vector<Tensor> out;
  SparseGrid prev;
  Tensor x;
  for (int l = 0; l < cfg_.scales; ++l) {
    const PointScale& s = point_[l];
    SparseGrid g = voxelize_points(pc, 1 << l);
    if (l == 0) {
      x = relu(s.entry(g.feat));
    } else {
      // Mean-pool the finer active set into its parents.
      const auto parent = parent_rows(prev, g);
      std::vector<double> count(g.rows(), 0.0);
      for (auto r : parent) count[r] += 1.0;
      std::vector<double> inv(g.rows() * x.cols());
      for (std::size_t r = 0; r < g.rows(); ++r) {
        std::fill_n(inv.begin() + r * x.cols(), x.cols(), 1.0 / count[r]);
      }
      Tensor pooled = scatter_add_rows(x, parent, g.rows()) * Tensor::from({g.rows(), x.cols()}, std::move(inv));
      x = relu(s.entry(pooled));
    }
    const auto nbr = g.neighbors();
    x = relu(s.conv.sparse(x, nbr));
    x = relu(x + s.expand(relu(s.mid.sparse(relu(s.reduce(x)), nbr))));
    out.push_back(nn_upscale(g, relu(s.project(x)), pc));
    prev = std::move(g);
  }
  return out;
}

std::pair<Tensor, Tensor> SmcNet::classify_final(const ScalePyramid& pyramid) const {
  if (pyramid.point_img.size() != static_cast<std::size_t>(cfg_.scales) ||
      pyramid.point_pt.size() != static_cast<std::size_t>(cfg_.scales)) {
    throw ContractError("classify_final: per-point features missing for some scale");
  }
  return {softmax_rows(cls_img_(concat_cols(pyramid.point_img))),
          softmax_rows(cls_pt_(concat_cols(pyramid.point_pt)))};
}

NetOutput SmcNet::forward(const Volume& patch, const PointCloud& pc) const {
  if (!(patch.dims() == pc.source_dims)) throw ContractError("forward: point cloud was sampled from other dims");
  NetOutput out;
  out.pyramid.image = image_encode_decode(patch);
  for (int l = 0; l < cfg_.scales; ++l) {
    out.pyramid.point_img.push_back(
        gather_point_features(out.pyramid.image.decoded[l], pc, out.pyramid.image.strides[l]));
  }
  out.pyramid.point_pt = point_encode(pc);
  for (int l = 0; l < cfg_.scales; ++l) {
    out.fusion.push_back(fusion_[l].fuse_scale(out.pyramid.point_img[l], out.pyramid.point_pt[l]));
    out.scores.push_back(fusion_[l].scale_scores(out.fusion[l].fuse_e, out.fusion[l].pt_e));
  }
  std::tie(out.p_img, out.p_pt) = classify_final(out.pyramid);
  return out;
}

Tensor SmcNet::predict_points(const PointCloud& pc) const {
  return softmax_rows(cls_pt_(concat_cols(point_encode(pc))));
}

Tensor SmcNet::predict_image(const ImageFeatures& f, const PointCloud& pc) const {
  std::vector<Tensor> rows;
  for (int l = 0; l < cfg_.scales; ++l) rows.push_back(gather_point_features(f.decoded[l], pc, f.strides[l]));
  return softmax_rows(cls_img_(concat_cols(rows)));
}

}  // namespace smc
