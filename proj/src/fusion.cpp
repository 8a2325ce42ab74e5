// SPDX-License-Identifier: Apache-2.0
#include "smc/fusion.hpp"

#include "smc/error.hpp"

namespace smc {

namespace {

constexpr double kProbFloor = 1e-12;

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor enhance_image_feature(const Tensor& img, const Tensor& fuse, const Tensor& gate) {
  require_same(img, fuse, "enhance_image_feature");
  require_same(img, gate, "enhance_image_feature");
  return img + gate * fuse;
}

FusionBlock::FusionBlock(ParamSet& params, const std::string& name, std::size_t dim, std::size_t classes, Rng& rng)
    : pt2img(params, name + ".pt2img", dim, dim, dim, rng),
      mixer(params, name + ".mix", 2 * dim, dim, dim, rng),
      learner(params, name + ".learner", dim, dim, dim, rng),
      fuse_classifier(params, name + ".cls_fuse", dim, dim, classes, rng),
      point_classifier(params, name + ".cls_pt", dim, dim, classes, rng) {}

FusionOutputs FusionBlock::fuse_scale(const Tensor& img, const Tensor& pt) const {
  require_same(img, pt, "fuse_scale");
  if (img.rank() != 2 || img.cols() != pt2img.first.weight.dim(0)) {
    throw ContractError("fuse_scale: expected N x " + std::to_string(pt2img.first.weight.dim(0)) + " features, got " +
                        shape_str(img.shape()));
  }
  FusionOutputs o;
  o.pt2img = pt2img(pt);
  const Tensor parts[] = {img, o.pt2img};
  o.fuse = mixer(concat_cols(parts));
  o.gate = sigmoid(learner(o.fuse));
  o.fuse_e = enhance_image_feature(img, o.fuse, o.gate);
  o.pt_e = pt + o.pt2img;
  return o;
}

ScaleScores FusionBlock::scale_scores(const Tensor& fuse_e, const Tensor& pt_e) const {
  ScaleScores s;
  s.fuse_logits = fuse_classifier(fuse_e);
  s.pt_logits = point_classifier(pt_e);
  s.fuse = softmax_rows(s.fuse_logits);
  s.pt = softmax_rows(s.pt_logits);
  return s;
}

Tensor distill_loss(const std::vector<Tensor>& teacher, const std::vector<Tensor>& student) {
  if (teacher.size() != student.size() || teacher.empty()) {
    throw ContractError("distill_loss: need matching non-empty per-scale lists");
  }
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    require_same(teacher[l], student[l], "distill_loss");
    const Tensor t = teacher[l].detach();
    // KL(t || s) = sum_c t (log t - log s); the log t term is constant.
    const Tensor kl = t * (log_floor(t, kProbFloor) - log_floor(student[l], kProbFloor));
    total = total + scale(sum(kl), 1.0 / static_cast<double>(t.rows()));
  }
  return total;
}

Tensor distill_loss(const std::vector<Tensor>& teacher, const std::vector<Tensor>& student,
                    const std::vector<std::int64_t>& rows) {
  if (rows.empty()) return Tensor::scalar(0.0);
  std::vector<Tensor> t, s;
  for (std::size_t l = 0; l < teacher.size() && l < student.size(); ++l) {
    t.push_back(gather_rows(teacher[l], rows));
    s.push_back(gather_rows(student[l], rows));
  }
  return distill_loss(t, s);
}

}  // namespace smc
