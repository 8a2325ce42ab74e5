// SPDX-License-Identifier: Apache-2.0
#include "smc/losses.hpp"

#include <cmath>

#include "smc/error.hpp"

namespace smc {

namespace {

constexpr double kLogFloor = 1e-12;

void check_probs(const Tensor& probs, const PointLabels& y, const char* what) {
  if (probs.rank() != 2) throw ContractError(std::string(what) + ": expected N x C probabilities");
  if (probs.rows() == 0) throw ContractError(std::string(what) + ": empty point set");
  if (y.size() != probs.rows()) throw ContractError(std::string(what) + ": label count differs from rows");
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= probs.cols()) {
      throw ContractError(std::string(what) + ": label " + std::to_string(label) + " outside class range");
    }
  }
}

Tensor column(const Tensor& x, std::size_t c) {
  std::vector<double> e(x.cols(), 0.0);
  e[c] = 1.0;
  return matmul(x, Tensor::from({x.cols(), 1}, std::move(e)));
}

Tensor rows_of(const Tensor& x, const std::vector<std::int64_t>& rows) { return gather_rows(x, rows); }

}  // namespace

void LossWeights::validate() const {
  for (double v : {lambda_s1, lambda_s2, lambda_1, lambda_2, lambda_t, distill_ratio}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("loss weights must be finite and >= 0");
  }
}

ClassFrequencies class_frequencies(const PointLabels& y, int classes, double floor) {
  if (classes < 1) throw ParameterError("class_frequencies: classes must be >= 1");
  if (!(floor >= 0.0) || floor * classes >= 1.0) throw ParameterError("class_frequencies: floor too large");
  ClassFrequencies f(classes, 0.0);
  if (y.empty()) {
    f.assign(classes, 1.0 / classes);
    return f;
  }
  for (int label : y) {
    if (label < 0 || label >= classes) throw ContractError("class_frequencies: label outside class range");
    f[label] += 1.0;
  }
  const double n = static_cast<double>(y.size());
  for (auto& v : f) v = (1.0 - classes * floor) * v / n + floor;
  return f;
}

std::vector<double> class_weights(const ClassFrequencies& f) {
  std::vector<double> w(f.size());
  for (std::size_t c = 0; c < f.size(); ++c) {
    if (!(f[c] > 0.0)) throw ParameterError("class_weights: frequencies must be positive");
    w[c] = 1.0 / std::sqrt(f[c]);
  }
  return w;
}

std::vector<double> lovasz_grad(const std::vector<double>& gt_sorted) {
  double total = 0.0;
  for (double g : gt_sorted) total += g;
  std::vector<double> grad(gt_sorted.size());
  double cum_gt = 0.0, cum_non = 0.0, prev = 0.0;
  for (std::size_t k = 0; k < gt_sorted.size(); ++k) {
    cum_gt += gt_sorted[k];
    cum_non += 1.0 - gt_sorted[k];
    const double jaccard = 1.0 - (total - cum_gt) / (total + cum_non);
    grad[k] = jaccard - prev;
    prev = jaccard;
  }
  return grad;
}

Tensor lovasz_softmax(const Tensor& probs, const PointLabels& y) {
  check_probs(probs, y, "lovasz_softmax");
  const std::size_t n = probs.rows();
  Tensor total = Tensor::scalar(0.0);
  int present = 0;
  for (std::size_t c = 0; c < probs.cols(); ++c) {
    std::vector<std::uint8_t> is_gt(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      is_gt[i] = y[i] == static_cast<int>(c);
      any = any || is_gt[i];
    }
    if (!any) continue;
    ++present;
    const Tensor pc = column(probs, c);
    const Tensor errors = select(is_gt, add_scalar(scale(pc, -1.0), 1.0), pc);
    const SortResult sorted = sort_desc(errors);
    std::vector<double> gt_sorted(n);
    for (std::size_t k = 0; k < n; ++k) gt_sorted[k] = is_gt[sorted.perm[k]];
    const Tensor g = Tensor::from(sorted.values.shape(), lovasz_grad(gt_sorted));
    total = total + sum(sorted.values * g);
  }
  return scale(total, 1.0 / present);
}

Tensor weighted_ce(const Tensor& probs, const PointLabels& y, const ClassFrequencies& f) {
  check_probs(probs, y, "weighted_ce");
  if (f.size() != probs.cols()) throw ContractError("weighted_ce: frequency vector length differs from classes");
  const auto w = class_weights(f);
  double wsum = 0.0;
  for (double v : w) wsum += v;
  const std::size_t n = probs.rows(), c = probs.cols();
  std::vector<std::int64_t> at(n);
  std::vector<double> coef(n);
  for (std::size_t i = 0; i < n; ++i) {
    at[i] = static_cast<std::int64_t>(i * c + y[i]);
    coef[i] = -w[y[i]] / wsum;
  }
  const Tensor picked = gather_rows(reshape(probs, {n * c, 1}), at);
  return mean(log_floor(picked, kLogFloor) * Tensor::from({n, 1}, std::move(coef)));
}

Tensor seg_loss(const Tensor& probs, const PointLabels& y, const ClassFrequencies& f) {
  return lovasz_softmax(probs, y) + weighted_ce(probs, y, f);
}

LossInputs loss_inputs(const NetOutput& out) {
  LossInputs in;
  in.p_pt = out.p_pt;
  in.p_img = out.p_img;
  for (const auto& s : out.scores) {
    in.s_fuse.push_back(s.fuse);
    in.s_pt.push_back(s.pt);
  }
  in.l_xm = distill_loss(in.s_fuse, in.s_pt);
  return in;
}

SourceLoss source_loss(const LossInputs& in, const PointLabels& y, const ClassFrequencies& f, const LossWeights& w) {
  if (!in.p_pt.defined() || !in.p_img.defined() || !in.l_xm.defined() || in.s_fuse.empty() ||
      in.s_fuse.size() != in.s_pt.size()) {
    throw ContractError("source_loss: missing output component");
  }
  SourceLoss r;
  const Tensor pt = seg_loss(in.p_pt, y, f);
  const Tensor img = seg_loss(in.p_img, y, f);
  Tensor fuse = Tensor::scalar(0.0), spt = Tensor::scalar(0.0);
  for (std::size_t l = 0; l < in.s_fuse.size(); ++l) {
    fuse = fuse + seg_loss(in.s_fuse[l], y, f);
    spt = spt + seg_loss(in.s_pt[l], y, f);
  }
  const Tensor seg = pt + img + w.lambda_s1 * fuse + w.lambda_s2 * spt;
  r.total = seg + w.distill_ratio * in.l_xm;
  r.seg_pt = pt.item();
  r.seg_img = img.item();
  r.seg_fuse = fuse.item();
  r.seg_spt = spt.item();
  r.seg = seg.item();
  r.xm = in.l_xm.item();
  r.value = r.total.item();
  return r;
}

std::size_t PseudoLabels::kept() const {
  std::size_t k = 0;
  for (auto v : keep) k += v;
  return k;
}

PseudoLabels pseudo_labels(const Tensor& p_pt, double tau) {
  if (p_pt.rank() != 2) throw ContractError("pseudo_labels: expected N x C probabilities");
  PseudoLabels out;
  const std::size_t n = p_pt.rows(), c = p_pt.cols();
  const auto data = p_pt.data();
  out.labels.resize(n);
  out.keep.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k) {
      if (data[i * c + k] > data[i * c + best]) best = k;
    }
    out.labels[i] = static_cast<int>(best);
    out.keep[i] = data[i * c + best] >= tau;
  }
  return out;
}

TargetLoss target_loss(const LossInputs& in, const LossWeights& w, double tau, ClassFrequencies f) {
  if (!in.p_pt.defined() || !in.p_img.defined() || in.s_fuse.empty() || in.s_fuse.size() != in.s_pt.size()) {
    throw ContractError("target_loss: missing output component");
  }
  TargetLoss r;
  if (w.lambda_t == 0.0) {
    r.total = Tensor::scalar(0.0);
    r.kept = in.p_pt.rows();
    return r;
  }
  const PseudoLabels pl = pseudo_labels(in.p_pt, tau);
  r.kept = pl.kept();
  if (r.kept == 0) {
    r.total = Tensor::scalar(0.0);
    r.all_filtered = true;
    return r;
  }
  const bool subset = r.kept < pl.labels.size();
  std::vector<std::int64_t> rows;
  PointLabels y;
  for (std::size_t i = 0; i < pl.labels.size(); ++i) {
    if (!pl.keep[i]) continue;
    rows.push_back(static_cast<std::int64_t>(i));
    y.push_back(pl.labels[i]);
  }
  auto pick = [&](const Tensor& t) { return subset ? rows_of(t, rows) : t; };
  if (f.empty()) f = class_frequencies(y, static_cast<int>(in.p_pt.cols()));

  const Tensor img = seg_loss(pick(in.p_img), y, f);
  Tensor fuse = Tensor::scalar(0.0), spt = Tensor::scalar(0.0);
  for (std::size_t l = 0; l < in.s_fuse.size(); ++l) {
    fuse = fuse + seg_loss(pick(in.s_fuse[l]), y, f);
    spt = spt + seg_loss(pick(in.s_pt[l]), y, f);
  }
  const Tensor xm = subset || !in.l_xm.defined() ? distill_loss(in.s_fuse, in.s_pt, rows) : in.l_xm;
  const Tensor seg = img + w.lambda_1 * fuse + w.lambda_2 * spt;
  r.total = w.lambda_t * (seg + w.distill_ratio * xm);
  r.seg_img = img.item();
  r.seg_fuse = fuse.item();
  r.seg_spt = spt.item();
  r.seg = seg.item();
  r.xm = xm.item();
  r.value = r.total.item();
  return r;
}

}  // namespace smc
