// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "../common/oracles.hpp"
#include "smc/losses.hpp"

using namespace smc;
using smc::testing::Rng;

namespace {

Tensor one_hot(const PointLabels& y, int classes) {
  std::vector<double> v(y.size() * classes, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) v[i * classes + y[i]] = 1.0;
  return Tensor::from({y.size(), static_cast<std::size_t>(classes)}, v);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

LossInputs random_inputs(std::size_t n, int scales, Rng& rng) {
  LossInputs in;
  in.p_pt = smc::testing::random_probs(n, 2, rng);
  in.p_img = smc::testing::random_probs(n, 2, rng);
  for (int l = 0; l < scales; ++l) {
    in.s_fuse.push_back(smc::testing::random_probs(n, 2, rng));
    in.s_pt.push_back(smc::testing::random_probs(n, 2, rng));
  }
  in.l_xm = distill_loss(in.s_fuse, in.s_pt);
  return in;
}

PointLabels random_labels(std::size_t n, Rng& rng) {
  PointLabels y(n);
  std::bernoulli_distribution b(0.4);
  for (auto& v : y) v = b(rng);
  y[0] = 0;
  y[1] = 1;
  return y;
}

}  // namespace

TEST(Lovasz, PerfectPredictionIsZero) {
  const PointLabels y{0, 1, 1, 0, 1};
  EXPECT_EQ(lovasz_softmax(one_hot(y, 2), y).item(), 0.0);
}

TEST(Lovasz, EqualsOneMinusIouOnEveryHardPattern) {
  // Binary predictions over 6 points: the extension is exact at vertices.
  const PointLabels y{0, 1, 1, 0, 1, 0};
  for (int bits = 0; bits < 64; ++bits) {
    PointLabels pred(6);
    for (int i = 0; i < 6; ++i) pred[i] = (bits >> i) & 1;
    const double got = lovasz_softmax(one_hot(pred, 2), y).item();
    EXPECT_NEAR(got, smc::testing::hard_jaccard_loss(pred, y, 2), 1e-12) << bits;
  }
}

TEST(Lovasz, SinglePoint) {
  const PointLabels y{1};
  EXPECT_NEAR(lovasz_softmax(Tensor::from({1, 2}, {0.7, 0.3}), y).item(), 0.7, 1e-15);
}

TEST(Lovasz, MatchesSetReferenceOnFractionalInputs) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + trial % 9;
    const int c = 2 + trial % 2;
    const Tensor p = smc::testing::random_probs(n, c, rng);
    PointLabels y(n);
    std::uniform_int_distribution<int> lab(0, c - 1);
    for (auto& v : y) v = lab(rng);
    EXPECT_NEAR(lovasz_softmax(p, y).item(), smc::testing::lovasz_reference(values(p), y, c), 1e-12);
  }
}

TEST(Lovasz, GradOfSortedGroundTruth) {
  // Increments of the Jaccard loss along the prefix order telescope to its final value.
  const std::vector<double> gt{1, 0, 1, 1, 0};
  const auto g = lovasz_grad(gt);
  EXPECT_NEAR(std::accumulate(g.begin(), g.end(), 0.0), 1.0, 1e-15);
  EXPECT_NEAR(g[0], 1.0 / 3.0, 1e-15);
}

TEST(Lovasz, RejectsBadLabels) {
  EXPECT_THROW(lovasz_softmax(Tensor::from({1, 2}, {0.5, 0.5}), {2}), ContractError);
  EXPECT_THROW(lovasz_softmax(Tensor::from({2, 2}, {0.5, 0.5, 0.5, 0.5}), {0}), ContractError);
}

TEST(ClassWeights, InverseSquareRootOfFrequency) {
  const PointLabels y{0, 1, 1, 1};
  const auto f = class_frequencies(y, 2, 0.0);
  EXPECT_DOUBLE_EQ(f[0], 0.25);
  EXPECT_DOUBLE_EQ(f[1], 0.75);
  const auto w = class_weights(f);
  EXPECT_DOUBLE_EQ(w[0], 2.0);
  EXPECT_NEAR(w[1], 2.0 / std::sqrt(3.0), 1e-15);
  // An absent class is floored rather than dividing by zero.
  const auto g = class_frequencies({1, 1}, 2);
  EXPECT_GT(g[0], 0.0);
  EXPECT_TRUE(std::isfinite(class_weights(g)[0]));
}

TEST(WeightedCe, UniformPredictionOnBalancedLabels) {
  const PointLabels y{0, 1, 0, 1};
  const auto f = class_frequencies({0, 1, 1, 1}, 2, 0.0);
  EXPECT_NEAR(weighted_ce(Tensor::full({4, 2}, 0.5), y, f).item(), std::log(2.0) / 2.0, 1e-15);
}

TEST(WeightedCe, PerfectPredictionIsZero) {
  const PointLabels y{0, 1, 1};
  EXPECT_EQ(weighted_ce(one_hot(y, 2), y, class_frequencies(y, 2)).item(), 0.0);
}

TEST(WeightedCe, InvariantToFrequencyScalingAndPermutation) {
  Rng rng(2);
  const std::size_t n = 20;
  const Tensor p = smc::testing::random_probs(n, 2, rng);
  const PointLabels y = random_labels(n, rng);
  const ClassFrequencies f{0.3, 0.7}, g{0.6, 1.4};
  const double a = weighted_ce(p, y, f).item();
  EXPECT_NEAR(weighted_ce(p, y, g).item(), a, 1e-14);

  std::vector<std::int64_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  PointLabels yp(n);
  for (std::size_t i = 0; i < n; ++i) yp[i] = y[perm[i]];
  EXPECT_NEAR(weighted_ce(gather_rows(p, perm), yp, f).item(), a, 1e-14);
  EXPECT_NEAR(lovasz_softmax(gather_rows(p, perm), yp).item(), lovasz_softmax(p, y).item(), 1e-14);
}

TEST(SegLoss, IsSumOfTermsAndMonotoneTowardsTruth) {
  const PointLabels y{0, 1, 1, 0};
  const auto f = class_frequencies(y, 2);
  double prev = 1e9;
  for (double q : {0.5, 0.6, 0.7, 0.8, 0.9, 0.99}) {
    std::vector<double> v;
    for (int label : y) {
      v.push_back(label == 0 ? q : 1 - q);
      v.push_back(label == 0 ? 1 - q : q);
    }
    const Tensor p = Tensor::from({4, 2}, v);
    const double s = seg_loss(p, y, f).item();
    EXPECT_NEAR(s, lovasz_softmax(p, y).item() + weighted_ce(p, y, f).item(), 1e-15);
    EXPECT_LT(s, prev);
    prev = s;
  }
}

TEST(SourceLoss, RecomposesFromTerms) {
  Rng rng(3);
  const LossInputs in = random_inputs(16, 3, rng);
  const PointLabels y = random_labels(16, rng);
  const auto f = class_frequencies(y, 2);
  LossWeights w;
  w.lambda_s1 = 0.3;
  w.lambda_s2 = 0.2;
  w.distill_ratio = 0.7;
  const SourceLoss r = source_loss(in, y, f, w);
  double fuse = 0.0, spt = 0.0;
  for (int l = 0; l < 3; ++l) {
    fuse += seg_loss(in.s_fuse[l], y, f).item();
    spt += seg_loss(in.s_pt[l], y, f).item();
  }
  EXPECT_NEAR(r.seg_pt, seg_loss(in.p_pt, y, f).item(), 1e-14);
  EXPECT_NEAR(r.seg_img, seg_loss(in.p_img, y, f).item(), 1e-14);
  EXPECT_NEAR(r.seg_fuse, fuse, 1e-13);
  EXPECT_NEAR(r.seg_spt, spt, 1e-13);
  EXPECT_NEAR(r.seg, r.seg_pt + r.seg_img + 0.3 * fuse + 0.2 * spt, 1e-13);
  EXPECT_NEAR(r.value, r.seg + 0.7 * smc::testing::kl_reference(values(in.s_fuse[0]), values(in.s_pt[0]), 2) +
                           0.7 * smc::testing::kl_reference(values(in.s_fuse[1]), values(in.s_pt[1]), 2) +
                           0.7 * smc::testing::kl_reference(values(in.s_fuse[2]), values(in.s_pt[2]), 2),
              1e-12);
  EXPECT_EQ(r.total.item(), r.value);
}

TEST(TargetLoss, RecomposesWithPseudoLabelsFromPointBranch) {
  Rng rng(4);
  const LossInputs in = random_inputs(12, 2, rng);
  LossWeights w;
  w.lambda_t = 0.5;
  const PseudoLabels pl = pseudo_labels(in.p_pt);
  const auto f = class_frequencies(pl.labels, 2);
  const TargetLoss r = target_loss(in, w);
  double fuse = 0.0, spt = 0.0;
  for (int l = 0; l < 2; ++l) {
    fuse += seg_loss(in.s_fuse[l], pl.labels, f).item();
    spt += seg_loss(in.s_pt[l], pl.labels, f).item();
  }
  EXPECT_EQ(r.kept, 12u);
  EXPECT_FALSE(r.all_filtered);
  EXPECT_NEAR(r.seg_img, seg_loss(in.p_img, pl.labels, f).item(), 1e-14);
  EXPECT_NEAR(r.seg, r.seg_img + 0.1 * fuse + 0.1 * spt, 1e-13);
  EXPECT_NEAR(r.value, 0.5 * (r.seg + 0.05 * in.l_xm.item()), 1e-13);
}

TEST(TargetLoss, ZeroWeightGivesExactZero) {
  Rng rng(5);
  const LossInputs in = random_inputs(10, 2, rng);
  LossWeights w;
  w.lambda_t = 0.0;
  const TargetLoss r = target_loss(in, w);
  EXPECT_EQ(r.total.item(), 0.0);
  EXPECT_EQ(r.value, 0.0);
}

TEST(TargetLoss, AllFilteredIsFlaggedAndZero) {
  Rng rng(6);
  LossInputs in = random_inputs(6, 1, rng);
  in.p_pt = Tensor::full({6, 2}, 0.5);
  const TargetLoss r = target_loss(in, LossWeights{}, 0.9);
  EXPECT_TRUE(r.all_filtered);
  EXPECT_EQ(r.kept, 0u);
  EXPECT_EQ(r.total.item(), 0.0);
}

TEST(TargetLoss, ThresholdRestrictsToConfidentRows) {
  Rng rng(7);
  LossInputs in = random_inputs(4, 1, rng);
  in.p_pt = Tensor::from({4, 2}, {0.95, 0.05, 0.4, 0.6, 0.1, 0.9, 0.55, 0.45});
  LossWeights w;
  w.lambda_t = 1.0;
  const TargetLoss r = target_loss(in, w, 0.8);
  EXPECT_EQ(r.kept, 2u);
  const std::vector<std::int64_t> rows{0, 2};
  const PointLabels y{0, 1};
  const auto f = class_frequencies(y, 2);
  EXPECT_NEAR(r.seg_img, seg_loss(gather_rows(in.p_img, rows), y, f).item(), 1e-14);
  EXPECT_NEAR(r.xm, distill_loss({gather_rows(in.s_fuse[0], rows)}, {gather_rows(in.s_pt[0], rows)}).item(), 1e-14);
}

TEST(PseudoLabels, ArgmaxWithTiesToLowerClass) {
  const Tensor p = Tensor::from({4, 2}, {0.5, 0.5, 0.2, 0.8, 0.9, 0.1, 0.3, 0.7});
  const PseudoLabels pl = pseudo_labels(p, 0.75);
  EXPECT_EQ(pl.labels, (PointLabels{0, 1, 0, 1}));
  EXPECT_EQ(pl.keep, (std::vector<std::uint8_t>{0, 1, 1, 0}));
  EXPECT_EQ(pl.kept(), 2u);
  EXPECT_EQ(pseudo_labels(p).kept(), 4u);
}

TEST(TargetLoss, PseudoLabelsCarryNoGradient) {
  // P^pt only supplies labels on the target side.
  Rng rng(8);
  Tensor x = smc::testing::random_param({8, 2}, rng);
  Tensor z = smc::testing::random_param({8, 2}, rng);
  Tape tape;
  Tape::Scope scope(tape);
  LossInputs in;
  in.p_pt = softmax_rows(x);
  in.p_img = softmax_rows(z);
  in.s_fuse = {softmax_rows(z)};
  in.s_pt = {softmax_rows(z)};
  in.l_xm = distill_loss(in.s_fuse, in.s_pt);
  LossWeights w;
  w.lambda_t = 1.0;
  tape.backward(target_loss(in, w).total);
  EXPECT_FALSE(x.has_grad());
  EXPECT_TRUE(z.has_grad());
}

TEST(SourceLoss, GradientReachesEveryInput) {
  Rng rng(9);
  std::vector<Tensor> logits;
  for (int i = 0; i < 6; ++i) logits.push_back(smc::testing::random_param({10, 2}, rng));
  Tape tape;
  Tape::Scope scope(tape);
  LossInputs in;
  in.p_pt = softmax_rows(logits[0]);
  in.p_img = softmax_rows(logits[1]);
  in.s_fuse = {softmax_rows(logits[2]), softmax_rows(logits[3])};
  in.s_pt = {softmax_rows(logits[4]), softmax_rows(logits[5])};
  in.l_xm = distill_loss(in.s_fuse, in.s_pt);
  const PointLabels y = random_labels(10, rng);
  tape.backward(source_loss(in, y, class_frequencies(y, 2), LossWeights{}).total);
  for (const auto& t : logits) EXPECT_TRUE(t.has_grad());
}

TEST(LossWeights, NegativeIsRejected) {
  LossWeights w;
  w.lambda_t = -0.1;
  EXPECT_THROW(w.validate(), ParameterError);
}
