// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "../common/oracles.hpp"
#include "json.hpp"
#include "smc/metrics.hpp"

using namespace smc;
using smc::testing::Rng;

namespace {

SegMask box_mask(Dims d, Index3 lo, Index3 hi) {
  SegMask m{Grid<std::uint8_t>(d, 0), 2, {}};
  for (int i = lo[0]; i <= hi[0]; ++i)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int k = lo[2]; k <= hi[2]; ++k) m.labels(i, j, k) = 1;
  return m;
}

SegMask random_mask(Dims d, double p, Rng& rng) {
  SegMask m{Grid<std::uint8_t>(d, 0), 2, {}};
  std::bernoulli_distribution b(p);
  for (auto& v : m.labels.values()) v = b(rng);
  m.labels(0, 0, 0) = 1;
  return m;
}

}  // namespace

TEST(Dice, IdenticalDisjointAndShifted) {
  const SegMask a = box_mask({8, 8, 8}, {1, 1, 1}, {2, 2, 2});
  EXPECT_EQ(dice(a, a), 1.0);
  EXPECT_EQ(dice(a, box_mask({8, 8, 8}, {5, 5, 5}, {6, 6, 6})), 0.0);
  // 2x2x2 cube shifted one voxel: 4 shared voxels of 8 + 8.
  EXPECT_DOUBLE_EQ(dice(a, box_mask({8, 8, 8}, {2, 1, 1}, {3, 2, 2})), 0.5);
  const SegMask empty{Grid<std::uint8_t>({8, 8, 8}, 0), 2, {}};
  EXPECT_EQ(dice(empty, empty), 1.0);
  EXPECT_EQ(dice(a, empty), 0.0);
}

TEST(Dice, DimensionMismatchIsContractError) {
  EXPECT_THROW(dice(box_mask({8, 8, 8}, {0, 0, 0}, {1, 1, 1}), box_mask({8, 8, 9}, {0, 0, 0}, {1, 1, 1})),
               ContractError);
}

TEST(Assd, IdenticalIsZeroAndParallelPlanes) {
  const SegMask a = box_mask({10, 10, 10}, {2, 2, 2}, {6, 6, 6});
  EXPECT_EQ(assd(a, a), 0.0);
  // Two single-voxel-thick slabs three voxels apart.
  const SegMask p = box_mask({10, 10, 10}, {0, 0, 2}, {9, 9, 2});
  const SegMask q = box_mask({10, 10, 10}, {0, 0, 5}, {9, 9, 5});
  EXPECT_DOUBLE_EQ(assd(p, q), 3.0);
  EXPECT_DOUBLE_EQ(assd(p, q, {1.0, 1.0, 2.0}), 6.0);
}

TEST(Assd, MatchesBruteForceOnRandomMasks) {
  Rng rng(1);
  std::uniform_int_distribution<int> side(3, 16);
  std::uniform_real_distribution<double> sp(0.5, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Dims d{side(rng), side(rng), side(rng)};
    const SegMask a = random_mask(d, 0.2, rng), b = random_mask(d, 0.3, rng);
    const Spacing s{sp(rng), sp(rng), sp(rng)};
    EXPECT_NEAR(assd(a, b, s), smc::testing::assd_bruteforce(a.labels, b.labels, s), 1e-9) << trial;
  }
}

TEST(Assd, EmptyMaskIsNumericError) {
  const SegMask a = box_mask({8, 8, 8}, {1, 1, 1}, {2, 2, 2});
  const SegMask empty{Grid<std::uint8_t>({8, 8, 8}, 0), 2, {}};
  EXPECT_THROW(assd(a, empty), NumericError);
  EXPECT_THROW(assd(empty, a), NumericError);
  EXPECT_FALSE(evaluate_side(a, empty).assd.has_value());
}

TEST(BboxIou, IdenticalNestedDisjoint) {
  const SegMask a = box_mask({16, 16, 16}, {0, 0, 0}, {7, 7, 7});
  EXPECT_EQ(bbox_iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(bbox_iou(a, box_mask({16, 16, 16}, {0, 0, 0}, {3, 3, 3})), 1.0 / 8.0);
  EXPECT_EQ(bbox_iou(a, box_mask({16, 16, 16}, {10, 10, 10}, {12, 12, 12})), 0.0);
}

TEST(Metrics, SymmetricAndTranslationInvariant) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Dims d{12, 12, 12};
    SegMask a{Grid<std::uint8_t>(d, 0), 2, {}}, b = a;
    std::bernoulli_distribution on(0.3);
    for (int i = 1; i < 8; ++i)
      for (int j = 1; j < 8; ++j)
        for (int k = 1; k < 8; ++k) {
          a.labels(i, j, k) = on(rng);
          b.labels(i, j, k) = on(rng);
        }
    a.labels(4, 4, 4) = b.labels(4, 4, 4) = 1;
    EXPECT_DOUBLE_EQ(dice(a, b), dice(b, a));
    EXPECT_NEAR(assd(a, b), assd(b, a), 1e-12);
    EXPECT_DOUBLE_EQ(bbox_iou(a, b), bbox_iou(b, a));

    SegMask as{Grid<std::uint8_t>(d, 0), 2, {}}, bs = as;
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j)
        for (int k = 0; k < 9; ++k) {
          as.labels(i + 3, j + 2, k + 1) = a.labels(i, j, k);
          bs.labels(i + 3, j + 2, k + 1) = b.labels(i, j, k);
        }
    EXPECT_DOUBLE_EQ(dice(as, bs), dice(a, b));
    EXPECT_NEAR(assd(as, bs), assd(a, b), 1e-12);
    EXPECT_DOUBLE_EQ(bbox_iou(as, bs), bbox_iou(a, b));
  }
}

TEST(DistanceTransform, MatchesBruteForce) {
  Rng rng(3);
  Grid<std::uint8_t> seeds({9, 7, 11}, 0);
  std::bernoulli_distribution on(0.05);
  for (auto& v : seeds.values()) v = on(rng);
  seeds(0, 0, 0) = 1;
  const Spacing s{1.0, 1.5, 0.75};
  const Field dt = distance_transform(seeds, s);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const Index3 p = seeds.coords(i);
    double best = 1e300;
    for (std::size_t j = 0; j < seeds.size(); ++j) {
      if (!seeds[j]) continue;
      const Index3 q = seeds.coords(j);
      const double dx = (p[0] - q[0]) * s.x, dy = (p[1] - q[1]) * s.y, dz = (p[2] - q[2]) * s.z;
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    EXPECT_NEAR(dt[i], std::sqrt(best), 1e-9);
  }
}

TEST(Components, ConnectivityMatters) {
  Grid<std::uint8_t> fg({4, 4, 4}, 0);
  fg(0, 0, 0) = fg(1, 1, 1) = 1;
  EXPECT_EQ(connected_components(fg, 26).count, 1);
  EXPECT_EQ(connected_components(fg, 6).count, 2);
  fg(3, 3, 3) = 1;
  const Components c = connected_components(fg, 26);
  EXPECT_EQ(c.count, 2);
  EXPECT_EQ(c.sizes, (std::vector<std::int64_t>{2, 1}));
}

TEST(Boundary, SolidCubeShell) {
  const SegMask a = box_mask({7, 7, 7}, {1, 1, 1}, {5, 5, 5});
  const auto shell = boundary_voxels(a.labels);
  std::size_t n = 0;
  for (auto v : shell.values()) n += v;
  EXPECT_EQ(n, 125u - 27u);
}

TEST(Report, CsvAndJsonCarryAggregates) {
  EvalReport r;
  CaseReport c1{"a", {0.8, 1.5, 0.6}, {0.6, 2.5, 0.4}};
  CaseReport c2{"b", {1.0, 0.5, 1.0}, {0.0, std::nullopt, 0.0}};
  r.cases = {c1, c2};
  EXPECT_NEAR(r.mean_dice(), 0.6, 1e-15);
  ASSERT_TRUE(r.mean_assd().has_value());
  EXPECT_NEAR(*r.mean_assd(), 1.5, 1e-15);
  EXPECT_NEAR(r.mean_bbox_iou(), 0.5, 1e-15);
  const auto dir = smc::testing::scratch_dir("report");
  write_report_csv(dir / "r.csv", r);
  write_report_json(dir / "r.json", r);
  nlohmann::json j;
  std::ifstream(dir / "r.json") >> j;
  EXPECT_EQ(j["cases"].size(), 2u);
  std::ifstream csv(dir / "r.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_NE(header.find("dice"), std::string::npos);
}
