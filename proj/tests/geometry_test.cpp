#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "tbd/geometry.hpp"
#include "tbd/gradcheck.hpp"

using namespace tbd;
using namespace tbd::geometry;

namespace {

BBox random_box(std::mt19937_64& rng, double extent = 10.0) {
  std::uniform_real_distribution<double> pos(0.0, extent);
  std::uniform_real_distribution<double> size(0.5, extent / 2);
  const double x = pos(rng);
  const double y = pos(rng);
  return {x, y, x + size(rng), y + size(rng)};
}

std::vector<Detection> random_candidates(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> score(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, 2);
  std::vector<Detection> out;
  for (int i = 0; i < n; ++i) out.push_back({random_box(rng), score(rng), label(rng)});
  return out;
}

const double kSoftplusInvTwo = std::log(std::exp(2.0) - 1.0);

}  // namespace

TEST(Decode, SoftplusTwoGivesFourUnitBox) {
  const double o = kSoftplusInvTwo;
  BBox b = decode({o, o, o, o}, {4.0, 4.0}, 1.0);
  EXPECT_NEAR(b.x1, 2.0, 1e-12);
  EXPECT_NEAR(b.y1, 2.0, 1e-12);
  EXPECT_NEAR(b.x2, 6.0, 1e-12);
  EXPECT_NEAR(b.y2, 6.0, 1e-12);
}

TEST(Decode, VeryNegativeOffsetsCollapseToPoint) {
  BBox b = decode({-20, -20, -20, -20}, {4.0, 4.0}, 1.0);
  EXPECT_NEAR(b.x1, 4.0, 1e-8);
  EXPECT_NEAR(b.x2, 4.0, 1e-8);
  EXPECT_TRUE(b.valid());
}

TEST(Decode, GraphMatchesPlainAndHasHalfStrideSlope) {
  ad::Graph g;
  Grid offsets(1, 1, 4, 0.0);
  ad::Var o = g.parameter("o", offsets);
  AnchorGrid anchors{0, 4.0, 1, 1};
  BoxVars boxes = decode(o, anchors);
  BBox plain = decode({0, 0, 0, 0}, anchors.center(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(boxes.x2.item(), plain.x2);
  auto grads = g.backpropagate(boxes.x2);
  EXPECT_DOUBLE_EQ(grads["o"][2], 4.0 * 0.5);
  EXPECT_EQ(grads["o"][0], 0.0);
}

TEST(Decode, AnchorCentersAndCoverage) {
  AnchorGrid a = AnchorGrid::covering(0, 64.0, 4.0);
  EXPECT_EQ(a.rows, 16);
  EXPECT_EQ(a.center(0, 0).x, 2.0);
  EXPECT_EQ(a.center(1, 3).x, 14.0);
  EXPECT_EQ(a.center(1, 3).y, 6.0);
  EXPECT_THROW(AnchorGrid::covering(0, 64.0, 5.0), std::invalid_argument);
}

TEST(Decode, GradientChecks) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  AnchorGrid anchors{0, 2.0, 3, 3};
  for (int trial = 0; trial < 20; ++trial) {
    ad::Graph g;
    Grid offsets(3, 3, 4);
    for (auto& v : offsets.values()) v = n(rng);
    ad::Var o = g.parameter("o", offsets);
    BoxVars b = decode(o, anchors);
    ad::Var y = ad::sum(b.x1 * 0.3 + b.y1 * b.x2 - ad::square(b.y2) * 0.1);
    EXPECT_LT(ad::finite_difference_check(g, y).max_relative_error, 1e-4);
  }
}

TEST(Iou, Examples) {
  BBox b{1, 2, 4, 7};
  EXPECT_NEAR(iou(b, b), 1.0, 1e-12);
  EXPECT_NEAR(iou({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0 / 7.0, 1e-12);
  EXPECT_EQ(iou({0, 0, 1, 1}, {2, 2, 3, 3}), 0.0);
  EXPECT_EQ(iou({0, 0, 1, 1}, {1, 0, 2, 1}), 0.0);
}

TEST(Iou, RasterOracleAgreesOnExamples) {
  EXPECT_NEAR(raster_iou({0, 0, 2, 2}, {1, 1, 3, 3}, 256), 1.0 / 7.0, 0.01);
  EXPECT_EQ(raster_iou({1, 2, 4, 7}, {1, 2, 4, 7}, 256), 1.0);
  EXPECT_EQ(raster_iou({0, 0, 1, 1}, {2, 2, 3, 3}, 256), 0.0);
  EXPECT_THROW(raster_iou({0, 0, 0, 1}, {0, 0, 1, 1}, 256), std::invalid_argument);
  EXPECT_THROW(raster_iou({0, 0, 1, 1}, {0, 0, 1, 1}, 32), std::invalid_argument);
}

TEST(Iou, PropertiesOnRandomPairs) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 1000; ++i) {
    BBox a = random_box(rng);
    BBox b = random_box(rng);
    const double v = iou(a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_NEAR(iou(a, a), 1.0, 1e-9);
    EXPECT_LE(std::fabs(v - raster_iou(a, b, 256)), 0.01);
  }
}

TEST(Iou, GraphMatchesPlainAndGradientChecks) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0.0, 1.0);
  AnchorGrid anchors{0, 2.0, 4, 4};
  const BBox target{2.5, 1.5, 6.0, 5.5};
  for (int trial = 0; trial < 20; ++trial) {
    ad::Graph g;
    Grid offsets(4, 4, 4);
    for (auto& v : offsets.values()) v = n(rng);
    ad::Var o = g.parameter("o", offsets);
    ad::Var ious = iou(decode(o, anchors), target);
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        BBox p = decode({offsets(r, c, 0), offsets(r, c, 1), offsets(r, c, 2), offsets(r, c, 3)},
                        anchors.center(r, c), anchors.stride);
        EXPECT_NEAR(ious.value()(r, c), iou(p, target), 1e-12);
      }
    }
    auto report = ad::finite_difference_check(g, ad::sum(ious));
    EXPECT_LT(report.max_relative_error, 1e-4) << report.worst_index;
  }
}

TEST(Nms, SuppressesSameClassOverlap) {
  // B spans x in [0, 10 + d]; iou(A, B) = 10 / (10 + d) = 0.6 for d = 20/3.
  const BBox a{0, 0, 10, 1};
  const BBox b{0, 0, 10.0 + 20.0 / 3.0, 1};
  ASSERT_NEAR(iou(a, b), 0.6, 1e-9);
  std::vector<Detection> same{{a, 0.9, 0}, {b, 0.8, 0}};
  EXPECT_EQ(nms(same, 0.5), (std::vector<std::size_t>{0}));
  std::vector<Detection> different{{a, 0.9, 0}, {b, 0.8, 1}};
  EXPECT_EQ(nms(different, 0.5), (std::vector<std::size_t>{0, 1}));
  EXPECT_TRUE(nms(std::vector<Detection>{}, 0.5).empty());
}

TEST(Nms, TiesKeepLowerIndex) {
  std::vector<Detection> c{{{0, 0, 1, 1}, 0.5, 0}, {{0, 0, 1, 1}, 0.5, 0}};
  EXPECT_EQ(nms(c, 0.5), (std::vector<std::size_t>{0}));
}

TEST(Nms, RejectsBadInput) {
  std::vector<Detection> c{{{0, 0, 1, 1}, 0.5, 0}};
  EXPECT_THROW(nms(c, 0.0), std::invalid_argument);
  EXPECT_THROW(nms(c, 1.0), std::invalid_argument);
  c[0].score = std::nan("");
  EXPECT_THROW(nms(c, 0.5), std::invalid_argument);
}

TEST(Nms, RandomCandidateSetProperties) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    auto cands = random_candidates(rng, 1 + trial % 40);
    const double thr = 0.3 + 0.4 * (trial % 5) / 4.0;
    auto result = nms_trace(cands, thr);
    auto kept = nms_select(cands, thr);
    // No two kept boxes of one class overlap above the threshold.
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t j = i + 1; j < kept.size(); ++j) {
        if (kept[i].label == kept[j].label) {
          EXPECT_LE(iou(kept[i].box, kept[j].box), thr);
        }
      }
    }
    // Kept indices are in non-increasing score order.
    for (std::size_t i = 1; i < result.kept.size(); ++i) {
      EXPECT_GE(cands[result.kept[i - 1]].score, cands[result.kept[i]].score);
    }
    EXPECT_EQ(result.kept.size() + result.suppressions.size(), cands.size());
    // Idempotence.
    auto again = nms_select(kept, thr);
    ASSERT_EQ(again.size(), kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) EXPECT_EQ(again[i].box, kept[i].box);
  }
}
