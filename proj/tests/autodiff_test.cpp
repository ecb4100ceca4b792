#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "tbd/autodiff.hpp"
#include "tbd/gradcheck.hpp"

using namespace tbd;
using namespace tbd::ad;

namespace {

Grid random_grid(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Grid g(s);
  for (auto& v : g.values()) v = u(rng);
  return g;
}

}  // namespace

TEST(Autodiff, TanhAtZero) {
  Graph g;
  Var x = g.parameter("x", Grid::scalar(0.0));
  Var y = tanh(x);
  EXPECT_EQ(y.item(), 0.0);
  auto grads = g.backpropagate(y);
  EXPECT_DOUBLE_EQ(grads["x"].item(), 1.0);
}

TEST(Autodiff, SpatialSoftmaxUniform) {
  Graph g;
  Var x = g.parameter("x", Grid(2, 2, 1, 3.7));
  Var p = spatial_softmax(x);
  for (double v : p.value().values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Autodiff, AbsDifference) {
  Graph g;
  Var a = g.parameter("a", Grid::scalar(0.9));
  Var b = g.parameter("b", Grid::scalar(0.7));
  EXPECT_NEAR(abs(a - b).item(), 0.2, 1e-15);
}

TEST(Autodiff, SquareDerivative) {
  Graph g;
  Var x = g.parameter("x", Grid::scalar(3.0));
  auto grads = g.backpropagate(square(x));
  EXPECT_DOUBLE_EQ(grads["x"].item(), 6.0);
}

TEST(Autodiff, MaxRoutesToArgmax) {
  Graph g;
  Var a = g.parameter("x1", Grid::scalar(2.0));
  Var b = g.parameter("x2", Grid::scalar(5.0));
  auto grads = g.backpropagate(maximum(a, b));
  EXPECT_EQ(grads["x1"].item(), 0.0);
  EXPECT_EQ(grads["x2"].item(), 1.0);
}

TEST(Autodiff, TiesRouteToFirstOperand) {
  Graph g;
  Var a = g.parameter("a", Grid::scalar(1.0));
  Var b = g.parameter("b", Grid::scalar(1.0));
  auto gmax = g.backpropagate(maximum(a, b));
  EXPECT_EQ(gmax["a"].item(), 1.0);
  EXPECT_EQ(gmax["b"].item(), 0.0);
  auto gmin = g.backpropagate(minimum(a, b));
  EXPECT_EQ(gmin["a"].item(), 1.0);
  EXPECT_EQ(gmin["b"].item(), 0.0);

  Var v = g.parameter("v", Grid::from({1, 1, 3}, {2.0, 2.0, 1.0}));
  auto gch = g.backpropagate(sum(max_channels(v)));
  EXPECT_EQ(gch["v"][0], 1.0);
  EXPECT_EQ(gch["v"][1], 0.0);
}

TEST(Autodiff, ClampPassesGradientOnlyInside) {
  Graph g;
  Var x = g.parameter("x", Grid::from({1, 3, 1}, {-1.0, 0.5, 2.0}));
  auto grads = g.backpropagate(sum(clamp(x, 0.0, 1.0)));
  EXPECT_EQ(grads["x"][0], 0.0);
  EXPECT_EQ(grads["x"][1], 1.0);
  EXPECT_EQ(grads["x"][2], 0.0);

  Graph edge;
  Var e = edge.parameter("e", Grid::from({1, 2, 1}, {0.0, 1.0}));
  auto eg = edge.backpropagate(sum(clamp(e, 0.0, 1.0)));
  EXPECT_EQ(eg["e"][0], 0.0);
  EXPECT_EQ(eg["e"][1], 0.0);
}

TEST(Autodiff, ScalarBroadcast) {
  Graph g;
  Var x = g.parameter("x", Grid::from({1, 3, 1}, {1.0, 2.0, 3.0}));
  Var s = g.parameter("s", Grid::scalar(2.0));
  Var y = sum(x * s);
  EXPECT_DOUBLE_EQ(y.item(), 12.0);
  auto grads = g.backpropagate(y);
  EXPECT_DOUBLE_EQ(grads["s"].item(), 6.0);
  EXPECT_DOUBLE_EQ(grads["x"][2], 2.0);
}

TEST(Autodiff, ShapeMismatchThrows) {
  Graph g;
  Var a = g.parameter("a", Grid(2, 2, 1));
  Var b = g.parameter("b", Grid(2, 3, 1));
  EXPECT_THROW(a + b, std::invalid_argument);
  EXPECT_THROW(g.bind("a", Grid(3, 3, 1)), std::invalid_argument);
}

TEST(Autodiff, UnboundInputThrows) {
  Graph g;
  g.parameter("a", Grid::scalar(1.0));
  EXPECT_THROW(g.bind("missing", Grid::scalar(1.0)), std::invalid_argument);
}

TEST(Autodiff, NanReportsNodeId) {
  Graph g;
  Var a = g.parameter("a", Grid::scalar(-1.0));
  try {
    log(a);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.node(), 1);
  }
}

TEST(Autodiff, BackpropagateBeforeEvaluateThrows) {
  Graph g;
  Var a = g.parameter("a", Grid::scalar(1.0));
  Var y = square(a);
  g.bind("a", Grid::scalar(2.0));
  EXPECT_THROW(g.backpropagate(y), std::logic_error);
  g.evaluate();
  EXPECT_DOUBLE_EQ(g.backpropagate(y)["a"].item(), 4.0);
}

TEST(Autodiff, NonScalarOutputRejected) {
  Graph g;
  Var a = g.parameter("a", Grid(2, 2, 1));
  EXPECT_THROW(g.backpropagate(tanh(a)), std::invalid_argument);
}

TEST(Autodiff, EvaluateIsPure) {
  std::mt19937_64 rng(7);
  Graph g;
  Var x = g.parameter("x", random_grid({4, 4, 3}, rng));
  Var w = g.parameter("w", random_grid({2, 3, 1}, rng));
  Var b = g.parameter("b", random_grid({1, 1, 2}, rng));
  Var y = sum(spatial_softmax(max_channels(tanh(affine(x, w, b)))) * 3.0) + mean(softplus(x));
  const double first = y.item();
  for (int i = 0; i < 5; ++i) {
    g.evaluate();
    EXPECT_EQ(y.item(), first);
  }
}

TEST(Autodiff, SpatialSoftmaxSumsToOne) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    Var x = g.parameter("x", random_grid({5, 7, 2}, rng, -20.0, 20.0));
    const Grid& p = spatial_softmax(x).value();
    for (int k = 0; k < 2; ++k) {
      double s = 0.0;
      for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 7; ++c) {
          EXPECT_GT(p(r, c, k), 0.0);
          s += p(r, c, k);
        }
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Autodiff, AffinePoolingShapes) {
  Graph g;
  Var x = g.parameter("x", Grid(8, 8, 3, 1.0));
  Var w = g.parameter("w", Grid(5, 3, 1, 0.5));
  Var b = g.parameter("b", Grid(1, 1, 5, 0.25));
  Var y = affine(x, w, b);
  EXPECT_EQ(y.shape(), (Shape{8, 8, 5}));
  EXPECT_DOUBLE_EQ(y.value()(3, 4, 2), 1.75);
  EXPECT_EQ(avg_pool(y, 2).shape(), (Shape{4, 4, 5}));
  EXPECT_EQ(global_avg_pool(y).shape(), (Shape{1, 1, 5}));
  EXPECT_THROW(avg_pool(g.parameter("odd", Grid(3, 3, 1)), 2), std::invalid_argument);
  EXPECT_THROW(affine(x, g.parameter("bad", Grid(5, 2, 1)), b), std::invalid_argument);
}

TEST(GradCheck, BilinearIsExact) {
  Graph g;
  Var x = g.parameter("x", Grid::scalar(2.0));
  Var y = g.parameter("y", Grid::scalar(3.0));
  auto report = finite_difference_check(g, x * y, 1e-5);
  EXPECT_LT(report.max_relative_error, 1e-6);
  EXPECT_EQ(report.coordinates, 2u);
}

TEST(GradCheck, ConstantGraphHasZeroError) {
  Graph g;
  Var x = g.parameter("x", Grid(2, 2, 1, 0.3));
  Var c = g.constant(4.0);
  Var y = c + 0.0 * sum(g.constant(Grid(2, 2, 1, 1.0)));
  (void)x;
  auto report = finite_difference_check(g, y, 1e-5);
  EXPECT_EQ(report.max_relative_error, 0.0);
}

TEST(GradCheck, EveryOpComposite) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g;
    Var x = g.parameter("x", random_grid({4, 4, 3}, rng));
    Var w = g.parameter("w", random_grid({4, 3, 1}, rng));
    Var b = g.parameter("b", random_grid({1, 1, 4}, rng));
    Var s = g.parameter("s", random_grid({1, 1, 1}, rng, 0.5, 1.5));
    Var h = tanh(affine(x, w, b));
    Var pooled = avg_pool(h, 2);
    Var gap = global_avg_pool(h);
    Var sm = spatial_softmax(max_channels(h));
    Var chs = softmax_channels(slice_channels(h, 1, 3));
    Var cat = concat_channels({sum_channels(h), exp(slice_channels(h, 0, 1))});
    Var kinks = clamp(minimum(h, square(h)) - maximum(h * 0.5, -h), -0.3, 0.4);
    Var y = sum(sm * s) + mean(softplus(pooled) / (1.0 + square(s))) + sum(sigmoid(gap)) +
            sum(chs * chs) + mean(abs(cat - 0.2)) + mean(kinks) + sum(log(1.5 + h) * 0.1);
    auto report = finite_difference_check(g, y, 1e-5);
    EXPECT_LT(report.max_relative_error, 1e-4)
        << "trial " << trial << " worst " << report.worst_input << "[" << report.worst_index
        << "] analytic " << report.worst_analytic << " numeric " << report.worst_numeric;
  }
}

TEST(GradCheck, DetectsTieFlips) {
  Graph g;
  Var a = g.parameter("a", Grid::scalar(1.0));
  Var b = g.parameter("b", Grid::scalar(1.0));
  auto report = finite_difference_check(g, maximum(a, b), 1e-5);
  EXPECT_GT(report.tie_flips, 0u);
}
