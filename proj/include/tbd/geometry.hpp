#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "tbd/autodiff.hpp"

namespace tbd::geometry {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned box in scene units; valid when x1 <= x2 and y1 <= y2.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x1 <= x2 && y1 <= y2; }
  bool contains(Point p) const { return p.x >= x1 && p.x <= x2 && p.y >= y1 && p.y <= y2; }
  bool operator==(const BBox&) const = default;
};

/// Anchor points of one pyramid level: cell (r, c) is centred at
/// (stride * (c + 0.5), stride * (r + 0.5)).
struct AnchorGrid {
  int level = 0;
  double stride = 1.0;
  int rows = 0;
  int cols = 0;

  Point center(int r, int c) const { return {stride * (c + 0.5), stride * (r + 0.5)}; }
  /// Levels covering a square scene of `extent` units at the given stride.
  static AnchorGrid covering(int level, double extent, double stride);
};

struct GroundTruth {
  BBox box;
  int label = 0;
};

struct GroundTruthSet {
  std::vector<GroundTruth> objects;

  std::size_t size() const { return objects.size(); }
  bool empty() const { return objects.empty(); }
  /// Throws std::invalid_argument on an invalid box or a label outside [0, classes).
  void validate(int classes) const;
};

struct Detection {
  BBox box;
  double score = 0.0;
  int label = 0;
};

constexpr double kIouEpsilon = 1e-12;

/// Anchor-point decode with softplus-positive extents:
/// x1 = cx - stride * softplus(o0), y1 = cy - stride * softplus(o1),
/// x2 = cx + stride * softplus(o2), y2 = cy + stride * softplus(o3).
BBox decode(const std::array<double, 4>& offsets, Point center, double stride);

double iou(const BBox& a, const BBox& b);

/// IoU estimated by counting the centres of a resolution x resolution lattice
/// laid over the bounding extent of both boxes. Independent of iou().
double raster_iou(const BBox& a, const BBox& b, int resolution);

struct Suppression {
  std::size_t kept = 0;
  std::size_t suppressed = 0;
};

struct NmsResult {
  /// Indices into the input, in descending score order.
  std::vector<std::size_t> kept;
  /// Which kept candidate removed each suppressed one.
  std::vector<Suppression> suppressions;
};

/// Greedy per-class NMS; candidates are visited by descending score, ties
/// broken by lower index. A candidate is suppressed when its IoU with an
/// already kept box of the same class exceeds `iou_threshold`.
NmsResult nms_trace(std::span<const Detection> candidates, double iou_threshold);
std::vector<std::size_t> nms(std::span<const Detection> candidates, double iou_threshold);
std::vector<Detection> nms_select(std::span<const Detection> candidates, double iou_threshold);

/// Differentiable per-cell boxes of one level, each component (rows, cols, 1).
struct BoxVars {
  ad::Var x1, y1, x2, y2;
};

/// Decodes a (rows, cols, 4) offset node over the anchor grid.
BoxVars decode(ad::Var offsets, const AnchorGrid& anchors);
/// Per-cell IoU of decoded boxes against one fixed box.
ad::Var iou(const BoxVars& boxes, const BBox& target);
/// Per-cell IoU of two box grids of equal shape.
ad::Var iou(const BoxVars& a, const BoxVars& b);

}  // namespace tbd::geometry
