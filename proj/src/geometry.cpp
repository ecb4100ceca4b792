#include "tbd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tbd::geometry {

namespace {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

AnchorGrid AnchorGrid::covering(int level, double extent, double stride) {
  const int n = static_cast<int>(std::lround(extent / stride));
  if (n <= 0 || std::fabs(n * stride - extent) > 1e-9) {
    throw std::invalid_argument("AnchorGrid: stride does not tile the scene extent");
  }
  return AnchorGrid{level, stride, n, n};
}

void GroundTruthSet::validate(int classes) const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& g = objects[i];
    if (!g.box.valid()) throw std::invalid_argument("ground truth " + std::to_string(i) + " is not a valid box");
    if (g.label < 0 || g.label >= classes) {
      throw std::invalid_argument("ground truth " + std::to_string(i) + " has label " +
                                  std::to_string(g.label) + " outside [0, " +
                                  std::to_string(classes) + ")");
    }
  }
}

BBox decode(const std::array<double, 4>& offsets, Point center, double stride) {
  return {center.x - stride * softplus(offsets[0]), center.y - stride * softplus(offsets[1]),
          center.x + stride * softplus(offsets[2]), center.y + stride * softplus(offsets[3])};
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter + kIouEpsilon);
}

double raster_iou(const BBox& a, const BBox& b, int resolution) {
  if (resolution < 64) throw std::invalid_argument("raster_iou: resolution must be at least 64");
  if (!(a.area() > 0.0) || !(b.area() > 0.0)) {
    throw std::invalid_argument("raster_iou: degenerate (zero-area) box");
  }
  const double x0 = std::min(a.x1, b.x1);
  const double y0 = std::min(a.y1, b.y1);
  const double dx = (std::max(a.x2, b.x2) - x0) / resolution;
  const double dy = (std::max(a.y2, b.y2) - y0) / resolution;
  long inter = 0;
  long uni = 0;
  for (int j = 0; j < resolution; ++j) {
    const double y = y0 + (j + 0.5) * dy;
    for (int i = 0; i < resolution; ++i) {
      const Point p{x0 + (i + 0.5) * dx, y};
      const bool in_a = a.contains(p);
      const bool in_b = b.contains(p);
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

NmsResult nms_trace(std::span<const Detection> candidates, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw std::invalid_argument("nms: iou threshold must lie in (0, 1)");
  }
  for (const auto& d : candidates) {
    if (!std::isfinite(d.score)) throw std::invalid_argument("nms: non-finite score");
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].score > candidates[b].score;
  });

  NmsResult result;
  for (std::size_t idx : order) {
    const Detection& d = candidates[idx];
    bool suppressed = false;
    for (std::size_t k : result.kept) {
      if (candidates[k].label == d.label && iou(candidates[k].box, d.box) > iou_threshold) {
        result.suppressions.push_back({k, idx});
        suppressed = true;
        break;
      }
    }
    if (!suppressed) result.kept.push_back(idx);
  }
  return result;
}

std::vector<std::size_t> nms(std::span<const Detection> candidates, double iou_threshold) {
  return nms_trace(candidates, iou_threshold).kept;
}

std::vector<Detection> nms_select(std::span<const Detection> candidates, double iou_threshold) {
  std::vector<Detection> out;
  for (std::size_t i : nms(candidates, iou_threshold)) out.push_back(candidates[i]);
  return out;
}

BoxVars decode(ad::Var offsets, const AnchorGrid& anchors) {
  const Shape& s = offsets.shape();
  if (s.rows != anchors.rows || s.cols != anchors.cols || s.channels != 4) {
    throw std::invalid_argument("decode: offsets " + s.str() + " do not match the anchor grid");
  }
  ad::Graph& g = *offsets.graph;
  Grid cx(s.rows, s.cols, 1);
  Grid cy(s.rows, s.cols, 1);
  for (int r = 0; r < s.rows; ++r) {
    for (int c = 0; c < s.cols; ++c) {
      const Point p = anchors.center(r, c);
      cx(r, c) = p.x;
      cy(r, c) = p.y;
    }
  }
  ad::Var vx = g.constant(std::move(cx));
  ad::Var vy = g.constant(std::move(cy));
  auto extent = [&](int k) { return ad::softplus(ad::slice_channels(offsets, k, 1)) * anchors.stride; };
  return {vx - extent(0), vy - extent(1), vx + extent(2), vy + extent(3)};
}

ad::Var iou(const BoxVars& boxes, const BBox& target) {
  ad::Graph& g = *boxes.x1.graph;
  return iou(boxes, BoxVars{g.constant(target.x1), g.constant(target.y1), g.constant(target.x2),
                            g.constant(target.y2)});
}

ad::Var iou(const BoxVars& a, const BoxVars& b) {
  const double inf = std::numeric_limits<double>::infinity();
  auto iw = ad::clamp(ad::minimum(a.x2, b.x2) - ad::maximum(a.x1, b.x1), 0.0, inf);
  auto ih = ad::clamp(ad::minimum(a.y2, b.y2) - ad::maximum(a.y1, b.y1), 0.0, inf);
  auto inter = iw * ih;
  auto area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
  auto area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
  return inter / (area_a + area_b - inter + kIouEpsilon);
}

}  // namespace tbd::geometry
