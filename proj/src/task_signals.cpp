#include "tbd/task_signals.hpp"

#include <algorithm>
#include <stdexcept>

namespace tbd::signals {

ad::Var classification_probability(ad::Var logits, PcMode mode) {
  if (logits.shape().channels < 1) throw std::invalid_argument("classification_probability: C < 1");
  ad::Var best = ad::max_channels(logits);
  return mode == PcMode::SpatialSoftmax ? ad::spatial_softmax(best) : ad::sigmoid(best);
}

ad::Var regression_probability(ad::Var offsets, const geometry::AnchorGrid& anchors,
                               const geometry::GroundTruthSet& gts) {
  const Shape& s = offsets.shape();
  if (gts.empty()) return offsets.graph->constant(Grid(s.rows, s.cols, 1, 0.0));
  const geometry::BoxVars boxes = geometry::decode(offsets, anchors);
  ad::Var best = geometry::iou(boxes, gts.objects.front().box);
  for (std::size_t g = 1; g < gts.size(); ++g) {
    best = ad::maximum(best, geometry::iou(boxes, gts.objects[g].box));
  }
  return best;
}

Grid regression_probability_raster(const Grid& offsets, const geometry::AnchorGrid& anchors,
                                   const geometry::GroundTruthSet& gts, int resolution) {
  if (offsets.channels() != 4 || offsets.rows() != anchors.rows || offsets.cols() != anchors.cols) {
    throw std::invalid_argument("regression_probability_raster: offsets do not match anchors");
  }
  Grid out(offsets.rows(), offsets.cols(), 1, 0.0);
  for (int r = 0; r < offsets.rows(); ++r) {
    for (int c = 0; c < offsets.cols(); ++c) {
      const geometry::BBox box = geometry::decode(
          {offsets(r, c, 0), offsets(r, c, 1), offsets(r, c, 2), offsets(r, c, 3)},
          anchors.center(r, c), anchors.stride);
      double best = 0.0;
      for (const auto& gt : gts.objects) {
        best = std::max(best, geometry::raster_iou(box, gt.box, resolution));
      }
      out(r, c) = best;
    }
  }
  return out;
}

}  // namespace tbd::signals
