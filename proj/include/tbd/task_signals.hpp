#pragma once

#include "tbd/autodiff.hpp"
#include "tbd/geometry.hpp"

namespace tbd::signals {

/// How the per-cell max classification logit becomes p_c.
enum class PcMode {
  SpatialSoftmax,  // normalise over every cell of the level
  Sigmoid,         // logistic per cell
};

enum class Provenance { Teacher, Student };

/// p_c and p_r of one level; both (rows, cols, 1) nodes with entries in [0, 1].
struct TaskProbabilityGrid {
  int level = 0;
  ad::Var pc;
  ad::Var pr;
  Provenance provenance = Provenance::Student;
};

/// (rows, cols, C) logits -> (rows, cols, 1) classification probability.
ad::Var classification_probability(ad::Var logits, PcMode mode);

/// (rows, cols, 4) offsets -> (rows, cols, 1) max IoU of the decoded box
/// against every ground truth; identically zero when there are none.
ad::Var regression_probability(ad::Var offsets, const geometry::AnchorGrid& anchors,
                               const geometry::GroundTruthSet& gts);

/// p_r recomputed from raw offset values with the raster IoU oracle.
Grid regression_probability_raster(const Grid& offsets, const geometry::AnchorGrid& anchors,
                                   const geometry::GroundTruthSet& gts, int resolution = 256);

}  // namespace tbd::signals
