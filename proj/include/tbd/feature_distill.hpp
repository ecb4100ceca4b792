#pragma once

#include <span>
#include <vector>

#include "tbd/autodiff.hpp"

namespace tbd::distill {

/// Graph handles of a per-level channel projection student -> teacher.
struct AdaptiveLayerVars {
  ad::Var weight;  // (teacher_channels, student_channels, 1)
  ad::Var bias;    // (1, 1, teacher_channels)
};

/// Graph handles of the task weight generator: pooled masks (4) -> hidden -> 2.
struct TwgVars {
  ad::Var w1;  // (hidden, 4, 1)
  ad::Var b1;  // (1, 1, hidden)
  ad::Var w2;  // (2, hidden, 1)
  ad::Var b2;  // (1, 1, 2)
};

/// Task masks of one level, all (rows, cols, 1) values detached from the graph.
struct LevelMasks {
  Grid pc_teacher;
  Grid pr_teacher;
  Grid pc_student;
  Grid pr_student;
};

constexpr double kMaskEpsilon = 1e-12;

ad::Var project(const AdaptiveLayerVars& phi, ad::Var student_features);

/// Sum over levels, cells and channels of (F^t - phi(F^s))^2.
ad::Var fpn_mimic_loss(std::span<const ad::Var> teacher, std::span<const ad::Var> student,
                       std::span<const AdaptiveLayerVars> phi);

/// Mask-normalised feature imitation with fixed task weights.
ad::Var tfd_fixed(std::span<const ad::Var> teacher, std::span<const ad::Var> student,
                  std::span<const AdaptiveLayerVars> phi, std::span<const LevelMasks> masks,
                  double weight_cls, double weight_reg);

/// (1, 1, 2) softmax output (T0, T1) for one level.
ad::Var twg_weights(const TwgVars& twg, const LevelMasks& masks);

/// Task-decoupled distillation with per-level weights from the generator.
/// When `level_weights` is given it receives each level's (T0, T1) node.
ad::Var tfd_dynamic(std::span<const ad::Var> teacher, std::span<const ad::Var> student,
                    std::span<const AdaptiveLayerVars> phi, std::span<const LevelMasks> masks,
                    const TwgVars& twg, std::vector<ad::Var>* level_weights = nullptr);

/// Same as tfd_dynamic with caller-supplied (1, 1, 2) weight nodes.
ad::Var tfd_weighted(std::span<const ad::Var> teacher, std::span<const ad::Var> student,
                     std::span<const AdaptiveLayerVars> phi, std::span<const LevelMasks> masks,
                     std::span<const ad::Var> level_weights);

/// detector + alpha * hd + beta * tfd.
ad::Var total_loss(ad::Var detector, ad::Var hd, ad::Var tfd, double alpha, double beta);
double total_loss(double detector, double hd, double tfd, double alpha, double beta);

}  // namespace tbd::distill
