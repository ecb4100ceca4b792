#include "tbd/feature_distill.hpp"

#include <stdexcept>
#include <string>

namespace tbd::distill {

namespace {

void check_levels(std::span<const ad::Var> teacher, std::span<const ad::Var> student,
                  std::span<const AdaptiveLayerVars> phi) {
  if (teacher.empty()) throw std::invalid_argument("feature distillation: no levels");
  if (teacher.size() != student.size() || teacher.size() != phi.size()) {
    throw std::invalid_argument("feature distillation: level count mismatch");
  }
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    const Shape& t = teacher[l].shape();
    const Shape& s = student[l].shape();
    if (t.rows != s.rows || t.cols != s.cols) {
      throw std::invalid_argument("feature distillation: spatial mismatch at level " +
                                  std::to_string(l) + ": " + t.str() + " vs " + s.str());
    }
    if (!teacher[l].graph->is_constant(teacher[l])) {
      throw std::invalid_argument("feature distillation: teacher features must be constant");
    }
  }
}

void check_masks(std::span<const ad::Var> teacher, std::span<const LevelMasks> masks) {
  if (masks.size() != teacher.size()) throw std::invalid_argument("TFD: mask level count mismatch");
  for (std::size_t l = 0; l < masks.size(); ++l) {
    const Shape expect{teacher[l].shape().rows, teacher[l].shape().cols, 1};
    const auto& m = masks[l];
    if (!(m.pc_teacher.shape() == expect) || !(m.pr_teacher.shape() == expect) ||
        !(m.pc_student.shape() == expect) || !(m.pr_student.shape() == expect)) {
      throw std::invalid_argument("TFD: mask shape mismatch at level " + std::to_string(l));
    }
  }
}

/// Per-cell squared residual summed over channels, (rows, cols, 1).
ad::Var residual_energy(ad::Var teacher, ad::Var student, const AdaptiveLayerVars& phi) {
  return ad::sum_channels(ad::square(teacher - project(phi, student)));
}

ad::Var masked_term(ad::Var energy, const Grid& mask) {
  ad::Graph& g = *energy.graph;
  return ad::sum(g.constant(mask) * energy) / (mask.sum() + kMaskEpsilon);
}

}  // namespace

ad::Var project(const AdaptiveLayerVars& phi, ad::Var student_features) {
  if (phi.weight.shape().cols != student_features.shape().channels) {
    throw std::invalid_argument("project: adaptive layer expects " +
                                std::to_string(phi.weight.shape().cols) + " channels, got " +
                                std::to_string(student_features.shape().channels));
  }
  return ad::affine(student_features, phi.weight, phi.bias);
}

ad::Var fpn_mimic_loss(std::span<const ad::Var> teacher, std::span<const ad::Var> student,
                       std::span<const AdaptiveLayerVars> phi) {
  check_levels(teacher, student, phi);
  ad::Var total = ad::sum(residual_energy(teacher[0], student[0], phi[0]));
  for (std::size_t l = 1; l < teacher.size(); ++l) {
    total = total + ad::sum(residual_energy(teacher[l], student[l], phi[l]));
  }
  return total;
}

ad::Var tfd_fixed(std::span<const ad::Var> teacher, std::span<const ad::Var> student,
                  std::span<const AdaptiveLayerVars> phi, std::span<const LevelMasks> masks,
                  double weight_cls, double weight_reg) {
  if (weight_cls < 0.0 || weight_reg < 0.0) throw std::invalid_argument("tfd_fixed: negative task weight");
  check_levels(teacher, student, phi);
  check_masks(teacher, masks);
  ad::Graph& g = *teacher[0].graph;
  ad::Var total = g.constant(0.0);
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    ad::Var energy = residual_energy(teacher[l], student[l], phi[l]);
    total = total + masked_term(energy, masks[l].pc_teacher) * weight_cls +
            masked_term(energy, masks[l].pr_teacher) * weight_reg;
  }
  return total;
}

ad::Var twg_weights(const TwgVars& twg, const LevelMasks& masks) {
  const Shape& s = masks.pc_teacher.shape();
  if (!(masks.pr_teacher.shape() == s) || !(masks.pc_student.shape() == s) ||
      !(masks.pr_student.shape() == s)) {
    throw std::invalid_argument("twg_weights: the four masks differ in shape");
  }
  ad::Graph& g = *twg.w1.graph;
  ad::Var stacked = ad::concat_channels({g.constant(masks.pc_teacher), g.constant(masks.pr_teacher),
                                         g.constant(masks.pc_student), g.constant(masks.pr_student)});
  ad::Var pooled = ad::global_avg_pool(stacked);
  ad::Var hidden = ad::affine(pooled, twg.w1, twg.b1);
  return ad::softmax_channels(ad::affine(hidden, twg.w2, twg.b2));
}

ad::Var tfd_weighted(std::span<const ad::Var> teacher, std::span<const ad::Var> student,
                     std::span<const AdaptiveLayerVars> phi, std::span<const LevelMasks> masks,
                     std::span<const ad::Var> level_weights) {
  check_levels(teacher, student, phi);
  check_masks(teacher, masks);
  if (level_weights.size() != teacher.size()) throw std::invalid_argument("TFD: weight level count mismatch");
  ad::Graph& g = *teacher[0].graph;
  ad::Var cls_term = g.constant(0.0);
  ad::Var reg_term = g.constant(0.0);
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    if (!(level_weights[l].shape() == Shape{1, 1, 2})) {
      throw std::invalid_argument("TFD: task weights must be (1x1x2)");
    }
    ad::Var energy = residual_energy(teacher[l], student[l], phi[l]);
    cls_term = cls_term + ad::slice_channels(level_weights[l], 0, 1) * masked_term(energy, masks[l].pc_teacher);
    reg_term = reg_term + ad::slice_channels(level_weights[l], 1, 1) * masked_term(energy, masks[l].pr_teacher);
  }
  return cls_term + reg_term;
}

ad::Var tfd_dynamic(std::span<const ad::Var> teacher, std::span<const ad::Var> student,
                    std::span<const AdaptiveLayerVars> phi, std::span<const LevelMasks> masks,
                    const TwgVars& twg, std::vector<ad::Var>* level_weights) {
  check_masks(teacher, masks);
  std::vector<ad::Var> weights;
  for (const auto& m : masks) weights.push_back(twg_weights(twg, m));
  ad::Var loss = tfd_weighted(teacher, student, phi, masks, weights);
  if (level_weights) *level_weights = weights;
  return loss;
}

ad::Var total_loss(ad::Var detector, ad::Var hd, ad::Var tfd, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("total_loss: alpha and beta must be non-negative");
  return detector + hd * alpha + tfd * beta;
}

double total_loss(double detector, double hd, double tfd, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("total_loss: alpha and beta must be non-negative");
  return detector + alpha * hd + beta * tfd;
}

}  // namespace tbd::distill
