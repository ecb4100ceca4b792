#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tbd/detector.hpp"
#include "tbd/feature_distill.hpp"
#include "tbd/harmony.hpp"
#include "tbd/task_signals.hpp"

namespace tbd::toy {

struct DistillConfig {
  double alpha = 5.0;
  double beta = 0.01;
  harmony::HsVariant hs_variant = harmony::HsVariant::Tanh;
  harmony::LossNorm hd_norm = harmony::LossNorm::L1;
  signals::PcMode pc_mode = signals::PcMode::SpatialSoftmax;
  bool hd_weighted = true;      // Psi-weighted harmony loss; false -> uniform mean
  bool whole_feature = false;   // imitate the whole feature map instead of task masks
  bool twg = true;              // dynamic task weights; false -> (omega_cls, omega_reg)
  double omega_cls = 0.5;
  double omega_reg = 0.5;
  int twg_hidden = 16;
  double nms_iou = 0.5;
  double score_floor = 0.05;

  void validate() const;
  bool operator==(const DistillConfig&) const = default;
};

struct TrainingConfig {
  int steps = 800;
  double learning_rate = 0.3;
  int batch = 4;
  std::uint64_t seed = 1;
  DistillConfig distill;

  void validate() const;
  bool operator==(const TrainingConfig&) const = default;
};

/// Loss components of one step, averaged over the batch.
struct TraceStep {
  int step = 0;
  double detector = 0.0;
  double hd = 0.0;
  double tfd = 0.0;
  double total = 0.0;
  /// (T0, T1) per level; the fixed weights when the generator is off, empty without a teacher.
  std::vector<std::array<double, 2>> task_weights;
  bool operator==(const TraceStep&) const = default;
};

struct TrainResult {
  DetectorNet net;
  /// Adaptive layers ("phi.<l>.w/b") and task weight generator ("twg.*").
  ParameterSet distill_params;
  std::vector<TraceStep> trace;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int step, const std::string& what) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Per-level values of a frozen network on one scene (the teacher side of
/// distillation, also used to measure harmony gaps).
struct TeacherLevel {
  Grid features;
  Grid pc;
  Grid pr;
  Grid hs;
  Grid delta;
};
std::vector<TeacherLevel> teacher_levels(const DetectorNet& teacher, const SyntheticScene& scene,
                                         const DistillConfig& cfg);

/// Student-side distillation terms for one scene, built into the student's graph.
struct DistillTerms {
  ad::Var hd;
  ad::Var tfd;
  std::vector<ad::Var> task_weights;  // (1, 1, 2) per level
};
DistillTerms distill_terms(std::span<const LevelOutput> student, std::span<const TeacherLevel> teacher,
                           const geometry::GroundTruthSet& truth, const DistillConfig& cfg,
                           const std::map<std::string, ad::Var>& distill_params);

ParameterSet create_distill_params(const DetectorConfig& student, const DetectorConfig& teacher,
                                   const DistillConfig& cfg, std::uint64_t seed);

/// Plain gradient descent; scenes are visited in a seed-determined order,
/// `batch` per step. With a teacher, minimises detector + alpha*HD + beta*TFD.
TrainResult train(const DetectorNet& net, const std::vector<SyntheticScene>& scenes, const TrainingConfig& config,
                  const DetectorNet* teacher = nullptr);

}  // namespace tbd::toy
