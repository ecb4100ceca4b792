#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tbd/geometry.hpp"
#include "tbd/trainer.hpp"

namespace tbd::analysis {

/// A post-NMS detection with its best IoU against any ground truth.
struct ScoredPrediction {
  geometry::Detection detection;
  double iou = 0.0;
};

std::vector<ScoredPrediction> annotate(std::span<const geometry::Detection> detections,
                                       const geometry::GroundTruthSet& truth);

/// IoU distribution of predictions scoring above `threshold`, in three bands:
/// IoU >= high, low <= IoU < high, IoU < low.
struct HarmonyHistogram {
  double threshold = 0.9;
  double high = 0.9;
  double low = 0.5;
  std::size_t count = 0;
  std::array<double, 3> fractions{0.0, 0.0, 0.0};

  bool empty() const { return count == 0; }
  /// The first band: the share of confident predictions that are also well localised.
  double harmonious() const { return fractions[0]; }
};

HarmonyHistogram harmony_histogram(std::span<const ScoredPrediction> predictions, double threshold,
                                   double high = 0.9, double low = 0.5);
/// Pools several scenes' predictions.
HarmonyHistogram harmony_histogram(std::span<const std::vector<ScoredPrediction>> scenes, double threshold,
                                   double high = 0.9, double low = 0.5);

/// Header and rows in the familiar "IOU>=0.9 | 0.5<=IOU<0.9 | IOU<0.5" layout, as percentages.
std::string format_harmony_table(std::span<const std::pair<std::string, HarmonyHistogram>> rows);

struct AuditEvent {
  std::size_t kept = 0;        // candidate indices
  std::size_t suppressed = 0;
  double kept_score = 0.0;
  double kept_iou = 0.0;
  double suppressed_score = 0.0;
  double suppressed_iou = 0.0;
  bool inharmonious = false;   // kept box localises worse than the one it removed
};

struct NmsAudit {
  std::vector<AuditEvent> events;
  std::size_t inharmonious() const;
};

/// Every suppression made by greedy NMS over `candidates`, with GT IoUs attached.
NmsAudit nms_audit(std::span<const geometry::Detection> candidates, const geometry::GroundTruthSet& truth,
                   double iou_threshold);

struct ErrorBreakdown {
  std::size_t correct = 0;  // right label, IoU > 0.5
  std::size_t loc = 0;      // right label, 0.1 < IoU <= 0.5, or a duplicate of a matched object
  std::size_t oth = 0;      // wrong label, IoU > 0.1
  std::size_t bg = 0;       // IoU <= 0.1 with everything
  std::size_t fn = 0;       // objects left unmatched
  std::size_t predictions = 0;
  std::size_t objects = 0;

  ErrorBreakdown& operator+=(const ErrorBreakdown& o);
  bool operator==(const ErrorBreakdown&) const = default;
};

/// Greedy one-to-one matching in descending score order over predictions
/// with score >= floor.
ErrorBreakdown error_analysis(std::span<const geometry::Detection> predictions, const geometry::GroundTruthSet& truth,
                              double floor);

struct EvalScene {
  std::vector<geometry::Detection> detections;
  geometry::GroundTruthSet truth;
};

struct PrPoint {
  double score = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Precision/recall sweep for one class at the given IoU threshold.
std::vector<PrPoint> pr_curve(std::span<const EvalScene> scenes, int label, double iou_threshold = 0.5);
/// All-point interpolated area under a PR curve.
double average_precision(std::span<const PrPoint> curve);
/// Mean AP over classes that have at least one object.
double toy_map(std::span<const EvalScene> scenes, int classes, double iou_threshold = 0.5);

/// Mean over scenes, levels and cells of |HS^a - HS^b|.
double mean_harmony_gap(const toy::DetectorNet& a, const toy::DetectorNet& b,
                        std::span<const toy::SyntheticScene> scenes, const toy::DistillConfig& cfg);

std::vector<EvalScene> evaluate(const toy::DetectorNet& net, std::span<const toy::SyntheticScene> scenes,
                                const toy::DistillConfig& cfg);

struct ModelSummary {
  std::string name;
  double map50 = 0.0;
  HarmonyHistogram histogram;
  ErrorBreakdown errors;
};

ModelSummary summarize(const std::string& name, std::span<const EvalScene> scenes, int classes,
                       double score_threshold, double high_band, double error_floor = 0.3);

struct RunArtifacts {
  std::vector<std::pair<std::string, HarmonyHistogram>> histograms;
  std::vector<std::pair<std::string, ErrorBreakdown>> errors;
  std::vector<std::pair<std::string, std::vector<toy::TraceStep>>> traces;
};

/// Writes harmony.csv, errors.csv, traces.csv, task_weights.csv and one
/// loss_<name>.svg / task_weights_<name>.svg per trace into `dir`.
/// Returns the written paths.
std::vector<std::filesystem::path> emit_report(const RunArtifacts& run, const std::filesystem::path& dir);

/// Formats a real the way every table does: fixed point, six decimals.
std::string fixed6(double v);

struct Series {
  std::string name;
  std::vector<double> values;
};
/// Standalone SVG line plot, one polyline per series against the step index.
std::string line_plot_svg(const std::string& title, std::span<const Series> series);

struct AblationRow {
  std::string name;
  toy::DistillConfig distill;
};

/// Three harmony variants times {L1, L2}.
std::vector<AblationRow> hd_ablation_grid(const toy::DistillConfig& base);
/// whole, cls, reg, cls+reg fixed, cls+reg dynamic.
std::vector<AblationRow> mask_ablation_grid(const toy::DistillConfig& base);

struct AblationResult {
  std::string name;
  double map50 = 0.0;
  double harmonious = 0.0;
  double harmony_gap = 0.0;
  double final_hd = 0.0;
  double final_tfd = 0.0;
  bool operator==(const AblationResult&) const = default;
};

struct AblationSetup {
  const toy::DetectorNet* teacher = nullptr;
  const toy::DetectorNet* student = nullptr;  // initial weights
  std::span<const toy::SyntheticScene> train;
  std::span<const toy::SyntheticScene> eval;
  toy::TrainingConfig training;
  double score_threshold = 0.8;
  double high_band = 0.8;
};

std::vector<AblationResult> run_ablation(std::span<const AblationRow> rows, const AblationSetup& setup);
std::string ablation_csv(std::span<const AblationResult> rows);

}  // namespace tbd::analysis
