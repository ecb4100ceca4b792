#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tbd/autodiff.hpp"
#include "tbd/geometry.hpp"
#include "tbd/parameters.hpp"
#include "tbd/scene.hpp"

namespace tbd::toy {

constexpr int kLevels = 2;

struct DetectorConfig {
  int classes = 3;
  int width = 16;           // hidden width of both backbone stages
  int context_radius = 3;   // input cells gathered on each side of a cell
  double extent = 64.0;
  double stride = 4.0;      // level-0 stride; level l uses stride * 2^l

  int input_channels() const { return classes * (2 * context_radius + 1) * (2 * context_radius + 1); }
  int level_size(int level) const;
  geometry::AnchorGrid anchors(int level) const;
  void validate() const;
  bool operator==(const DetectorConfig&) const = default;
};

/// Two affine+tanh backbone stages (the second after 2x2 average pooling)
/// give two feature levels; each level has its own classification head
/// (C logits per cell) and regression head (4 offsets per cell) reading the
/// same level feature.
class DetectorNet {
 public:
  DetectorNet(DetectorConfig config, ParameterSet params);
  static DetectorNet create(const DetectorConfig& config, std::uint64_t seed);

  const DetectorConfig& config() const { return config_; }
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& parameters() { return params_; }
  bool operator==(const DetectorNet&) const = default;

 private:
  DetectorConfig config_;
  ParameterSet params_;
};

struct LevelOutput {
  int level = 0;
  geometry::AnchorGrid anchors;
  ad::Var features;  // (n, n, width)
  ad::Var logits;    // (n, n, classes)
  ad::Var offsets;   // (n, n, 4)
};

/// Each input cell's (2R+1)^2 neighbourhood of every class channel, zero padded.
Grid gather_context(const Grid& input, int radius);

std::vector<LevelOutput> forward(const DetectorConfig& config, const std::map<std::string, ad::Var>& params,
                                 const Grid& context, ad::Graph& graph);
/// Binds the network's parameters into `graph` (trainable under `prefix`, or
/// as constants) and runs one scene.
std::vector<LevelOutput> forward(const DetectorNet& net, const SyntheticScene& scene, ad::Graph& graph,
                                 bool trainable, const std::string& prefix = "");

/// Per-cell BCE on class logits (target: cell centre inside a box of that
/// class) plus mean (1 - IoU) over positive cells, each positive cell assigned
/// to the containing box with the highest IoU.
ad::Var detector_loss(std::span<const LevelOutput> levels, const geometry::GroundTruthSet& truth);

/// Forward values of one level.
struct LevelValues {
  geometry::AnchorGrid anchors;
  Grid features;
  Grid logits;
  Grid offsets;
};

std::vector<LevelValues> predict_levels(const DetectorNet& net, const SyntheticScene& scene);

/// Every cell of every level as a detection scored by sigmoid(max logit),
/// keeping those with score >= score_floor.
std::vector<geometry::Detection> candidates(std::span<const LevelValues> levels, double score_floor);
std::vector<geometry::Detection> detect(const DetectorNet& net, const SyntheticScene& scene, double score_floor,
                                        double nms_iou);

}  // namespace tbd::toy
