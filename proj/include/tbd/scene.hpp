#pragma once

#include <cstdint>
#include <vector>

#include "tbd/geometry.hpp"
#include "tbd/grid.hpp"

namespace tbd::toy {

struct ScenarioSpec {
  double extent = 64.0;  // square scene, scene units
  int classes = 3;
  int min_objects = 1;
  int max_objects = 4;
  double min_size = 12.0;
  double max_size = 28.0;
  double noise = 0.05;    // std-dev of additive Gaussian noise on the input grid
  double cell = 4.0;      // input grid resolution (scene units per cell)

  int grid_size() const;
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

/// Coarse "image": per input cell, the fraction of the cell covered by an
/// object of each class (one channel per class), plus noise.
struct SyntheticScene {
  std::uint64_t seed = 0;
  Grid input;
  geometry::GroundTruthSet truth;
};

SyntheticScene generate_scene(const ScenarioSpec& spec, std::uint64_t seed);

/// Scenes seeded by mix_seed(base_seed, i) for i in [0, count).
std::vector<SyntheticScene> generate_dataset(const ScenarioSpec& spec, std::uint64_t base_seed,
                                             int count);

}  // namespace tbd::toy
