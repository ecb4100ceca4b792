#include "tbd/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tbd/rng.hpp"

namespace tbd::toy {

int ScenarioSpec::grid_size() const { return static_cast<int>(std::lround(extent / cell)); }

void ScenarioSpec::validate() const {
  if (!(extent > 0.0)) throw std::invalid_argument("scenario: extent must be positive");
  if (classes < 2) throw std::invalid_argument("scenario: at least two classes are required");
  if (classes > 255) throw std::invalid_argument("scenario: too many classes");
  if (min_objects < 0 || max_objects < min_objects) {
    throw std::invalid_argument("scenario: object count range is empty");
  }
  if (!(min_size > 0.0) || max_size < min_size) {
    throw std::invalid_argument("scenario: box size range is empty or non-positive");
  }
  if (max_size > extent) throw std::invalid_argument("scenario: boxes larger than the scene are impossible");
  if (noise < 0.0) throw std::invalid_argument("scenario: noise must be non-negative");
  if (!(cell > 0.0) || std::fabs(grid_size() * cell - extent) > 1e-9) {
    throw std::invalid_argument("scenario: cell size must tile the scene extent");
  }
}

SyntheticScene generate_scene(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  SyntheticScene scene;
  scene.seed = seed;
  const int n = spec.grid_size();
  scene.input = Grid(n, n, spec.classes, 0.0);

  const int objects = rng.integer(spec.min_objects, spec.max_objects);
  for (int i = 0; i < objects; ++i) {
    const int label = rng.integer(0, spec.classes - 1);
    const double w = rng.uniform(spec.min_size, spec.max_size);
    const double h = rng.uniform(spec.min_size, spec.max_size);
    const double x = rng.uniform(0.0, spec.extent - w);
    const double y = rng.uniform(0.0, spec.extent - h);
    const geometry::BBox box{x, y, x + w, y + h};
    scene.truth.objects.push_back({box, label});

    const double area = spec.cell * spec.cell;
    for (int r = 0; r < n; ++r) {
      const double cy0 = r * spec.cell;
      const double oy = std::min(box.y2, cy0 + spec.cell) - std::max(box.y1, cy0);
      if (oy <= 0.0) continue;
      for (int c = 0; c < n; ++c) {
        const double cx0 = c * spec.cell;
        const double ox = std::min(box.x2, cx0 + spec.cell) - std::max(box.x1, cx0);
        if (ox <= 0.0) continue;
        double& v = scene.input(r, c, label);
        v = std::max(v, ox * oy / area);
      }
    }
  }
  if (spec.noise > 0.0) {
    for (auto& v : scene.input.values()) v += spec.noise * rng.normal();
  }
  return scene;
}

std::vector<SyntheticScene> generate_dataset(const ScenarioSpec& spec, std::uint64_t base_seed,
                                             int count) {
  if (count < 0) throw std::invalid_argument("generate_dataset: negative scene count");
  std::vector<SyntheticScene> scenes;
  scenes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    scenes.push_back(generate_scene(spec, mix_seed(base_seed, static_cast<std::uint64_t>(i))));
  }
  return scenes;
}

}  // namespace tbd::toy
