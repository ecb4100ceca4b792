#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tbd/gradcheck.hpp"

namespace tbd {

/// Finite-difference results for one loss over several random points.
struct GradientSuiteEntry {
  std::string loss;
  int points = 0;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t tie_flips = 0;
  ad::GradCheckReport worst;
};

/// Checks hd_loss_uniform, hd_loss_weighted (through p_c, p_r, decode and
/// IoU), fpn_mimic_loss, tfd_fixed, tfd_dynamic (student features, adaptive
/// layers and generator parameters) and detector_loss (every network
/// parameter) at `points` random configurations each.
std::vector<GradientSuiteEntry> run_gradient_suite(std::uint64_t seed, int points = 20, double step = 1e-5);

}  // namespace tbd
