#pragma once

#include <cstddef>
#include <string>

#include "tbd/autodiff.hpp"

namespace tbd::ad {

struct GradCheckReport {
  /// max over coordinates of |analytic - numeric| / max(1e-12, |numeric|)
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  /// Coordinates skipped because a perturbation changed a max/min/clamp/abs
  /// branch (a kink was crossed).
  std::size_t tie_flips = 0;
  std::string worst_input;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares backpropagated gradients of `output` against central differences
/// for every coordinate of every trainable input. Restores the bindings and
/// forward values before returning.
GradCheckReport finite_difference_check(Graph& graph, Var output, double step = 1e-5);

}  // namespace tbd::ad
