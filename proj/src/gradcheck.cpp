#include "tbd/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace tbd::ad {

GradCheckReport finite_difference_check(Graph& graph, Var output, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");
  graph.evaluate();
  const auto grads = graph.backpropagate(output);
  const auto base_signature = graph.branch_signature();

  GradCheckReport report;
  for (Var in : graph.trainable_inputs()) {
    const std::string& name = graph.name(in);
    const Grid& analytic = grads.at(name);
    const Grid original = graph.value(in);
    for (std::size_t i = 0; i < original.size(); ++i) {
      Grid probe = original;
      probe[i] = original[i] + step;
      graph.set_input(in, probe);
      graph.evaluate();
      const double up = graph.value(output).item();
      bool flipped = graph.branch_signature() != base_signature;

      probe[i] = original[i] - step;
      graph.set_input(in, probe);
      graph.evaluate();
      const double down = graph.value(output).item();
      flipped = flipped || graph.branch_signature() != base_signature;

      graph.set_input(in, original);
      if (flipped) {
        ++report.tie_flips;
        continue;
      }
      ++report.coordinates;
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::fabs(analytic[i] - numeric) / std::max(1e-12, std::fabs(numeric));
      if (err > report.max_relative_error || report.coordinates == 1) {
        if (err >= report.max_relative_error) {
          report.max_relative_error = err;
          report.worst_input = name;
          report.worst_index = i;
          report.worst_analytic = analytic[i];
          report.worst_numeric = numeric;
        }
      }
    }
  }
  graph.evaluate();
  graph.backpropagate(output);
  return report;
}

}  // namespace tbd::ad
