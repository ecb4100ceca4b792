#include "tbd/grid.hpp"

#include <algorithm>
#include <numeric>

namespace tbd {

std::string Shape::str() const {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + "x" +
         std::to_string(channels) + ")";
}

Grid Grid::from(Shape shape, std::vector<double> values) {
  Grid g(shape);
  if (values.size() != g.size()) {
    throw std::invalid_argument("Grid::from: " + std::to_string(values.size()) +
                                " values for shape " + shape.str());
  }
  g.data_ = std::move(values);
  return g;
}

double Grid::item() const {
  if (!shape_.is_scalar()) {
    throw std::logic_error("Grid::item on non-scalar grid " + shape_.str());
  }
  return data_.front();
}

double Grid::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

void Grid::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace tbd
