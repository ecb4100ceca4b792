#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tbd {

/// Shape of a dense grid: rows x cols spatial cells, each holding `channels` reals.
struct Shape {
  int rows = 1;
  int cols = 1;
  int channels = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(rows) * cols * channels;
  }
  std::size_t cells() const { return static_cast<std::size_t>(rows) * cols; }
  bool is_scalar() const { return rows == 1 && cols == 1 && channels == 1; }
  bool operator==(const Shape&) const = default;

  std::string str() const;
};

/// Row-major (row, col, channel) storage of 64-bit reals.
class Grid {
 public:
  Grid() = default;
  explicit Grid(Shape shape, double fill = 0.0)
      : shape_(shape), data_(shape.size(), fill) {
    if (shape.rows <= 0 || shape.cols <= 0 || shape.channels <= 0) {
      throw std::invalid_argument("Grid: non-positive dimension in " + shape.str());
    }
  }
  Grid(int rows, int cols, int channels, double fill = 0.0)
      : Grid(Shape{rows, cols, channels}, fill) {}

  static Grid scalar(double v) { return Grid(Shape{1, 1, 1}, v); }
  static Grid from(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int rows() const { return shape_.rows; }
  int cols() const { return shape_.cols; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c, int k = 0) { return data_[index(r, c, k)]; }
  double operator()(int r, int c, int k = 0) const { return data_[index(r, c, k)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int r, int c, int k = 0) const {
    return (static_cast<std::size_t>(r) * shape_.cols + c) * shape_.channels + k;
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& vector() const { return data_; }

  double item() const;
  double sum() const;
  void fill(double v);

  bool operator==(const Grid&) const = default;

 private:
  Shape shape_{};
  std::vector<double> data_;
};

}  // namespace tbd
