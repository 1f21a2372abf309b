#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcir {

/// Dimensions of a 2D row-major grid.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  constexpr std::size_t size() const noexcept { return rows * cols; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(Shape s) {
  return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_shape(Shape actual, Shape expected, const char* what) {
  if (actual != expected) {
    throw ShapeError(std::string(what) + ": expected shape " + to_string(expected) +
                     ", got " + to_string(actual));
  }
}

/// Row-major field of doubles. Images are indexed (row, col); sinograms are
/// indexed (angle, bin).
class Grid {
 public:
  Grid() = default;
  explicit Grid(Shape shape, double fill = 0.0) : shape_(shape), values_(shape.size(), fill) {}
  Grid(std::size_t rows, std::size_t cols, double fill = 0.0) : Grid(Shape{rows, cols}, fill) {}
  Grid(Shape shape, std::vector<double> values) : shape_(shape), values_(std::move(values)) {
    if (values_.size() != shape_.size()) {
      throw ShapeError("grid value count " + std::to_string(values_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  Shape shape() const noexcept { return shape_; }
  std::size_t rows() const noexcept { return shape_.rows; }
  std::size_t cols() const noexcept { return shape_.cols; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * shape_.cols + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return values_[r * shape_.cols + c];
  }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  /// Resizes to `shape` and zeroes every entry, reusing storage.
  void reset(Shape shape) {
    shape_ = shape;
    values_.assign(shape.size(), 0.0);
  }
  void fill(double v) noexcept { std::fill(values_.begin(), values_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  Shape shape_{};
  std::vector<double> values_;
};

/// The primal variable: pixel values on an image grid.
using Image = Grid;
/// Data, dual and noise blocks: (angle, bin) grids.
using Sinogram = Grid;

inline double dot(const Grid& a, const Grid& b) {
  require_shape(b.shape(), a.shape(), "dot");
  return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

inline double squared_norm(const Grid& a) { return dot(a, a); }
inline double norm(const Grid& a) { return std::sqrt(squared_norm(a)); }

inline double squared_distance(const Grid& a, const Grid& b) {
  require_shape(b.shape(), a.shape(), "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// y += a * x
inline void axpy(double a, const Grid& x, Grid& y) {
  require_shape(x.shape(), y.shape(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void scale(Grid& x, double a) noexcept {
  for (double& v : x.values()) v *= a;
}

inline Grid operator+(Grid a, const Grid& b) {
  axpy(1.0, b, a);
  return a;
}
inline Grid operator-(Grid a, const Grid& b) {
  axpy(-1.0, b, a);
  return a;
}
inline Grid operator*(double s, Grid a) {
  scale(a, s);
  return a;
}

}  // namespace mcir
