#pragma once

// 2D parallel-beam ray transform with a matched backprojector.
//
// Coordinates: pixel (r, c) has center u = r - (rows-1)/2 along the rows and
// v = c - (cols-1)/2 along the columns. At angle θ the ray with detector
// coordinate s is { s·(-sinθ, cosθ) + t·(cosθ, sinθ) } in (u, v), so angle 0
// integrates down each column. Bin j has center s_j = (j - (bins-1)/2)·Δ.
//
// Traversal is along the dominant axis of the ray (rows when |cosθ| ≥ |sinθ|,
// columns otherwise). In each traversed row the bin's strip of width Δ/|cosθ|
// is intersected with the pixel intervals, and each pixel is weighted by its
// overlap length divided by Δ. When the strip is one pixel wide this is
// linear interpolation between the two neighbouring pixels; in general it
// keeps the kernel mass exact, so a bin value is the line integral averaged
// over the bin width.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "mcir/grid.hpp"

namespace mcir {

struct Geometry {
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;
  std::size_t num_bins = 0;
  double detector_spacing = 1.0;
  std::vector<double> angles;  // radians, strictly increasing in [0, π)

  std::size_t num_angles() const noexcept { return angles.size(); }
  Shape image_shape() const noexcept { return {image_rows, image_cols}; }
  Shape sinogram_shape() const noexcept { return {angles.size(), num_bins}; }

  void validate() const {
    if (image_rows == 0 || image_cols == 0) throw std::invalid_argument("Geometry: empty image");
    if (angles.empty()) throw std::invalid_argument("Geometry: num_angles must be >= 1");
    if (num_bins == 0) throw std::invalid_argument("Geometry: num_bins must be >= 1");
    if (!(detector_spacing > 0.0) || !std::isfinite(detector_spacing)) {
      throw std::invalid_argument("Geometry: detector spacing must be positive");
    }
    for (std::size_t a = 0; a < angles.size(); ++a) {
      if (!(angles[a] >= 0.0) || !(angles[a] < std::numbers::pi)) {
        throw std::invalid_argument("Geometry: angles must lie in [0, pi)");
      }
      if (a > 0 && !(angles[a] > angles[a - 1])) {
        throw std::invalid_argument("Geometry: angles must be strictly increasing");
      }
    }
  }

  /// Uniform angles k·π/num_angles. When `spacing` is not given the detector
  /// spans the image diagonal.
  static Geometry parallel(std::size_t rows, std::size_t cols, std::size_t num_angles,
                           std::size_t num_bins, double spacing = 0.0) {
    Geometry g;
    g.image_rows = rows;
    g.image_cols = cols;
    g.num_bins = num_bins;
    g.detector_spacing =
        spacing > 0.0 ? spacing
                      : std::hypot(double(rows), double(cols)) / double(std::max<std::size_t>(num_bins, 1));
    g.angles.resize(num_angles);
    for (std::size_t a = 0; a < num_angles; ++a) {
      g.angles[a] = std::numbers::pi * double(a) / double(num_angles);
    }
    g.validate();
    return g;
  }

  /// 100×100 image, 200 angles, 200 bins.
  static Geometry paper() { return parallel(100, 100, 200, 200); }
  /// 64×64 image, 128 angles, 128 bins.
  static Geometry fast() { return parallel(64, 64, 128, 128); }

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

class RayTransform {
 public:
  explicit RayTransform(Geometry geom) : geom_(std::move(geom)) {
    geom_.validate();
    cos_.reserve(geom_.num_angles());
    sin_.reserve(geom_.num_angles());
    for (double a : geom_.angles) {
      // Exact values on the axes keep axis-aligned traversal free of round-off.
      double c = std::cos(a), s = std::sin(a);
      if (std::abs(c) < 1e-15) c = 0.0;
      if (std::abs(s) < 1e-15) s = 0.0;
      cos_.push_back(c);
      sin_.push_back(s);
    }
  }

  const Geometry& geometry() const noexcept { return geom_; }
  Shape domain_shape() const { return geom_.image_shape(); }
  Shape range_shape() const { return geom_.sinogram_shape(); }

  void apply(const Grid& x, Grid& out) const {
    require_shape(x.shape(), domain_shape(), "RayTransform::apply");
    out.reset(range_shape());
    for (std::size_t a = 0; a < geom_.num_angles(); ++a) {
      double* row = out.data() + a * geom_.num_bins;
      traverse(a, [&](std::size_t bin, std::size_t pixel, double w) { row[bin] += w * x[pixel]; });
    }
  }

  void adjoint_apply(const Grid& y, Grid& out) const {
    require_shape(y.shape(), range_shape(), "RayTransform::adjoint_apply");
    out.reset(domain_shape());
    for (std::size_t a = 0; a < geom_.num_angles(); ++a) {
      const double* row = y.data() + a * geom_.num_bins;
      traverse(a, [&](std::size_t bin, std::size_t pixel, double w) { out[pixel] += w * row[bin]; });
    }
  }

  /// Calls visit(bin, pixel_index, weight) for every nonzero weight at angle
  /// index `a`, in a fixed order.
  template <class Visit>
  void traverse(std::size_t a, Visit&& visit) const {
    const double c = cos_[a], s = sin_[a];
    const bool rows_dominant = std::abs(c) >= std::abs(s);
    const std::size_t rows = geom_.image_rows, cols = geom_.image_cols;
    const double row_center = 0.5 * double(rows - 1);
    const double col_center = 0.5 * double(cols - 1);
    const double spacing = geom_.detector_spacing;
    const double bin_center = 0.5 * double(geom_.num_bins - 1);

    // Along the traversed axis index k (coordinate q_k), the ray centre sits
    // at p = s_j·scale + q_k·slope on the other axis, with strip half-width
    // `half` in that axis. Pixel m along the other axis covers [m-½, m+½]
    // in index units (p + other_center).
    const double inv = 1.0 / (rows_dominant ? c : s);
    const double scale_s = rows_dominant ? inv : -inv;
    const double slope = rows_dominant ? s * inv : c * inv;
    const double half = 0.5 * spacing * std::abs(inv);
    const std::size_t steps = rows_dominant ? rows : cols;
    const std::size_t across = rows_dominant ? cols : rows;
    const double step_center = rows_dominant ? row_center : col_center;
    const double across_center = rows_dominant ? col_center : row_center;
    const double inv_spacing = 1.0 / spacing;

    const double shift = std::ceil(2.0 * half + 2.0);  // integral; keeps truncation a floor
    const double upper = double(across) - 0.5;
    for (std::size_t j = 0; j < geom_.num_bins; ++j) {
      const double sj = (double(j) - bin_center) * spacing;
      const double base = sj * scale_s + across_center - step_center * slope;
      // Steps whose strip can touch the grid; the per-step test below stays
      // authoritative, this only trims the loop.
      std::size_t k_begin = 0, k_end = steps;
      if (slope != 0.0) {
        const double a = (-0.5 - half - base) / slope, b = (upper + half - base) / slope;
        const double first = std::floor(std::min(a, b)) - 1.0, last = std::ceil(std::max(a, b)) + 1.0;
        k_begin = first <= 0.0 ? 0 : std::min(steps, std::size_t(first));
        k_end = last < 0.0 ? 0 : std::min(steps, std::size_t(last) + 1);
      }
      for (std::size_t k = k_begin; k < k_end; ++k) {
        const double p = base + double(k) * slope;
        const double lo = p - half, hi = p + half;
        if (hi <= -0.5 || lo >= upper) continue;
        // Pixel m covers [m - ½, m + ½]; start at the pixel containing lo.
        long m = long(lo + 0.5 + shift) - long(shift);
        double left = lo, edge = double(m) + 0.5;
        if (m < 0) {
          m = 0;
          left = -0.5;
          edge = 0.5;
        }
        const std::size_t line = rows_dominant ? k * cols : k;
        const std::size_t stride = rows_dominant ? 1 : cols;
        while (m < long(across)) {
          const double right = hi < edge ? hi : edge;
          const double overlap = right - left;
          if (overlap > 0.0) visit(j, line + std::size_t(m) * stride, overlap * inv_spacing);
          if (hi <= edge) break;
          left = edge;
          edge += 1.0;
          ++m;
        }
      }
    }
  }

 private:
  Geometry geom_;
  std::vector<double> cos_, sin_;
};

inline Sinogram forward(const Geometry& geom, const Image& x) {
  Sinogram out;
  RayTransform(geom).apply(x, out);
  return out;
}

inline Image backproject(const Geometry& geom, const Sinogram& y) {
  Image out;
  RayTransform(geom).adjoint_apply(y, out);
  return out;
}

}  // namespace mcir
