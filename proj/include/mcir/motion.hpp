#pragma once

// Displacement operators D_i: image -> image.
//
// A warp resamples the image through the inverse of a similarity map T about
// the image center: (D x)(p) = x(T^{-1}(p)) with bilinear interpolation and
// zero extension outside the grid. Positions use the pixel-center convention
// of the projector, with x along columns and y along rows:
//   rigid:      T(p) = R(rotation)·p + (dx, dy)
//   dilatation: T(p) = scale·p

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcir/grid.hpp"

namespace mcir {

enum class MotionKind { rigid, dilatation };

inline std::string to_string(MotionKind k) { return k == MotionKind::rigid ? "rigid" : "dilatation"; }

inline MotionKind motion_kind_from_string(const std::string& s) {
  if (s == "rigid") return MotionKind::rigid;
  if (s == "dilatation" || s == "nonrigid") return MotionKind::dilatation;
  throw std::invalid_argument("unknown motion kind '" + s + "'");
}

struct MotionParams {
  MotionKind kind = MotionKind::rigid;
  double rotation = 0.0;  // radians
  double dx = 0.0;        // pixels along columns
  double dy = 0.0;        // pixels along rows
  double scale = 1.0;

  static MotionParams identity() { return {}; }
  static MotionParams rigid(double rotation, double dx, double dy) {
    return {MotionKind::rigid, rotation, dx, dy, 1.0};
  }
  static MotionParams dilatation(double scale) { return {MotionKind::dilatation, 0.0, 0.0, 0.0, scale}; }

  bool is_identity() const noexcept { return rotation == 0.0 && dx == 0.0 && dy == 0.0 && scale == 1.0; }

  void validate() const {
    if (!std::isfinite(rotation) || !std::isfinite(dx) || !std::isfinite(dy) || !std::isfinite(scale)) {
      throw std::invalid_argument("MotionParams: non-finite parameter");
    }
    if (!(scale > 0.0)) throw std::invalid_argument("MotionParams: scale must be positive");
    if (kind == MotionKind::rigid && scale != 1.0) {
      throw std::invalid_argument("MotionParams: rigid motion requires scale = 1");
    }
    if (kind == MotionKind::dilatation && (rotation != 0.0 || dx != 0.0 || dy != 0.0)) {
      throw std::invalid_argument("MotionParams: dilatation takes no rotation or translation");
    }
  }

  friend bool operator==(const MotionParams&, const MotionParams&) = default;
};

/// Terminal-state defaults for motion_sequence.
inline constexpr double default_rigid_magnitude = 0.15;     // radians at the last gate
inline constexpr double default_dilatation_magnitude = 0.04;  // last gate scale 1.04

/// Linear ramp from the identity (gate 1) to the terminal state. Rigid motion
/// reaches rotation `magnitude` and translation (5, 3)·(magnitude / 0.15) px
/// (so (5, 3) px at the default magnitude); dilatation reaches scale
/// 1 + magnitude.
inline std::vector<MotionParams> motion_sequence(MotionKind kind, std::size_t num_gates, double magnitude) {
  if (num_gates == 0) throw std::invalid_argument("motion_sequence: num_gates must be >= 1");
  std::vector<MotionParams> seq;
  seq.reserve(num_gates);
  for (std::size_t i = 0; i < num_gates; ++i) {
    const double t = num_gates == 1 ? 0.0 : double(i) / double(num_gates - 1);
    if (kind == MotionKind::rigid) {
      const double shift = magnitude / default_rigid_magnitude;
      seq.push_back(MotionParams::rigid(t * magnitude, t * 5.0 * shift, t * 3.0 * shift));
    } else {
      seq.push_back(MotionParams::dilatation(1.0 + t * magnitude));
    }
  }
  return seq;
}

class WarpOperator {
 public:
  WarpOperator(MotionParams params, Shape grid) : params_(params), grid_(grid) {
    params_.validate();
    build();
  }

  const MotionParams& params() const noexcept { return params_; }
  Shape domain_shape() const { return grid_; }
  Shape range_shape() const { return grid_; }

  void apply(const Grid& x, Grid& out) const {
    require_shape(x.shape(), grid_, "WarpOperator::apply");
    if (params_.is_identity()) {
      out = x;
      return;
    }
    out.reset(grid_);
    for (std::size_t p = 0; p < grid_.size(); ++p) {
      const Stencil& st = stencils_[p];
      double acc = 0.0;
      for (int k = 0; k < st.count; ++k) acc += st.weight[k] * x[st.source[k]];
      out[p] = acc;
    }
  }

  void adjoint_apply(const Grid& y, Grid& out) const {
    require_shape(y.shape(), grid_, "WarpOperator::adjoint_apply");
    if (params_.is_identity()) {
      out = y;
      return;
    }
    out.reset(grid_);
    for (std::size_t p = 0; p < grid_.size(); ++p) {
      const Stencil& st = stencils_[p];
      for (int k = 0; k < st.count; ++k) out[st.source[k]] += st.weight[k] * y[p];
    }
  }

 private:
  // Bilinear source pixels of one output pixel.
  struct Stencil {
    std::array<std::size_t, 4> source{};
    std::array<double, 4> weight{};
    int count = 0;
  };

  static double snap(double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
  }

  void build() {
    stencils_.assign(grid_.size(), Stencil{});
    const double rc = 0.5 * double(grid_.rows - 1), cc = 0.5 * double(grid_.cols - 1);
    const double cr = std::cos(params_.rotation), sr = std::sin(params_.rotation);
    const double inv_scale = 1.0 / params_.scale;
    for (std::size_t r = 0; r < grid_.rows; ++r) {
      for (std::size_t c = 0; c < grid_.cols; ++c) {
        // T^{-1}(p) = R^T (p - t) / scale
        const double px = double(c) - cc - params_.dx;
        const double py = double(r) - rc - params_.dy;
        const double sx = snap((cr * px + sr * py) * inv_scale + cc);
        const double sy = snap((-sr * px + cr * py) * inv_scale + rc);
        const double fx = std::floor(sx), fy = std::floor(sy);
        const double wx = sx - fx, wy = sy - fy;
        Stencil& st = stencils_[r * grid_.cols + c];
        const double wts[4] = {(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx};
        const double ys[4] = {fy, fy, fy + 1, fy + 1};
        const double xs[4] = {fx, fx + 1, fx, fx + 1};
        for (int k = 0; k < 4; ++k) {
          if (wts[k] == 0.0) continue;
          if (ys[k] < 0 || xs[k] < 0 || ys[k] > double(grid_.rows - 1) || xs[k] > double(grid_.cols - 1)) continue;
          st.source[st.count] = std::size_t(ys[k]) * grid_.cols + std::size_t(xs[k]);
          st.weight[st.count] = wts[k];
          ++st.count;
        }
      }
    }
  }

  MotionParams params_;
  Shape grid_;
  std::vector<Stencil> stencils_;
};

inline Image warp_apply(const WarpOperator& op, const Image& x) {
  Image out;
  op.apply(x, out);
  return out;
}

inline Image warp_adjoint(const WarpOperator& op, const Image& y) {
  Image out;
  op.adjoint_apply(y, out);
  return out;
}

}  // namespace mcir
