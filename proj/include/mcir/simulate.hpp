#pragma once

// Synthetic gated CT data: phantoms, per-gate motion, projection and
// gate-scaled Gaussian noise d_i = A D_i x + ε_i, ε_i ~ N(0, σ²/N).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcir/grid.hpp"
#include "mcir/linops.hpp"
#include "mcir/motion.hpp"
#include "mcir/projector.hpp"

namespace mcir {

enum class PhantomKind { nested_shells, thorax };

inline std::string to_string(PhantomKind k) { return k == PhantomKind::nested_shells ? "nested_shells" : "thorax"; }

inline PhantomKind phantom_kind_from_string(const std::string& s) {
  if (s == "nested_shells" || s == "walnut") return PhantomKind::nested_shells;
  if (s == "thorax" || s == "chest") return PhantomKind::thorax;
  throw std::invalid_argument("unknown phantom kind '" + s + "'");
}

namespace detail {

inline bool in_ellipse(double x, double y, double cx, double cy, double ax, double ay) {
  const double u = (x - cx) / ax, v = (y - cy) / ay;
  return u * u + v * v <= 1.0;
}

// Intensity at normalized coordinates (x, y) ∈ [-1, 1]², x along columns.
inline double shells_value(double x, double y) {
  const double r = std::hypot(x, y / 0.9);
  const double phi = std::atan2(y, x);
  if (r > 0.85) return 0.0;
  if (r > 0.75) return 0.9;  // shell
  double v = 0.25;           // soft interior
  // Convoluted kernel: a lobed boundary with two hemispheres split by a septum.
  const double lobe = 0.55 * (1.0 + 0.18 * std::sin(5.0 * phi) + 0.07 * std::cos(11.0 * phi));
  if (r < lobe) v = 0.65;
  if (std::abs(x) < 0.035 && r < 0.7) v = 0.9;
  if (r < lobe && std::abs(x) > 0.1 && std::hypot(std::abs(x) - 0.3, y) < 0.12) v = 0.15;
  if (r < 0.08) v = 0.0;
  return v;
}

inline double thorax_value(double x, double y) {
  if (!in_ellipse(x, y, 0.0, 0.0, 0.88, 0.62)) return 0.0;
  double v = 0.55;  // soft tissue
  if (!in_ellipse(x, y, 0.0, 0.0, 0.82, 0.56)) v = 0.45;  // skin / fat layer
  if (in_ellipse(x, y, -0.4, -0.05, 0.27, 0.4) || in_ellipse(x, y, 0.4, -0.05, 0.27, 0.4)) v = 0.08;  // lungs
  if (in_ellipse(x, y, 0.08, 0.08, 0.18, 0.15)) v = 0.65;    // heart
  if (in_ellipse(x, y, 0.0, 0.42, 0.09, 0.09)) v = 1.0;      // spine
  if (in_ellipse(x, y, 0.0, -0.12, 0.05, 0.05)) v = 0.7;     // airway wall
  if (in_ellipse(x, y, 0.0, -0.12, 0.03, 0.03)) v = 0.0;     // airway
  return v;
}

}  // namespace detail

/// Deterministic phantom with values in [0, 1], 4×4 supersampled per pixel.
inline Image make_phantom(PhantomKind kind, std::size_t rows, std::size_t cols) {
  if (rows < 16 || cols < 16) throw std::invalid_argument("make_phantom: grid must be at least 16x16");
  constexpr int sub = 4;
  Image img(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int a = 0; a < sub; ++a) {
        for (int b = 0; b < sub; ++b) {
          const double py = (double(r) + (a + 0.5) / sub) / double(rows) * 2.0 - 1.0;
          const double px = (double(c) + (b + 0.5) / sub) / double(cols) * 2.0 - 1.0;
          acc += kind == PhantomKind::nested_shells ? detail::shells_value(px, py) : detail::thorax_value(px, py);
        }
      }
      img(r, c) = std::clamp(acc / double(sub * sub), 0.0, 1.0);
    }
  }
  return img;
}

/// Lung and surrounding-tissue masks of the thorax phantom (pixel centers).
inline std::pair<std::vector<bool>, std::vector<bool>> thorax_masks(std::size_t rows, std::size_t cols) {
  std::vector<bool> lung(rows * cols), tissue(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double y = (double(r) + 0.5) / double(rows) * 2.0 - 1.0;
      const double x = (double(c) + 0.5) / double(cols) * 2.0 - 1.0;
      const bool l = detail::in_ellipse(x, y, -0.4, -0.05, 0.25, 0.38) || detail::in_ellipse(x, y, 0.4, -0.05, 0.25, 0.38);
      const bool in_body = detail::in_ellipse(x, y, 0.0, 0.0, 0.8, 0.54);
      const bool near_lung = detail::in_ellipse(x, y, -0.4, -0.05, 0.3, 0.43) || detail::in_ellipse(x, y, 0.4, -0.05, 0.3, 0.43);
      lung[r * cols + c] = l;
      tissue[r * cols + c] = in_body && !near_lung && !detail::in_ellipse(x, y, 0.0, 0.42, 0.12, 0.12) &&
                             !detail::in_ellipse(x, y, 0.08, 0.08, 0.21, 0.18) && !detail::in_ellipse(x, y, 0.0, -0.12, 0.07, 0.07);
    }
  }
  return {lung, tissue};
}

/// Counter-based normal deviates: gate g, index m uses Box–Muller on the pair
/// (u(2⌊m/2⌋), u(2⌊m/2⌋+1)) of its substream, where
///   key  = splitmix64(seed + 0x9E3779B97F4A7C15·(g + 1))
///   u(c) = ((splitmix64(key + c) >> 11) + 0.5) · 2⁻⁵³
/// and m even takes the cosine branch, m odd the sine branch.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t substream)
      : key_(splitmix64(seed + 0x9E3779B97F4A7C15ULL * (substream + 1))) {}

  static std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform(std::uint64_t counter) const {
    return (double(splitmix64(key_ + counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal(std::uint64_t index) const {
    const std::uint64_t pair = index / 2;
    const double u1 = uniform(2 * pair), u2 = uniform(2 * pair + 1);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return index % 2 == 0 ? radius * std::cos(angle) : radius * std::sin(angle);
  }

 private:
  std::uint64_t key_;
};

/// Base noise level σ; gate variance is σ²/N. With `relative`, σ = level ×
/// the peak of the noiseless gated sinograms.
struct NoiseModel {
  double level = 0.02;
  bool relative = true;

  static NoiseModel absolute(double sigma) { return {sigma, false}; }
  static NoiseModel relative_to_peak(double fraction) { return {fraction, true}; }
};

struct GatedDataset {
  Geometry geometry;
  PhantomKind phantom = PhantomKind::nested_shells;
  Image truth;  // reference (gate 1) state
  std::vector<MotionParams> motion;
  std::vector<Sinogram> sinograms;
  NoiseModel noise;
  double sigma = 0.0;  // effective base standard deviation
  std::uint64_t seed = 0;

  std::size_t num_gates() const noexcept { return sinograms.size(); }
};

using GatedOperator = Composition<RayTransform, WarpOperator>;

/// A_i = A ∘ D_i. Without motion compensation every D_i is the identity.
inline std::vector<GatedOperator> make_gated_operators(const Geometry& geom, const std::vector<MotionParams>& motion,
                                                       bool motion_compensated = true) {
  const RayTransform ray(geom);
  std::vector<GatedOperator> ops;
  ops.reserve(motion.size());
  for (const auto& m : motion) {
    ops.emplace_back(ray, WarpOperator(motion_compensated ? m : MotionParams::identity(), geom.image_shape()));
  }
  return ops;
}

inline GatedDataset generate(PhantomKind kind, const Image& phantom, const std::vector<MotionParams>& motion,
                             const Geometry& geom, NoiseModel noise, std::uint64_t seed) {
  if (motion.empty()) throw std::invalid_argument("generate: motion list is empty");
  if (!motion.front().is_identity()) throw std::invalid_argument("generate: gate 1 must be the identity");
  require_shape(phantom.shape(), geom.image_shape(), "generate: phantom");
  if (!(noise.level >= 0.0)) throw std::invalid_argument("generate: noise level must be nonnegative");

  GatedDataset ds;
  ds.geometry = geom;
  ds.phantom = kind;
  ds.truth = phantom;
  ds.motion = motion;
  ds.noise = noise;
  ds.seed = seed;

  const auto ops = make_gated_operators(geom, motion);
  double peak = 0.0;
  for (const auto& op : ops) {
    ds.sinograms.push_back(apply(op, phantom));
    for (double v : ds.sinograms.back().values()) peak = std::max(peak, std::abs(v));
  }
  ds.sigma = noise.relative ? noise.level * peak : noise.level;
  if (ds.sigma > 0.0) {
    const double sd = ds.sigma / std::sqrt(double(motion.size()));
    for (std::size_t g = 0; g < ds.sinograms.size(); ++g) {
      const NormalStream stream(seed, g);
      auto vals = ds.sinograms[g].values();
      for (std::size_t m = 0; m < vals.size(); ++m) vals[m] += sd * stream.normal(m);
    }
  }
  return ds;
}

struct Preset {
  std::string name;
  PhantomKind phantom;
  MotionKind motion;
  std::size_t num_gates;
  double magnitude;
  Geometry geometry;
};

/// "rigid": nested shells, 20 gates of rotation + translation.
/// "nonrigid": thorax, 10 gates of dilatation.
/// `fast` selects the 64×64 / 128-angle geometry instead of 100×100 / 200.
inline Preset preset(const std::string& name, bool fast = false) {
  const Geometry geom = fast ? Geometry::fast() : Geometry::paper();
  if (name == "rigid") return {name, PhantomKind::nested_shells, MotionKind::rigid, 20, default_rigid_magnitude, geom};
  if (name == "nonrigid") {
    return {name, PhantomKind::thorax, MotionKind::dilatation, 10, default_dilatation_magnitude, geom};
  }
  throw std::invalid_argument("unknown preset '" + name + "' (expected rigid or nonrigid)");
}

inline GatedDataset generate(const Preset& p, NoiseModel noise, std::uint64_t seed) {
  const Image phantom = make_phantom(p.phantom, p.geometry.image_rows, p.geometry.image_cols);
  return generate(p.phantom, phantom, motion_sequence(p.motion, p.num_gates, p.magnitude), p.geometry, noise, seed);
}

}  // namespace mcir
