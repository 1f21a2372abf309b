#pragma once

// Linear operator contract and generic combinators.
//
// An operator is any type with
//   Shape domain_shape() const;  Shape range_shape() const;
//   void apply(const Grid& x, Grid& out) const;          // out = A x
//   void adjoint_apply(const Grid& y, Grid& out) const;  // out = A* y
// `out` is overwritten (reshaped to the range/domain as needed). The inner
// product on both spaces is the unweighted Euclidean one on raveled grids.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mcir/grid.hpp"

namespace mcir {

template <class Op>
concept LinearOperator = requires(const Op& op, const Grid& in, Grid& out) {
  { op.domain_shape() } -> std::same_as<Shape>;
  { op.range_shape() } -> std::same_as<Shape>;
  op.apply(in, out);
  op.adjoint_apply(in, out);
};

template <LinearOperator Op>
Grid apply(const Op& op, const Grid& x) {
  Grid out;
  op.apply(x, out);
  return out;
}

template <LinearOperator Op>
Grid adjoint_apply(const Op& op, const Grid& y) {
  Grid out;
  op.adjoint_apply(y, out);
  return out;
}

/// Identity on a fixed grid.
class IdentityMap {
 public:
  explicit IdentityMap(Shape shape) : shape_(shape) {}
  Shape domain_shape() const { return shape_; }
  Shape range_shape() const { return shape_; }
  void apply(const Grid& x, Grid& out) const {
    require_shape(x.shape(), shape_, "IdentityMap::apply");
    out = x;
  }
  void adjoint_apply(const Grid& y, Grid& out) const {
    require_shape(y.shape(), shape_, "IdentityMap::adjoint_apply");
    out = y;
  }

 private:
  Shape shape_;
};

/// Elementwise multiplication by fixed weights (self-adjoint).
class DiagonalMap {
 public:
  explicit DiagonalMap(Grid weights) : weights_(std::move(weights)) {}
  Shape domain_shape() const { return weights_.shape(); }
  Shape range_shape() const { return weights_.shape(); }
  void apply(const Grid& x, Grid& out) const {
    require_shape(x.shape(), weights_.shape(), "DiagonalMap::apply");
    out.reset(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = weights_[i] * x[i];
  }
  void adjoint_apply(const Grid& y, Grid& out) const { apply(y, out); }

 private:
  Grid weights_;
};

/// outer ∘ inner.
template <LinearOperator Outer, LinearOperator Inner>
class Composition {
 public:
  Composition(Outer outer, Inner inner) : outer_(std::move(outer)), inner_(std::move(inner)) {
    if (inner_.range_shape() != outer_.domain_shape()) {
      throw ShapeError("compose: inner range " + to_string(inner_.range_shape()) +
                       " does not match outer domain " + to_string(outer_.domain_shape()));
    }
  }

  Shape domain_shape() const { return inner_.domain_shape(); }
  Shape range_shape() const { return outer_.range_shape(); }

  void apply(const Grid& x, Grid& out) const {
    Grid tmp;
    inner_.apply(x, tmp);
    outer_.apply(tmp, out);
  }
  void adjoint_apply(const Grid& y, Grid& out) const {
    Grid tmp;
    outer_.adjoint_apply(y, tmp);
    inner_.adjoint_apply(tmp, out);
  }

  const Outer& outer() const noexcept { return outer_; }
  const Inner& inner() const noexcept { return inner_; }

 private:
  Outer outer_;
  Inner inner_;
};

template <LinearOperator Outer, LinearOperator Inner>
Composition<Outer, Inner> compose(Outer outer, Inner inner) {
  return Composition<Outer, Inner>(std::move(outer), std::move(inner));
}

/// Row-stacking (A_1; ...; A_N) of blocks sharing a domain. Block ranges must
/// share a column count; the stacked range concatenates their rows.
template <LinearOperator Op>
class StackedMap {
 public:
  explicit StackedMap(std::vector<Op> blocks) : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw std::invalid_argument("StackedMap: empty block list");
    const Shape dom = blocks_.front().domain_shape();
    const std::size_t cols = blocks_.front().range_shape().cols;
    for (const auto& b : blocks_) {
      require_shape(b.domain_shape(), dom, "StackedMap: block domain");
      if (b.range_shape().cols != cols) {
        throw ShapeError("StackedMap: block ranges must share a column count");
      }
      range_rows_ += b.range_shape().rows;
    }
  }

  Shape domain_shape() const { return blocks_.front().domain_shape(); }
  Shape range_shape() const { return {range_rows_, blocks_.front().range_shape().cols}; }
  std::size_t num_blocks() const noexcept { return blocks_.size(); }
  const std::vector<Op>& blocks() const noexcept { return blocks_; }

  void apply(const Grid& x, Grid& out) const {
    out.reset(range_shape());
    Grid part;
    std::size_t offset = 0;
    for (const auto& b : blocks_) {
      b.apply(x, part);
      std::copy(part.values().begin(), part.values().end(), out.values().begin() + offset);
      offset += part.size();
    }
  }

  void adjoint_apply(const Grid& y, Grid& out) const {
    require_shape(y.shape(), range_shape(), "StackedMap::adjoint_apply");
    out.reset(domain_shape());
    Grid part, back;
    std::size_t offset = 0;
    for (const auto& b : blocks_) {
      const Shape rs = b.range_shape();
      part.reset(rs);
      std::copy_n(y.values().begin() + offset, rs.size(), part.values().begin());
      offset += rs.size();
      b.adjoint_apply(part, back);
      axpy(1.0, back, out);
    }
  }

 private:
  std::vector<Op> blocks_;
  std::size_t range_rows_ = 0;
};

/// Σ_i A_i* A_i as a self-adjoint operator on the common domain; avoids
/// allocating the stacked range.
template <LinearOperator Op>
class GramSum {
 public:
  explicit GramSum(const std::vector<Op>& blocks) : blocks_(&blocks) {
    if (blocks.empty()) throw std::invalid_argument("GramSum: empty block list");
    for (const auto& b : blocks) {
      require_shape(b.domain_shape(), blocks.front().domain_shape(), "GramSum: block domain");
    }
  }
  Shape domain_shape() const { return blocks_->front().domain_shape(); }
  Shape range_shape() const { return domain_shape(); }
  void apply(const Grid& x, Grid& out) const {
    out.reset(domain_shape());
    Grid fwd, back;
    for (const auto& b : *blocks_) {
      b.apply(x, fwd);
      b.adjoint_apply(fwd, back);
      axpy(1.0, back, out);
    }
  }
  void adjoint_apply(const Grid& y, Grid& out) const { apply(y, out); }

 private:
  const std::vector<Op>* blocks_;
};

struct NormEstimate {
  double norm = 0.0;         // √(Rayleigh quotient of A*A)
  int iterations = 0;        // iterations actually performed
  bool converged = false;    // relative Rayleigh change ≤ tolerance was reached
  bool degenerate = false;   // A*A annihilated the start vector
  std::vector<double> rayleigh;  // quotient after each iteration
};

struct PowerOptions {
  int iterations = 100;
  std::uint64_t seed = 0;
  double tolerance = 1e-10;
};

/// Seeded standard-normal start vector.
inline Grid random_grid(Shape shape, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  Grid g(shape);
  for (double& v : g.values()) v = normal(gen);
  return g;
}

namespace detail {

// Power iteration for a positive semi-definite map; returns the last Rayleigh
// quotient in `est.norm`.
template <class Gram>
NormEstimate rayleigh_iteration(Gram&& gram, Shape shape, const PowerOptions& options) {
  if (options.iterations < 1) throw std::invalid_argument("power_method: iterations must be >= 1");
  NormEstimate est;
  Grid v = random_grid(shape, options.seed);
  scale(v, 1.0 / norm(v));
  Grid w;
  double quotient = 0.0;
  for (int k = 0; k < options.iterations; ++k) {
    gram(v, w);
    const double next = dot(v, w);  // ‖v‖ = 1
    ++est.iterations;
    const double wn = norm(w);
    if (wn == 0.0) {
      est.degenerate = true;
      quotient = 0.0;
      est.rayleigh.push_back(0.0);
      break;
    }
    const bool settled = k > 0 && std::abs(next - quotient) <= options.tolerance * std::abs(next);
    quotient = next;
    est.rayleigh.push_back(next);
    if (settled) {
      est.converged = true;
      break;
    }
    v = std::move(w);
    scale(v, 1.0 / wn);
  }
  est.norm = std::max(quotient, 0.0);
  return est;
}

}  // namespace detail

/// Operator norm estimate ‖A‖ by power iteration on A*A from a seeded random
/// start. Deterministic in (op, options).
template <LinearOperator Op>
NormEstimate power_method(const Op& op, const PowerOptions& options = {}) {
  Grid av;
  auto est = detail::rayleigh_iteration(
      [&](const Grid& v, Grid& w) {
        op.apply(v, av);
        op.adjoint_apply(av, w);
      },
      op.domain_shape(), options);
  est.norm = std::sqrt(est.norm);
  return est;
}

/// ‖(A_1; ...; A_N)‖² = λ_max(Σ_i A_i* A_i), by power iteration on the Gram sum.
template <LinearOperator Op>
double stacked_norm_sq(const std::vector<Op>& blocks, const PowerOptions& options = {}) {
  const GramSum<Op> gram(blocks);
  return detail::rayleigh_iteration([&](const Grid& v, Grid& w) { gram.apply(v, w); },
                                    gram.domain_shape(), options)
      .norm;
}

}  // namespace mcir
