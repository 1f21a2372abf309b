#pragma once

// The quadratic model
//   O(x) = g(x) + Σ_i f_i(A_i x),   g(x) = α‖x‖²,   f_i(y) = N^{-1}‖y - d_i‖²,
// with the proximal maps used by the primal-dual solvers.

#include <stdexcept>
#include <vector>

#include "mcir/grid.hpp"
#include "mcir/linops.hpp"

namespace mcir {

/// g(x) = α‖x‖².
struct Tikhonov {
  double alpha = 0.0;

  double value(const Image& x) const { return alpha * squared_norm(x); }
};

/// f(y) = N^{-1}‖y - d‖² on sinogram space.
struct GatedQuadraticFit {
  std::size_t num_gates = 1;
  Sinogram data;

  double value(const Sinogram& y) const { return squared_distance(y, data) / double(num_gates); }

  /// f*(w) = (N/4)‖w‖² + ⟨w, d⟩.
  double conjugate(const Sinogram& w) const {
    return 0.25 * double(num_gates) * squared_norm(w) + dot(w, data);
  }
};

/// argmin_u ½‖u - v‖² + τ·α‖u‖² = v / (1 + 2ατ).
inline Image prox_g(double alpha, double tau, Image v) {
  if (tau < 0.0) throw std::invalid_argument("prox_g: tau must be nonnegative");
  if (tau == 0.0) return v;
  scale(v, 1.0 / (1.0 + 2.0 * alpha * tau));
  return v;
}

/// prox of σ f* for f(y) = N^{-1}‖y - d‖²: (v - σ d) / (1 + σ N / 2).
inline Sinogram prox_fstar(const GatedQuadraticFit& fit, double sigma, Sinogram v) {
  if (sigma < 0.0) throw std::invalid_argument("prox_fstar: sigma must be nonnegative");
  if (sigma == 0.0) return v;
  require_shape(v.shape(), fit.data.shape(), "prox_fstar");
  const double denom = 1.0 / (1.0 + 0.5 * sigma * double(fit.num_gates));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - sigma * fit.data[i]) * denom;
  return v;
}

/// prox of τ f: (v + (2τ/N) d) / (1 + 2τ/N).
inline Sinogram prox_f(const GatedQuadraticFit& fit, double tau, Sinogram v) {
  if (tau < 0.0) throw std::invalid_argument("prox_f: tau must be nonnegative");
  require_shape(v.shape(), fit.data.shape(), "prox_f");
  const double c = 2.0 * tau / double(fit.num_gates);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] + c * fit.data[i]) / (1.0 + c);
  return v;
}

/// Strong-convexity moduli of g and of each f_i*.
struct Moduli {
  double mu_g = 0.0;
  double mu_fstar = 0.0;
};

inline Moduli moduli(double alpha, std::size_t num_gates) {
  if (!(alpha > 0.0)) throw std::invalid_argument("moduli: alpha must be positive");
  if (num_gates == 0) throw std::invalid_argument("moduli: num_gates must be >= 1");
  return {2.0 * alpha, 0.5 * double(num_gates)};
}

/// α‖x‖² + Σ_i N^{-1}‖A_i x - d_i‖².
template <LinearOperator Op>
double objective(double alpha, const std::vector<Op>& ops, const std::vector<Sinogram>& data,
                 const Image& x) {
  if (ops.size() != data.size()) throw std::invalid_argument("objective: operator/data count mismatch");
  const double n = double(ops.size());
  double total = alpha * squared_norm(x);
  Sinogram ax;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    ops[i].apply(x, ax);
    total += squared_distance(ax, data[i]) / n;
  }
  return total;
}

}  // namespace mcir
