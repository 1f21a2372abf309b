#pragma once

// Linear-rate predictions for PDHG and SPDHG on the gated problem.
//
// With μ_g μ_f* = αN, the condition numbers are
//   κ_spdhg = max_i ‖A_i‖² / (αN),   κ_pdhg = ‖(A_1; ...; A_N)‖² / (αN)
// and the per-epoch rates are l(κ_spdhg, N) and l(κ_pdhg, 1), where
//   l(κ, n) = (1 - 2 / (n (1 + √(1 + κ))))^n.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mcir::theory {

inline double rate_l(double kappa, std::size_t n) {
  if (!(kappa >= 0.0)) throw std::invalid_argument("rate_l: kappa must be nonnegative");
  if (n == 0) throw std::invalid_argument("rate_l: n must be >= 1");
  const double per_iteration = 1.0 - 2.0 / (double(n) * (1.0 + std::sqrt(1.0 + kappa)));
  return std::pow(per_iteration, double(n));
}

struct ConditionNumbers {
  double kappa_spdhg = 0.0;
  double kappa_pdhg = 0.0;
};

inline ConditionNumbers condition_numbers(const std::vector<double>& gate_norms_sq, double stacked_norm_sq,
                                          double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("condition_numbers: alpha must be positive");
  if (gate_norms_sq.empty()) throw std::invalid_argument("condition_numbers: no gates");
  const double an = alpha * double(gate_norms_sq.size());
  return {*std::max_element(gate_norms_sq.begin(), gate_norms_sq.end()) / an, stacked_norm_sq / an};
}

struct Rates {
  double r_spdhg = 0.0;
  double r_pdhg = 0.0;
};

inline Rates theorem_rates(double kappa_spdhg, double kappa_pdhg, std::size_t num_gates) {
  return {rate_l(kappa_spdhg, num_gates), rate_l(kappa_pdhg, 1)};
}

struct DominanceReport {
  double kappa = 0.0;
  std::vector<std::size_t> gates;  // N = 2..n_max
  std::vector<bool> holds;         // l(κ/N, N) < l(κ, 1)
  bool verdict = false;
};

/// Evaluates l(κ/N, N) < l(κ, 1) for N = 2..n_max. Reports, never throws, for
/// κ outside the regime where the inequality is expected.
inline DominanceReport dominance_check(double kappa, std::size_t n_max) {
  if (!(kappa >= 0.0)) throw std::invalid_argument("dominance_check: kappa must be nonnegative");
  DominanceReport rep;
  rep.kappa = kappa;
  const double baseline = rate_l(kappa, 1);
  rep.verdict = n_max >= 2;
  for (std::size_t n = 2; n <= n_max; ++n) {
    const bool ok = rate_l(kappa / double(n), n) < baseline;
    rep.gates.push_back(n);
    rep.holds.push_back(ok);
    rep.verdict = rep.verdict && ok;
  }
  return rep;
}

struct ApproximationReport {
  double max_precision = 0.0;    // |max_i ‖A_i‖² / ‖A‖² - 1|
  double stack_precision = 0.0;  // |‖(A_1; ...; A_N)‖² / (N ‖A‖²) - 1|
};

inline ApproximationReport approximation_report(const std::vector<double>& gate_norms_sq, double stacked_norm_sq,
                                                double base_norm_sq) {
  if (!(base_norm_sq > 0.0)) throw std::invalid_argument("approximation_report: base norm must be positive");
  if (gate_norms_sq.empty()) throw std::invalid_argument("approximation_report: no gates");
  const double mx = *std::max_element(gate_norms_sq.begin(), gate_norms_sq.end());
  return {std::abs(mx / base_norm_sq - 1.0),
          std::abs(stacked_norm_sq / (double(gate_norms_sq.size()) * base_norm_sq) - 1.0)};
}

/// Everything the rate comparison needs, from norm estimates.
struct RateReport {
  std::size_t num_gates = 0;
  double alpha = 0.0;
  double kappa_global = 0.0;  // ‖A‖² / α
  double kappa_spdhg = 0.0;
  double kappa_pdhg = 0.0;
  double r_spdhg = 0.0;
  double r_pdhg = 0.0;
  double approx_max_precision = 0.0;
  double approx_stack_precision = 0.0;
  double r_spdhg_approx = 0.0;  // l(κ/N, N)
  double r_pdhg_approx = 0.0;   // l(κ, 1)
  bool dominance = false;       // l(κ/N, N) < l(κ, 1) at this N
  int power_iterations = 0;
  std::uint64_t power_seed = 0;
};

inline RateReport rate_report(const std::vector<double>& gate_norms_sq, double stacked_norm_sq,
                              double base_norm_sq, double alpha, int power_iterations = 0,
                              std::uint64_t power_seed = 0) {
  RateReport r;
  r.num_gates = gate_norms_sq.size();
  r.alpha = alpha;
  const auto kappas = condition_numbers(gate_norms_sq, stacked_norm_sq, alpha);
  r.kappa_global = base_norm_sq / alpha;
  r.kappa_spdhg = kappas.kappa_spdhg;
  r.kappa_pdhg = kappas.kappa_pdhg;
  const auto rates = theorem_rates(r.kappa_spdhg, r.kappa_pdhg, r.num_gates);
  r.r_spdhg = rates.r_spdhg;
  r.r_pdhg = rates.r_pdhg;
  const auto approx = approximation_report(gate_norms_sq, stacked_norm_sq, base_norm_sq);
  r.approx_max_precision = approx.max_precision;
  r.approx_stack_precision = approx.stack_precision;
  r.r_spdhg_approx = rate_l(r.kappa_global / double(r.num_gates), r.num_gates);
  r.r_pdhg_approx = rate_l(r.kappa_global, 1);
  r.dominance = r.r_spdhg_approx < r.r_pdhg_approx;
  r.power_iterations = power_iterations;
  r.power_seed = power_seed;
  return r;
}

}  // namespace mcir::theory
