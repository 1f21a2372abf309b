#pragma once

// Glue between a dataset and the solvers: operator norms, α from a target
// condition number, problem assembly and rate reports.

#include <cmath>
#include <vector>

#include "mcir/linops.hpp"
#include "mcir/simulate.hpp"
#include "mcir/solvers.hpp"
#include "mcir/theory.hpp"

namespace mcir {

struct NormSummary {
  double base_norm = 0.0;           // ‖A‖
  std::vector<double> gate_norms;   // ‖A_i‖
  double stacked_norm_sq = 0.0;     // ‖(A_1; ...; A_N)‖²
  PowerOptions options;

  std::vector<double> gate_norms_sq() const {
    std::vector<double> sq;
    for (double n : gate_norms) sq.push_back(n * n);
    return sq;
  }
  double stacked_norm() const { return std::sqrt(stacked_norm_sq); }
};

inline NormSummary compute_norms(const Geometry& geom, const std::vector<GatedOperator>& ops,
                                 const PowerOptions& options = {}) {
  NormSummary s;
  s.options = options;
  s.base_norm = power_method(RayTransform(geom), options).norm;
  for (const auto& op : ops) s.gate_norms.push_back(power_method(op, options).norm);
  s.stacked_norm_sq = stacked_norm_sq(ops, options);
  return s;
}

/// α = ‖A‖² / κ.
inline double alpha_from_kappa(double base_norm, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  return base_norm * base_norm / kappa;
}

inline GatedProblem<GatedOperator> make_problem(const GatedDataset& ds, double alpha, bool motion_compensated = true) {
  return GatedProblem<GatedOperator>(make_gated_operators(ds.geometry, ds.motion, motion_compensated), ds.sinograms,
                                     alpha);
}

inline theory::RateReport rate_report(const NormSummary& norms, double alpha) {
  return theory::rate_report(norms.gate_norms_sq(), norms.stacked_norm_sq, norms.base_norm * norms.base_norm, alpha,
                             norms.options.iterations, norms.options.seed);
}

inline SolverConfig default_config(Mode mode, const NormSummary& norms, double alpha, std::size_t epochs,
                                   std::uint64_t seed) {
  return default_config(mode, norms.gate_norms, norms.stacked_norm(), alpha, epochs, seed);
}

}  // namespace mcir
