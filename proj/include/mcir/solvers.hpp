#pragma once

// Stochastic primal-dual hybrid gradient over gates, with deterministic PDHG
// as the full-sampling special case, and a conjugate-gradient reference for
// the saddle point.
//
// Iteration k (θ, τ, σ_i, p_i fixed):
//   x    <- prox_{τg}(x - τ z̄)
//   draw S with P(i ∈ S) = p_i
//   y_i  <- prox_{σ_i f_i*}(y_i + σ_i A_i x)         for i ∈ S
//   z    <- z + Σ_{i∈S} A_i*(y_i^new - y_i^old)
//   z̄    <- z + Σ_{i∈S} (θ/p_i) A_i*(y_i^new - y_i^old)
// so z = Σ_i A_i* y_i at all times.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcir/functionals.hpp"
#include "mcir/grid.hpp"
#include "mcir/linops.hpp"
#include "mcir/record.hpp"

namespace mcir {

enum class Mode { pdhg, spdhg };
enum class Sampling { full, serial_uniform };

inline std::string to_string(Mode m) { return m == Mode::pdhg ? "pdhg" : "spdhg"; }

inline Mode mode_from_string(const std::string& s) {
  if (s == "pdhg") return Mode::pdhg;
  if (s == "spdhg") return Mode::spdhg;
  throw std::invalid_argument("unknown algorithm '" + s + "'");
}

/// Gated operators A_i, their data fits f_i and the regularization weight α.
template <LinearOperator Op>
struct GatedProblem {
  std::vector<Op> ops;
  std::vector<GatedQuadraticFit> fits;
  double alpha = 0.0;

  GatedProblem(std::vector<Op> operators, const std::vector<Sinogram>& data, double alpha_)
      : ops(std::move(operators)), alpha(alpha_) {
    if (ops.empty()) throw std::invalid_argument("GatedProblem: no gates");
    if (data.size() != ops.size()) throw std::invalid_argument("GatedProblem: operator/data count mismatch");
    for (std::size_t i = 0; i < ops.size(); ++i) {
      require_shape(ops[i].domain_shape(), ops.front().domain_shape(), "GatedProblem: operator domain");
      require_shape(data[i].shape(), ops[i].range_shape(), "GatedProblem: data block");
      if (!data[i].all_finite()) throw std::invalid_argument("GatedProblem: non-finite data");
      fits.push_back({ops.size(), data[i]});
    }
  }

  std::size_t num_gates() const noexcept { return ops.size(); }
  Shape image_shape() const { return ops.front().domain_shape(); }

  double objective(const Image& x) const {
    double total = alpha * squared_norm(x);
    Sinogram ax;
    for (std::size_t i = 0; i < ops.size(); ++i) {
      ops[i].apply(x, ax);
      total += fits[i].value(ax);
    }
    return total;
  }
};

struct SolverConfig {
  Mode mode = Mode::spdhg;
  Sampling sampling = Sampling::serial_uniform;
  std::vector<double> sigma;  // per gate
  double tau = 0.0;
  double theta = 1.0;
  std::vector<double> probs;  // P(i ∈ S)
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  double rho = 0.99;

  std::size_t num_gates() const noexcept { return sigma.size(); }
};

/// Step-size admissibility against operator norm estimates.
///   spdhg (serial): σ_i τ ‖A_i‖² ≤ ρ² p_i for every gate
///   pdhg (full):    τ · max_i σ_i · ‖(A_1; ...; A_N)‖² ≤ ρ²
inline void check_admissible(const SolverConfig& c, const std::vector<double>& gate_norms,
                             double stacked_norm) {
  const std::size_t n = c.num_gates();
  if (n == 0) throw std::invalid_argument("SolverConfig: no gates");
  if (c.probs.size() != n || gate_norms.size() != n) {
    throw std::invalid_argument("SolverConfig: per-gate vectors have inconsistent lengths");
  }
  if (!(c.tau > 0.0)) throw std::invalid_argument("SolverConfig: tau must be positive");
  if (!(c.theta > 0.0 && c.theta <= 1.0)) throw std::invalid_argument("SolverConfig: theta must lie in (0, 1]");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(c.sigma[i] > 0.0)) throw std::invalid_argument("SolverConfig: sigma must be positive");
    if (!(c.probs[i] > 0.0 && c.probs[i] <= 1.0)) throw std::invalid_argument("SolverConfig: probabilities must lie in (0, 1]");
  }
  if (c.mode == Mode::pdhg) {
    if (c.sampling != Sampling::full) throw std::invalid_argument("SolverConfig: pdhg requires full sampling");
    for (double p : c.probs) {
      if (p != 1.0) throw std::invalid_argument("SolverConfig: pdhg requires p_i = 1");
    }
  }
  const double slack = 1.0 + 1e-12;
  const double bound = c.rho * c.rho;
  if (c.sampling == Sampling::full) {
    const double smax = *std::max_element(c.sigma.begin(), c.sigma.end());
    if (c.tau * smax * stacked_norm * stacked_norm > bound * slack) {
      throw std::invalid_argument("SolverConfig: step sizes violate tau*sigma*||A||^2 <= rho^2");
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (c.sigma[i] * c.tau * gate_norms[i] * gate_norms[i] > bound * c.probs[i] * slack) {
        throw std::invalid_argument("SolverConfig: step sizes violate sigma_i*tau*||A_i||^2 <= rho^2*p_i at gate " +
                                    std::to_string(i));
      }
    }
  }
}

/// Balanced step sizes with γ = √(μ_g / μ_f*) and ρ = 0.99, θ = 1.
///   spdhg: p_i = 1/N, σ_i = γρ/‖A_i‖, τ = ρ / (γ max_i(‖A_i‖/p_i))
///   pdhg:  p_i = 1,   σ_i = γρ/‖A‖,   τ = ρ / (γ ‖A‖), ‖A‖ the stacked norm
inline SolverConfig default_config(Mode mode, const std::vector<double>& gate_norms, double stacked_norm,
                                   double alpha, std::size_t epochs, std::uint64_t seed) {
  const std::size_t n = gate_norms.size();
  if (n == 0) throw std::invalid_argument("default_config: no gates");
  for (double a : gate_norms) {
    if (!(a > 0.0)) throw std::invalid_argument("default_config: operator norms must be positive");
  }
  if (mode == Mode::pdhg && !(stacked_norm > 0.0)) {
    throw std::invalid_argument("default_config: stacked norm must be positive");
  }
  const Moduli mu = moduli(alpha, n);
  const double gamma = std::sqrt(mu.mu_g / mu.mu_fstar);

  SolverConfig c;
  c.mode = mode;
  c.epochs = epochs;
  c.seed = seed;
  c.theta = 1.0;
  if (mode == Mode::pdhg) {
    c.sampling = Sampling::full;
    c.probs.assign(n, 1.0);
    c.sigma.assign(n, gamma * c.rho / stacked_norm);
    c.tau = c.rho / (gamma * stacked_norm);
  } else {
    c.sampling = Sampling::serial_uniform;
    c.probs.assign(n, 1.0 / double(n));
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      c.sigma.push_back(gamma * c.rho / gate_norms[i]);
      worst = std::max(worst, gate_norms[i] / c.probs[i]);
    }
    c.tau = c.rho / (gamma * worst);
  }
  check_admissible(c, gate_norms, stacked_norm);
  return c;
}

/// Draws the updated gate subset S each iteration.
class GateSampler {
 public:
  GateSampler(Sampling sampling, std::size_t num_gates, std::uint64_t seed)
      : sampling_(sampling), num_gates_(num_gates), gen_(seed), pick_(0, num_gates - 1) {
    if (num_gates == 0) throw std::invalid_argument("GateSampler: num_gates must be >= 1");
  }

  std::vector<std::size_t> draw() {
    std::vector<std::size_t> s;
    if (sampling_ == Sampling::full) {
      s.resize(num_gates_);
      for (std::size_t i = 0; i < num_gates_; ++i) s[i] = i;
      return s;
    }
    while (s.empty()) s.push_back(pick_(gen_));
    return s;
  }

 private:
  Sampling sampling_;
  std::size_t num_gates_;
  std::mt19937_64 gen_;
  std::uniform_int_distribution<std::size_t> pick_;
};

struct SolverState {
  Image x;
  std::vector<Sinogram> y;
  Image z;
  Image zbar;
  std::uint64_t k = 0;
  std::uint64_t gate_updates = 0;  // Σ_k |S_k|
  std::uint64_t fwd_calls = 0;
  std::uint64_t adj_calls = 0;

  double epoch() const noexcept { return y.empty() ? 0.0 : double(gate_updates) / double(y.size()); }
};

/// x = z = z̄ = 0, y = 0.
template <LinearOperator Op>
SolverState initial_state(const GatedProblem<Op>& problem) {
  SolverState s;
  s.x.reset(problem.image_shape());
  s.z.reset(problem.image_shape());
  s.zbar.reset(problem.image_shape());
  for (const auto& op : problem.ops) s.y.emplace_back(op.range_shape());
  return s;
}

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::uint64_t iteration, const std::string& what)
      : std::runtime_error("divergence at iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  std::uint64_t iteration() const noexcept { return iteration_; }

 private:
  std::uint64_t iteration_;
};

/// One iteration; S is supplied by the caller.
template <LinearOperator Op>
void step(SolverState& s, const SolverConfig& c, const GatedProblem<Op>& problem,
          const std::vector<std::size_t>& subset) {
  if (subset.empty()) throw std::invalid_argument("step: empty gate subset");
  for (std::size_t i = 0; i < s.x.size(); ++i) s.x[i] -= c.tau * s.zbar[i];
  s.x = prox_g(problem.alpha, c.tau, std::move(s.x));
  if (!s.x.all_finite()) throw DivergenceError(s.k, "non-finite primal iterate");

  Image extrapolation(s.x.shape());
  Sinogram ax, v;
  Image back;
  for (std::size_t i : subset) {
    problem.ops[i].apply(s.x, ax);
    ++s.fwd_calls;
    v = s.y[i];
    axpy(c.sigma[i], ax, v);
    Sinogram updated = prox_fstar(problem.fits[i], c.sigma[i], std::move(v));
    if (!updated.all_finite()) throw DivergenceError(s.k, "non-finite dual iterate at gate " + std::to_string(i));
    Sinogram delta = updated - s.y[i];
    problem.ops[i].adjoint_apply(delta, back);
    ++s.adj_calls;
    axpy(1.0, back, s.z);
    axpy(c.theta / c.probs[i], back, extrapolation);
    s.y[i] = std::move(updated);
  }
  s.zbar = s.z + extrapolation;
  ++s.k;
  s.gate_updates += subset.size();
}

template <LinearOperator Op>
void step(SolverState& s, const SolverConfig& c, const GatedProblem<Op>& problem, GateSampler& sampler) {
  step(s, c, problem, sampler.draw());
}

/// (x*, y*) with y*_i = (2/N)(A_i x* - d_i).
struct SaddlePoint {
  enum class Source { cg_reference, long_pdhg };

  Image x_star;
  std::vector<Sinogram> y_star;
  Source source = Source::cg_reference;
  bool converged = false;
  std::size_t iterations = 0;
  double residual = 0.0;  // relative residual of the normal equations
};

inline std::string to_string(SaddlePoint::Source s) {
  return s == SaddlePoint::Source::cg_reference ? "cg_reference" : "long_pdhg";
}

/// ‖(x, y) - (x*, y*)‖².
inline double saddle_distance_sq(const Image& x, const std::vector<Sinogram>& y, const SaddlePoint& sp) {
  if (y.size() != sp.y_star.size()) throw std::invalid_argument("saddle_distance_sq: gate count mismatch");
  double d = squared_distance(x, sp.x_star);
  for (std::size_t i = 0; i < y.size(); ++i) d += squared_distance(y[i], sp.y_star[i]);
  return d;
}

template <LinearOperator Op>
std::vector<Sinogram> dual_from_primal(const GatedProblem<Op>& problem, const Image& x) {
  std::vector<Sinogram> y(problem.num_gates());
  const double c = 2.0 / double(problem.num_gates());
  for (std::size_t i = 0; i < problem.num_gates(); ++i) {
    problem.ops[i].apply(x, y[i]);
    axpy(-1.0, problem.fits[i].data, y[i]);
    scale(y[i], c);
  }
  return y;
}

/// Relative optimality residuals of a candidate saddle point:
/// primal ‖2αx* + Σ A_i* y*_i‖ / ‖x*‖ and dual max_i ‖y*_i - (2/N)(A_i x* - d_i)‖ / ‖y*_i‖.
struct OptimalityResidual {
  double primal = 0.0;
  double dual = 0.0;
};

template <LinearOperator Op>
OptimalityResidual optimality_residual(const GatedProblem<Op>& problem, const SaddlePoint& sp) {
  OptimalityResidual r;
  Image g = 2.0 * problem.alpha * sp.x_star;
  Image back;
  for (std::size_t i = 0; i < problem.num_gates(); ++i) {
    problem.ops[i].adjoint_apply(sp.y_star[i], back);
    axpy(1.0, back, g);
  }
  const double xn = norm(sp.x_star);
  r.primal = xn > 0.0 ? norm(g) / xn : norm(g);
  const auto expected = dual_from_primal(problem, sp.x_star);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const double yn = norm(sp.y_star[i]);
    const double e = std::sqrt(squared_distance(expected[i], sp.y_star[i]));
    r.dual = std::max(r.dual, yn > 0.0 ? e / yn : e);
  }
  return r;
}

/// Conjugate gradient on (αI + N^{-1} Σ A_i*A_i) x = N^{-1} Σ A_i* d_i until
/// the residual is ≤ tol relative to the right-hand side.
template <LinearOperator Op>
SaddlePoint cg_reference(const GatedProblem<Op>& problem, double tol, std::size_t max_iter) {
  if (!(problem.alpha > 0.0)) throw std::invalid_argument("cg_reference: alpha must be positive");
  const double inv_n = 1.0 / double(problem.num_gates());
  const Shape shape = problem.image_shape();
  Sinogram fwd;
  Image back;

  auto normal_apply = [&](const Image& v, Image& out) {
    out = problem.alpha * v;
    for (const auto& op : problem.ops) {
      op.apply(v, fwd);
      op.adjoint_apply(fwd, back);
      axpy(inv_n, back, out);
    }
  };

  Image rhs(shape);
  for (std::size_t i = 0; i < problem.num_gates(); ++i) {
    problem.ops[i].adjoint_apply(problem.fits[i].data, back);
    axpy(inv_n, back, rhs);
  }

  SaddlePoint sp;
  sp.source = SaddlePoint::Source::cg_reference;
  sp.x_star.reset(shape);
  const double rhs_norm = norm(rhs);
  if (rhs_norm == 0.0) {
    sp.y_star = dual_from_primal(problem, sp.x_star);
    sp.converged = true;
    return sp;
  }

  Image r = rhs, p = rhs, hp;
  double rr = squared_norm(r);
  sp.residual = std::sqrt(rr) / rhs_norm;
  while (sp.residual > tol && sp.iterations < max_iter) {
    normal_apply(p, hp);
    const double a = rr / dot(p, hp);
    axpy(a, p, sp.x_star);
    axpy(-a, hp, r);
    const double rr_next = squared_norm(r);
    const double b = rr_next / rr;
    rr = rr_next;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + b * p[i];
    ++sp.iterations;
    sp.residual = std::sqrt(rr) / rhs_norm;
  }
  // Report the true residual rather than the recursively updated one.
  normal_apply(sp.x_star, hp);
  sp.residual = std::sqrt(squared_distance(hp, rhs)) / rhs_norm;
  sp.converged = sp.residual <= tol;
  sp.y_star = dual_from_primal(problem, sp.x_star);
  return sp;
}

/// Saddle point read off a solver state (e.g. the end of a long PDHG run).
inline SaddlePoint saddle_from_state(const SolverState& s) {
  SaddlePoint sp;
  sp.x_star = s.x;
  sp.y_star = s.y;
  sp.source = SaddlePoint::Source::long_pdhg;
  sp.converged = true;
  sp.iterations = s.k;
  return sp;
}

struct RunOptions {
  const SaddlePoint* saddle = nullptr;  // enables dist_sq logging
  const Image* truth = nullptr;         // enables rmse_to_truth logging
  double divergence_factor = 1e6;       // abort when O(x) exceeds this × O(0)
  // Stop early once an epoch moves (x, y) by at most this much relative to
  // its size. 0 runs every epoch.
  double stationary_tol = 0.0;
  // Objective logging costs N forward applications per epoch; without it the
  // divergence guard only sees non-finite iterates.
  bool log_objective = true;
  std::function<void(const SolverState&)> on_epoch;
};

struct RunResult {
  Image x;
  ConvergenceRecord record;
  SolverState state;
};

inline double rmse(const Image& a, const Image& b) {
  require_shape(b.shape(), a.shape(), "rmse");
  if (a.size() == 0) return 0.0;
  return std::sqrt(squared_distance(a, b) / double(a.size()));
}

/// Runs `config.epochs` epochs; one epoch is one full-sampling iteration or N
/// serial iterations, i.e. N forward and N adjoint gate applications either
/// way. Logs one row per epoch.
template <LinearOperator Op>
RunResult run(const SolverConfig& config, const GatedProblem<Op>& problem, const RunOptions& options = {}) {
  if (config.num_gates() != problem.num_gates() || config.probs.size() != problem.num_gates()) {
    throw std::invalid_argument("run: config does not match the number of gates");
  }
  if (config.mode == Mode::pdhg && config.sampling != Sampling::full) {
    throw std::invalid_argument("run: pdhg requires full sampling");
  }
  RunResult result;
  result.state = initial_state(problem);
  std::optional<SolverState> previous;
  SolverState& s = result.state;
  GateSampler sampler(config.sampling, problem.num_gates(), config.seed);
  const std::size_t per_epoch = config.sampling == Sampling::full ? 1 : problem.num_gates();
  const double initial_objective = options.log_objective ? problem.objective(s.x) : 0.0;

  for (std::size_t e = 0; e < config.epochs; ++e) {
    if (options.stationary_tol > 0.0) previous = s;
    for (std::size_t it = 0; it < per_epoch; ++it) step(s, config, problem, sampler);
    ConvergenceRow row;
    row.epoch = s.epoch();
    if (options.log_objective) {
      row.objective = problem.objective(s.x);
      if (!std::isfinite(row.objective) ||
          (initial_objective > 0.0 && row.objective > options.divergence_factor * initial_objective)) {
        throw DivergenceError(s.k, "objective " + std::to_string(row.objective) + " exceeds " +
                                       std::to_string(options.divergence_factor) + "x its initial value");
      }
    }
    if (options.saddle) row.dist_sq = saddle_distance_sq(s.x, s.y, *options.saddle);
    if (options.truth) row.rmse_to_truth = rmse(s.x, *options.truth);
    row.fwd_calls = s.fwd_calls;
    row.adj_calls = s.adj_calls;
    result.record.push_back(row);
    if (options.on_epoch) options.on_epoch(s);
    if (previous) {
      const SaddlePoint last = saddle_from_state(*previous);
      const double moved = saddle_distance_sq(s.x, s.y, last);
      double size = squared_norm(s.x);
      for (const auto& y : s.y) size += squared_norm(y);
      if (moved <= options.stationary_tol * options.stationary_tol * size) break;
    }
  }
  result.x = s.x;
  return result;
}

}  // namespace mcir
