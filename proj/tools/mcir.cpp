// mcir: simulate gated CT data, compute references, reconstruct, report rates
// and run the rigid / non-rigid experiments end to end.
//
// Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mcir/mcir.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mcir;

namespace {

Geometry geometry_for(const std::string& size) {
  if (size == "fast") return Geometry::fast();
  if (size == "tiny") return Geometry::parallel(32, 32, 48, 48);
  return Geometry::paper();
}

Preset preset_for(const std::string& name, const std::string& size) {
  Preset p = preset(name);
  p.geometry = geometry_for(size);
  return p;
}

struct Norms {
  NormSummary summary;
  double alpha = 0.0;
};

Norms norms_for(const GatedDataset& ds, double kappa, bool motion_compensated) {
  Norms n;
  n.summary = compute_norms(ds.geometry, make_gated_operators(ds.geometry, ds.motion, motion_compensated));
  n.alpha = alpha_from_kappa(n.summary.base_norm, kappa);
  return n;
}

json norms_json(const Norms& n) {
  return {{"alpha", n.alpha},
          {"base_norm", n.summary.base_norm},
          {"gate_norms", n.summary.gate_norms},
          {"stacked_norm_sq", n.summary.stacked_norm_sq},
          {"power_iterations", n.summary.options.iterations},
          {"power_seed", n.summary.options.seed}};
}

json config_json(const SolverConfig& c) {
  return {{"algo", to_string(c.mode)},
          {"sampling", c.sampling == Sampling::full ? "full" : "serial_uniform"},
          {"sigma", c.sigma},
          {"tau", c.tau},
          {"theta", c.theta},
          {"probs", c.probs},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"rho", c.rho}};
}

void write_image(const fs::path& dir, const std::string& stem, const Image& x) {
  io::write_raster(dir / (stem + ".f64"), x);
  io::write_pgm16(dir / (stem + ".pgm"), x);
}

// The saddle point must belong to the same problem.
void check_saddle(const json& meta, const SaddlePoint& sp, double alpha, bool motion_compensated,
                  const GatedDataset& ds) {
  if (sp.y_star.size() != ds.num_gates() || sp.x_star.shape() != ds.geometry.image_shape()) {
    throw std::runtime_error("saddle point does not match the dataset's gates or image shape");
  }
  if (meta.contains("alpha") && std::abs(meta.at("alpha").get<double>() - alpha) > 1e-12 * alpha) {
    throw std::runtime_error("saddle point was computed for alpha " + io::format_double(meta.at("alpha").get<double>()) +
                             ", this run uses " + io::format_double(alpha) + " (check --kappa)");
  }
  if (meta.contains("motion_compensated") && meta.at("motion_compensated").get<bool>() != motion_compensated) {
    throw std::runtime_error("saddle point and this run disagree on --no-mc");
  }
}

// ------------------------------------------------------------------ commands

struct PhantomArgs {
  std::string phantom = "nested_shells";
  std::string size = "paper";
  std::string out;
};

int cmd_phantom(const PhantomArgs& a) {
  const Geometry g = geometry_for(a.size);
  const PhantomKind kind = phantom_kind_from_string(a.phantom);
  const Image x = make_phantom(kind, g.image_rows, g.image_cols);
  const fs::path out(a.out);
  write_image(out, "phantom", x);
  io::write_file(out / "manifest.json",
                 io::dump({{"command", "phantom"},
                           {"phantom", to_string(kind)},
                           {"size", a.size},
                           {"rows", g.image_rows},
                           {"cols", g.image_cols},
                           {"files", {"phantom.f64", "phantom.pgm"}}}));
  std::printf("wrote %s phantom (%zux%zu) to %s\n", to_string(kind).c_str(), g.image_rows, g.image_cols,
              out.string().c_str());
  return 0;
}

struct SimulateArgs {
  std::string preset;
  std::string phantom;
  std::string motion;
  std::size_t gates = 0;
  double magnitude = -1.0;
  double sigma = 0.02;
  bool absolute = false;
  std::uint64_t seed = 0;
  std::string size = "paper";
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  Preset p;
  if (!a.preset.empty()) {
    p = preset_for(a.preset, a.size);
  } else {
    p.name = "custom";
    p.phantom = phantom_kind_from_string(a.phantom);
    p.motion = p.phantom == PhantomKind::thorax ? MotionKind::dilatation : MotionKind::rigid;
    p.num_gates = p.phantom == PhantomKind::thorax ? 10 : 20;
    p.geometry = geometry_for(a.size);
  }
  if (!a.motion.empty()) p.motion = motion_kind_from_string(a.motion);
  if (a.gates > 0) p.num_gates = a.gates;
  p.magnitude = a.magnitude >= 0.0 ? a.magnitude
                : p.motion == MotionKind::rigid ? default_rigid_magnitude
                                                : default_dilatation_magnitude;
  const NoiseModel noise = a.absolute ? NoiseModel::absolute(a.sigma) : NoiseModel::relative_to_peak(a.sigma);
  const GatedDataset ds = generate(p, noise, a.seed);
  const fs::path out(a.out);
  io::write_dataset(out, ds,
                    {{"command",
                      {{"name", "simulate"},
                       {"preset", p.name},
                       {"motion_kind", to_string(p.motion)},
                       {"magnitude", p.magnitude},
                       {"size", a.size},
                       {"sigma", a.sigma},
                       {"absolute", a.absolute},
                       {"seed", a.seed}}}});
  io::write_pgm16(out / "truth.pgm", ds.truth);
  std::printf("wrote %zu gate sinograms (%zux%zu) to %s, noise sd %s per gate\n", ds.num_gates(),
              ds.geometry.num_angles(), ds.geometry.num_bins, out.string().c_str(),
              io::format_double(ds.sigma / std::sqrt(double(ds.num_gates()))).c_str());
  return 0;
}

struct ReferenceArgs {
  std::string data;
  double kappa = 70.0;
  double tol = 1e-10;
  std::size_t max_iter = 2000;
  bool no_mc = false;
  std::string out;
};

int cmd_reference(const ReferenceArgs& a) {
  const GatedDataset ds = io::read_dataset(a.data);
  const bool mc = !a.no_mc;
  const Norms n = norms_for(ds, a.kappa, mc);
  const auto problem = make_problem(ds, n.alpha, mc);
  const SaddlePoint sp = cg_reference(problem, a.tol, a.max_iter);
  const auto res = optimality_residual(problem, sp);
  const fs::path out(a.out);
  io::write_saddle(out, sp,
                   {{"command", "reference"},
                    {"data", fs::absolute(a.data).lexically_normal().string()},
                    {"kappa", a.kappa},
                    {"alpha", n.alpha},
                    {"motion_compensated", mc},
                    {"tol", a.tol},
                    {"max_iter", a.max_iter},
                    {"norms", norms_json(n)},
                    {"optimality", {{"primal", res.primal}, {"dual", res.dual}}},
                    {"rmse_to_truth", rmse(sp.x_star, ds.truth)}});
  io::write_pgm16(out / "x_star.pgm", sp.x_star);
  std::printf("cg: %zu iterations, residual %s (%s), rmse to truth %s\n", sp.iterations,
              io::format_double(sp.residual).c_str(), sp.converged ? "converged" : "NOT converged",
              io::format_double(rmse(sp.x_star, ds.truth)).c_str());
  return sp.converged ? 0 : 1;
}

struct ReconstructArgs {
  std::string data;
  std::string algo = "spdhg";
  std::size_t epochs = 30;
  double kappa = 70.0;
  std::uint64_t seed = 0;
  bool no_mc = false;
  std::string saddle;
  std::string out;
};

int cmd_reconstruct(const ReconstructArgs& a) {
  const GatedDataset ds = io::read_dataset(a.data);
  const bool mc = !a.no_mc;
  const Norms n = norms_for(ds, a.kappa, mc);
  const auto problem = make_problem(ds, n.alpha, mc);
  std::optional<SaddlePoint> sp;
  if (!a.saddle.empty()) {
    sp = io::read_saddle(a.saddle);
    check_saddle(io::read_json(fs::path(a.saddle) / "saddle.json"), *sp, n.alpha, mc, ds);
  }
  const SolverConfig config = default_config(mode_from_string(a.algo), n.summary, n.alpha, a.epochs, a.seed);
  RunOptions opts;
  opts.truth = &ds.truth;
  if (sp) opts.saddle = &*sp;
  const RunResult res = run(config, problem, opts);

  const fs::path out(a.out);
  write_image(out, "reconstruction", res.x);
  io::write_csv(out / "convergence.csv", res.record);
  json m = {{"command", "reconstruct"},
            {"data", fs::absolute(a.data).lexically_normal().string()},
            {"kappa", a.kappa},
            {"motion_compensated", mc},
            {"saddle", a.saddle.empty() ? json(nullptr) : json(fs::absolute(a.saddle).lexically_normal().string())},
            {"norms", norms_json(n)},
            {"config", config_json(config)},
            {"fwd_calls", res.state.fwd_calls},
            {"adj_calls", res.state.adj_calls},
            {"rmse_to_truth", rmse(res.x, ds.truth)},
            {"files", {"reconstruction.f64", "reconstruction.pgm", "convergence.csv"}}};
  if (sp) m["rmse_to_saddle"] = rmse(res.x, sp->x_star);
  io::write_file(out / "manifest.json", io::dump(m));
  std::printf("%s, %zu epochs: rmse to truth %s", a.algo.c_str(), a.epochs,
              io::format_double(rmse(res.x, ds.truth)).c_str());
  if (sp && !res.record.empty()) std::printf(", dist_sq %s", io::format_double(res.record.back().dist_sq).c_str());
  std::printf("\n");
  return 0;
}

struct RatesArgs {
  std::string data;
  double kappa = 70.0;
  std::string out;
};

void print_report(const theory::RateReport& r) {
  std::printf("gates                   %zu\n", r.num_gates);
  std::printf("alpha                   %.6g\n", r.alpha);
  std::printf("kappa (||A||^2/alpha)   %.6g\n", r.kappa_global);
  std::printf("kappa_spdhg             %.6g\n", r.kappa_spdhg);
  std::printf("kappa_pdhg              %.6g\n", r.kappa_pdhg);
  std::printf("r_spdhg                 %.6f\n", r.r_spdhg);
  std::printf("r_pdhg                  %.6f\n", r.r_pdhg);
  std::printf("approx max precision    %.4f\n", r.approx_max_precision);
  std::printf("approx stack precision  %.4f\n", r.approx_stack_precision);
  std::printf("l(kappa/N, N)           %.6f\n", r.r_spdhg_approx);
  std::printf("l(kappa, 1)             %.6f\n", r.r_pdhg_approx);
  std::printf("dominance               %s\n", r.dominance ? "spdhg faster" : "not established");
}

int cmd_rates(const RatesArgs& a) {
  const GatedDataset ds = io::read_dataset(a.data);
  const Norms n = norms_for(ds, a.kappa, true);
  const auto report = rate_report(n.summary, n.alpha);
  print_report(report);
  const fs::path out = a.out.empty() ? fs::path(a.data) : fs::path(a.out);
  io::write_file(out / "rates.json", io::dump({{"command", "rates"},
                                                {"data", fs::absolute(a.data).lexically_normal().string()},
                                                {"kappa", a.kappa},
                                                {"norms", norms_json(n)},
                                                {"report", io::to_json(report)}}));
  return 0;
}

struct ExperimentArgs {
  std::string preset = "rigid";
  std::size_t epochs = 60;
  std::size_t seeds = 10;
  double kappa = 70.0;
  double sigma = 0.02;
  std::uint64_t data_seed = 1;
  std::size_t snapshot = 30;
  std::string size = "paper";
  std::string out;
};

std::string trajectory_rows(const std::string& algo, std::uint64_t seed, const ConvergenceRecord& rec) {
  std::string s;
  for (const auto& r : rec) s += algo + "," + std::to_string(seed) + "," + io::csv_row(r) + "\n";
  return s;
}

int cmd_experiment(const ExperimentArgs& a) {
  const Preset p = preset_for(a.preset, a.size);
  const GatedDataset ds = generate(p, NoiseModel::relative_to_peak(a.sigma), a.data_seed);
  const fs::path out(a.out);
  io::write_dataset(out / "data", ds);
  write_image(out, "truth", ds.truth);
  write_image(out, "truth_last_gate", warp_apply(WarpOperator(ds.motion.back(), ds.geometry.image_shape()), ds.truth));

  const Norms n = norms_for(ds, a.kappa, true);
  const auto report = rate_report(n.summary, n.alpha);
  std::printf("[%s] predicted rates: spdhg %.4f, pdhg %.4f\n", a.preset.c_str(), report.r_spdhg, report.r_pdhg);

  const auto problem = make_problem(ds, n.alpha, true);
  const auto problem_nomc = make_problem(ds, n.alpha, false);
  const SaddlePoint sp = cg_reference(problem, 1e-14, 2000);
  const SaddlePoint sp_nomc = cg_reference(problem_nomc, 1e-14, 2000);
  if (!sp.converged || !sp_nomc.converged) throw std::runtime_error("reference solve did not converge");
  write_image(out, "x_mc_star", sp.x_star);
  write_image(out, "x_nomc_star", sp_nomc.x_star);
  std::printf("[%s] references: rmse to truth MC %.4f, no-MC %.4f\n", a.preset.c_str(), rmse(sp.x_star, ds.truth),
              rmse(sp_nomc.x_star, ds.truth));

  std::string trajectories = "algo,seed," + std::string(io::csv_header) + "\n";
  std::string fits = "algo,seed,rate,log_intercept,r_squared,first_epoch,last_epoch,rmse_to_mc_star_at_snapshot\n";
  json runs = json::array();
  auto one = [&](Mode mode, std::uint64_t seed) {
    const SolverConfig c = default_config(mode, n.summary, n.alpha, a.epochs, seed);
    RunOptions opts;
    opts.saddle = &sp;
    opts.truth = &ds.truth;
    std::optional<Image> snap;
    opts.on_epoch = [&](const SolverState& s) {
      if (std::llround(s.epoch()) == std::llround(double(a.snapshot))) snap = s.x;
    };
    const RunResult res = run(c, problem, opts);
    trajectories += trajectory_rows(to_string(mode), seed, res.record);
    const double snap_rmse = snap ? rmse(*snap, sp.x_star) : std::numeric_limits<double>::quiet_NaN();
    std::optional<io::RateFit> fit;
    if (a.epochs >= 9) fit = io::fit_rate(res.record, 5.0, double(a.epochs));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    fits += to_string(mode) + "," + std::to_string(seed) + "," + io::format_double(fit ? fit->rate : nan) + "," +
            io::format_double(fit ? fit->log_intercept : nan) + "," + io::format_double(fit ? fit->r_squared : nan) +
            "," + io::format_double(fit ? fit->first_epoch : nan) + "," +
            io::format_double(fit ? fit->last_epoch : nan) + "," + io::format_double(snap_rmse) + "\n";
    runs.push_back({{"config", config_json(c)}, {"rate", fit ? json(fit->rate) : json(nullptr)}});
    if (snap && (mode == Mode::pdhg || seed == 1)) write_image(out, to_string(mode) + "_snapshot", *snap);
    if (fit) {
      std::printf("[%s] %s seed %llu: empirical rate %.4f (R^2 %.4f)\n", a.preset.c_str(), to_string(mode).c_str(),
                  static_cast<unsigned long long>(seed), fit->rate, fit->r_squared);
    }
    std::fflush(stdout);
  };
  one(Mode::pdhg, 0);
  for (std::uint64_t s = 1; s <= a.seeds; ++s) one(Mode::spdhg, s);

  io::write_file(out / "trajectories.csv", trajectories);
  io::write_file(out / "fits.csv", fits);
  io::write_file(out / "manifest.json",
                 io::dump({{"command", "experiment"},
                           {"preset", a.preset},
                           {"size", a.size},
                           {"epochs", a.epochs},
                           {"seeds", a.seeds},
                           {"kappa", a.kappa},
                           {"sigma", a.sigma},
                           {"data_seed", a.data_seed},
                           {"snapshot_epoch", a.snapshot},
                           {"norms", norms_json(n)},
                           {"rates", io::to_json(report)},
                           {"reference", {{"mc_iterations", sp.iterations}, {"nomc_iterations", sp_nomc.iterations}}},
                           {"rmse_to_truth", {{"mc", rmse(sp.x_star, ds.truth)}, {"nomc", rmse(sp_nomc.x_star, ds.truth)}}},
                           {"runs", runs}}));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-compensated gated tomographic reconstruction with PDHG / SPDHG"};
  app.require_subcommand(1);

  const auto sizes = CLI::IsMember({"paper", "fast", "tiny"});
  const auto presets = CLI::IsMember({"rigid", "nonrigid"});
  const auto phantoms = CLI::IsMember({"nested_shells", "walnut", "thorax", "chest"});

  PhantomArgs pa;
  auto* phantom = app.add_subcommand("phantom", "write a phantom image");
  phantom->add_option("--phantom", pa.phantom, "nested_shells|thorax")->check(phantoms)->capture_default_str();
  phantom->add_option("--size", pa.size, "paper (100x100) | fast (64x64) | tiny (32x32)")->check(sizes)->capture_default_str();
  phantom->add_option("--out", pa.out, "output directory")->required();

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "simulate a gated dataset");
  auto* sp_opt = simulate->add_option("--preset", sa.preset, "rigid|nonrigid")->check(presets);
  auto* ph_opt = simulate->add_option("--phantom", sa.phantom, "nested_shells|thorax")->check(phantoms);
  sp_opt->excludes(ph_opt);
  simulate->add_option("--motion", sa.motion, "rigid|dilatation")->check(CLI::IsMember({"rigid", "dilatation", "nonrigid"}));
  simulate->add_option("--gates", sa.gates, "number of gates N")->check(CLI::PositiveNumber);
  simulate->add_option("--magnitude", sa.magnitude, "terminal motion magnitude")->check(CLI::NonNegativeNumber);
  simulate->add_option("--sigma", sa.sigma, "noise level, relative to the sinogram peak")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  simulate->add_flag("--absolute", sa.absolute, "treat --sigma as an absolute standard deviation");
  simulate->add_option("--seed", sa.seed, "noise seed")->capture_default_str();
  simulate->add_option("--size", sa.size, "paper|fast|tiny")->check(sizes)->capture_default_str();
  simulate->add_option("--out", sa.out, "output directory")->required();

  ReferenceArgs ra;
  auto* reference = app.add_subcommand("reference", "compute the saddle point by conjugate gradients");
  reference->add_option("--data", ra.data, "dataset directory")->required();
  reference->add_option("--kappa", ra.kappa, "alpha = ||A||^2 / kappa")->check(CLI::PositiveNumber)->capture_default_str();
  reference->add_option("--tol", ra.tol, "relative residual tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  reference->add_option("--max-iter", ra.max_iter, "iteration cap")->check(CLI::PositiveNumber)->capture_default_str();
  reference->add_flag("--no-mc", ra.no_mc, "replace every warp by the identity");
  reference->add_option("--out", ra.out, "output directory")->required();

  ReconstructArgs ca;
  auto* reconstruct = app.add_subcommand("reconstruct", "run pdhg or spdhg");
  reconstruct->add_option("--data", ca.data, "dataset directory")->required();
  reconstruct->add_option("--algo", ca.algo, "pdhg|spdhg")->check(CLI::IsMember({"pdhg", "spdhg"}))->capture_default_str();
  reconstruct->add_option("--epochs", ca.epochs, "epochs (N gate updates each)")->capture_default_str();
  reconstruct->add_option("--kappa", ca.kappa, "alpha = ||A||^2 / kappa")->check(CLI::PositiveNumber)->capture_default_str();
  reconstruct->add_option("--seed", ca.seed, "sampling seed")->capture_default_str();
  reconstruct->add_flag("--no-mc", ca.no_mc, "replace every warp by the identity");
  reconstruct->add_option("--saddle", ca.saddle, "reference directory for distance logging");
  reconstruct->add_option("--out", ca.out, "output directory")->required();

  RatesArgs ta;
  auto* rates = app.add_subcommand("rates", "predicted linear rates from operator norms");
  rates->add_option("--data", ta.data, "dataset directory")->required();
  rates->add_option("--kappa", ta.kappa, "alpha = ||A||^2 / kappa")->check(CLI::PositiveNumber)->capture_default_str();
  rates->add_option("--out", ta.out, "directory for rates.json (default: the dataset directory)");

  ExperimentArgs ea;
  auto* experiment = app.add_subcommand("experiment", "simulate, solve and compare across seeds");
  experiment->add_option("--preset", ea.preset, "rigid|nonrigid")->check(presets)->capture_default_str();
  experiment->add_option("--epochs", ea.epochs, "epochs per run")->check(CLI::PositiveNumber)->capture_default_str();
  experiment->add_option("--seeds", ea.seeds, "number of spdhg sampling seeds")->capture_default_str();
  experiment->add_option("--kappa", ea.kappa, "alpha = ||A||^2 / kappa")->check(CLI::PositiveNumber)->capture_default_str();
  experiment->add_option("--sigma", ea.sigma, "relative noise level")->check(CLI::NonNegativeNumber)->capture_default_str();
  experiment->add_option("--data-seed", ea.data_seed, "noise seed")->capture_default_str();
  experiment->add_option("--snapshot", ea.snapshot, "epoch of the saved snapshots")->capture_default_str();
  experiment->add_option("--size", ea.size, "paper|fast|tiny")->check(sizes)->capture_default_str();
  experiment->add_option("--out", ea.out, "output directory")->required();

  try {
    app.parse(argc, argv);
    if (simulate->parsed() && sa.preset.empty() && sa.phantom.empty()) {
      throw CLI::RequiredError("--preset or --phantom");
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (phantom->parsed()) return cmd_phantom(pa);
    if (simulate->parsed()) return cmd_simulate(sa);
    if (reference->parsed()) return cmd_reference(ra);
    if (reconstruct->parsed()) return cmd_reconstruct(ca);
    if (rates->parsed()) return cmd_rates(ta);
    if (experiment->parsed()) return cmd_experiment(ea);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
