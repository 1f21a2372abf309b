#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "mcir/experiment_io.hpp"

namespace fs = std::filesystem;
using namespace mcir;

namespace {

const fs::path root = fs::temp_directory_path() / ("mcir_cli_" + std::to_string(::getpid()));

int mcir_cli(const std::string& args) {
  const std::string cmd = std::string(MCIR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string dir(const std::string& name) { return (root / name).string(); }

// Simulated once; later tests read it.
const std::string& rigid_data() {
  static const std::string path = [] {
    const std::string p = dir("rigid");
    if (mcir_cli("simulate --preset rigid --size tiny --seed 4 --out " + p) != 0) throw std::runtime_error("simulate");
    return p;
  }();
  return path;
}

const std::string& rigid_reference() {
  static const std::string path = [] {
    const std::string p = dir("rigid_ref");
    if (mcir_cli("reference --data " + rigid_data() + " --tol 1e-10 --out " + p) != 0) throw std::runtime_error("ref");
    return p;
  }();
  return path;
}

std::size_t count_gate_files(const std::string& d) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(d)) n += e.path().filename().string().rfind("gate_", 0) == 0;
  return n;
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || io::read_file(e.path()) != io::read_file(other)) return false;
    ++files;
  }
  return files > 0;
}

class CliEnvironment : public ::testing::Environment {
 public:
  void TearDown() override { fs::remove_all(root); }
};
const auto* env = ::testing::AddGlobalTestEnvironment(new CliEnvironment);

}  // namespace

TEST(Simulate, PresetGateCounts) {
  EXPECT_EQ(count_gate_files(rigid_data()), 20u);
  ASSERT_EQ(mcir_cli("simulate --preset nonrigid --size tiny --out " + dir("nonrigid")), 0);
  EXPECT_EQ(count_gate_files(dir("nonrigid")), 10u);
  const auto ds = io::read_dataset(dir("nonrigid"));
  EXPECT_EQ(ds.phantom, PhantomKind::thorax);
  EXPECT_EQ(io::read_json(fs::path(dir("nonrigid")) / "manifest.json").at("command").at("preset"), "nonrigid");
}

TEST(Simulate, SameSeedIsBitwiseIdentical) {
  ASSERT_EQ(mcir_cli("simulate --preset rigid --size tiny --seed 4 --out " + dir("rigid_again")), 0);
  EXPECT_TRUE(same_tree(rigid_data(), dir("rigid_again")));
  ASSERT_EQ(mcir_cli("simulate --preset rigid --size tiny --seed 5 --out " + dir("rigid_other")), 0);
  EXPECT_NE(io::read_file(fs::path(rigid_data()) / "gate_003.f64"),
            io::read_file(fs::path(dir("rigid_other")) / "gate_003.f64"));
}

TEST(Simulate, CustomPhantom) {
  ASSERT_EQ(mcir_cli("simulate --phantom thorax --gates 3 --magnitude 0.02 --size tiny --out " + dir("custom")), 0);
  const auto ds = io::read_dataset(dir("custom"));
  ASSERT_EQ(ds.num_gates(), 3u);
  EXPECT_DOUBLE_EQ(ds.motion.back().scale, 1.02);
}

TEST(ExitCodes, UsageAndRuntimeErrors) {
  EXPECT_EQ(mcir_cli(""), 2);
  EXPECT_EQ(mcir_cli("simulate --preset bogus --out " + dir("x")), 2);
  EXPECT_EQ(mcir_cli("simulate --size tiny --out " + dir("x")), 2);
  EXPECT_EQ(mcir_cli("simulate --preset rigid --phantom thorax --out " + dir("x")), 2);
  EXPECT_EQ(mcir_cli("reconstruct --data " + rigid_data()), 2);
  EXPECT_EQ(mcir_cli("reconstruct --data " + rigid_data() + " --algo sgd --out " + dir("x")), 2);
  EXPECT_EQ(mcir_cli("reconstruct --data " + dir("missing") + " --out " + dir("x")), 1);
  EXPECT_EQ(mcir_cli("--help"), 0);
}

TEST(Reconstruct, ZeroEpochsGiveZeroImage) {
  ASSERT_EQ(mcir_cli("reconstruct --data " + rigid_data() + " --epochs 0 --out " + dir("zero")), 0);
  const Grid x = io::read_raster(fs::path(dir("zero")) / "reconstruction.f64");
  EXPECT_EQ(squared_norm(x), 0.0);
  EXPECT_TRUE(io::read_csv(fs::path(dir("zero")) / "convergence.csv").empty());
}

TEST(Reconstruct, SpdhgCloserToOptimumAtThirtyEpochs) {
  const std::string common = "reconstruct --data " + rigid_data() + " --epochs 30 --saddle " + rigid_reference();
  ASSERT_EQ(mcir_cli(common + " --algo spdhg --seed 1 --out " + dir("spdhg30")), 0);
  ASSERT_EQ(mcir_cli(common + " --algo pdhg --out " + dir("pdhg30")), 0);
  const double s = io::read_json(fs::path(dir("spdhg30")) / "manifest.json").at("rmse_to_saddle").get<double>();
  const double p = io::read_json(fs::path(dir("pdhg30")) / "manifest.json").at("rmse_to_saddle").get<double>();
  EXPECT_LT(s, p);
  const auto rec = io::read_csv(fs::path(dir("spdhg30")) / "convergence.csv");
  ASSERT_EQ(rec.size(), 30u);
  EXPECT_EQ(rec.back().fwd_calls, 600u);
}

TEST(Reconstruct, LongRunApproachesReference) {
  ASSERT_EQ(mcir_cli("reconstruct --data " + rigid_data() + " --algo pdhg --epochs 120 --saddle " + rigid_reference() +
                     " --out " + dir("long")),
            0);
  const SaddlePoint sp = io::read_saddle(rigid_reference());
  double initial = squared_norm(sp.x_star);
  for (const auto& y : sp.y_star) initial += squared_norm(y);
  const auto rec = io::read_csv(fs::path(dir("long")) / "convergence.csv");
  EXPECT_LT(rec.back().dist_sq, 1e-8 * initial);
}

TEST(Reconstruct, SaddleForAnotherProblemRejected) {
  EXPECT_EQ(mcir_cli("reconstruct --data " + rigid_data() + " --kappa 10 --saddle " + rigid_reference() + " --out " +
                     dir("x")),
            1);
  EXPECT_EQ(mcir_cli("reconstruct --data " + rigid_data() + " --no-mc --saddle " + rigid_reference() + " --out " +
                     dir("x")),
            1);
}

TEST(Reference, MotionCompensationLowersError) {
  ASSERT_EQ(mcir_cli("reference --data " + rigid_data() + " --no-mc --tol 1e-10 --out " + dir("nomc_ref")), 0);
  const double mc = io::read_json(fs::path(rigid_reference()) / "saddle.json").at("rmse_to_truth").get<double>();
  const double nomc = io::read_json(fs::path(dir("nomc_ref")) / "saddle.json").at("rmse_to_truth").get<double>();
  EXPECT_LT(mc, nomc);
}

TEST(Rates, RigidPresetNearTheoremValues) {
  ASSERT_EQ(mcir_cli("rates --data " + rigid_data() + " --kappa 70 --out " + dir("rates")), 0);
  const auto j = io::read_json(fs::path(dir("rates")) / "rates.json").at("report");
  EXPECT_NEAR(j.at("r_spdhg").get<double>(), 0.52, 0.01);
  EXPECT_NEAR(j.at("r_pdhg").get<double>(), 0.79, 0.02);
  EXPECT_TRUE(j.at("dominance").get<bool>());
}

TEST(Experiment, CsvShape) {
  ASSERT_EQ(mcir_cli("experiment --preset nonrigid --size tiny --epochs 10 --seeds 10 --out " + dir("exp")), 0);
  const std::string csv = io::read_file(fs::path(dir("exp")) / "trajectories.csv");
  std::size_t lines = 0, pdhg = 0, spdhg = 0;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const auto nl = csv.find('\n', pos);
    const std::string line = csv.substr(pos, nl - pos);
    pos = nl + 1;
    if (lines++ == 0) {
      EXPECT_EQ(line, "algo,seed,epoch,dist_sq,objective,rmse_to_truth,fwd_calls,adj_calls");
      continue;
    }
    pdhg += line.rfind("pdhg,", 0) == 0;
    spdhg += line.rfind("spdhg,", 0) == 0;
  }
  EXPECT_EQ(pdhg, 10u);
  EXPECT_EQ(spdhg, 100u);
  const std::string fits = io::read_file(fs::path(dir("exp")) / "fits.csv");
  EXPECT_EQ(std::count(fits.begin(), fits.end(), '\n'), 12);
  EXPECT_TRUE(fs::exists(fs::path(dir("exp")) / "x_nomc_star.pgm"));
}
