#pragma once

// Files and analysis.
//
// Raster (.f64):  "MCIR-F64 1\n" "<rows> <cols>\n" then rows·cols
//                 little-endian IEEE-754 doubles, row-major.
// Viewable (.pgm): binary 16-bit PGM, [min, max] mapped affinely to [0, 65535].
// Convergence log (.csv): header epoch,dist_sq,objective,rmse_to_truth,fwd_calls,adj_calls
//                 with '.' decimals and 17 significant digits.
// Dataset manifest (manifest.json) next to truth.f64 and gate_NNN.f64.

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcir/grid.hpp"
#include "mcir/motion.hpp"
#include "mcir/projector.hpp"
#include "mcir/record.hpp"
#include "mcir/simulate.hpp"
#include "mcir/solvers.hpp"
#include "mcir/theory.hpp"

namespace mcir::io {

namespace fs = std::filesystem;
using nlohmann::json;

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view raster_magic = "MCIR-F64 1";

// ---------------------------------------------------------------- raster

inline std::string encode_raster(const Grid& g) {
  std::string out;
  out += raster_magic;
  out += '\n';
  out += std::to_string(g.rows()) + " " + std::to_string(g.cols()) + "\n";
  const std::size_t header = out.size();
  out.resize(header + g.size() * sizeof(double));
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(g[i]);
    for (int b = 0; b < 8; ++b) out[header + i * 8 + b] = char((bits >> (8 * b)) & 0xFF);
  }
  return out;
}

inline Grid decode_raster(std::string_view bytes) {
  const auto magic_end = bytes.find('\n');
  if (magic_end == std::string_view::npos || bytes.substr(0, magic_end) != raster_magic) {
    throw FormatError("raster: bad magic, expected '" + std::string(raster_magic) + "'", 0);
  }
  const std::size_t dims_start = magic_end + 1;
  const auto dims_end = bytes.find('\n', dims_start);
  if (dims_end == std::string_view::npos) throw FormatError("raster: missing dimension line", dims_start);
  const std::string_view dims = bytes.substr(dims_start, dims_end - dims_start);
  std::size_t rows = 0, cols = 0;
  const char* p = dims.data();
  const char* end = dims.data() + dims.size();
  auto r1 = std::from_chars(p, end, rows);
  if (r1.ec != std::errc() || r1.ptr == end || *r1.ptr != ' ') {
    throw FormatError("raster: malformed dimension line", dims_start + std::size_t(r1.ptr - dims.data()));
  }
  auto r2 = std::from_chars(r1.ptr + 1, end, cols);
  if (r2.ec != std::errc() || r2.ptr != end) {
    throw FormatError("raster: malformed dimension line", dims_start + std::size_t(r2.ptr - dims.data()));
  }
  const std::size_t header = dims_end + 1;
  const std::size_t need = rows * cols * sizeof(double);
  if (bytes.size() - header != need) {
    throw FormatError("raster: expected " + std::to_string(need) + " payload bytes, found " +
                          std::to_string(bytes.size() - header),
                      std::min(bytes.size(), header + need));
  }
  Grid g(rows, cols);
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t(std::uint8_t(bytes[header + i * 8 + b])) << (8 * b);
    g[i] = std::bit_cast<double>(bits);
  }
  return g;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_raster(const fs::path& path, const Grid& g) { write_file(path, encode_raster(g)); }

inline Grid read_raster(const fs::path& path) {
  try {
    return decode_raster(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

/// 16-bit PGM with [min, max] → [0, 65535].
inline std::string encode_pgm16(const Grid& g) {
  double lo = 0.0, hi = 0.0;
  if (g.size() > 0) {
    lo = *std::min_element(g.values().begin(), g.values().end());
    hi = *std::max_element(g.values().begin(), g.values().end());
  }
  std::string out = "P5\n" + std::to_string(g.cols()) + " " + std::to_string(g.rows()) + "\n65535\n";
  const std::size_t header = out.size();
  out.resize(header + 2 * g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double t = hi > lo ? (g[i] - lo) / (hi - lo) : 0.0;
    const auto v = std::uint16_t(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
    out[header + 2 * i] = char(v >> 8);
    out[header + 2 * i + 1] = char(v & 0xFF);
  }
  return out;
}

inline void write_pgm16(const fs::path& path, const Grid& g) { write_file(path, encode_pgm16(g)); }

// ---------------------------------------------------------------- csv

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

inline constexpr std::string_view csv_header = "epoch,dist_sq,objective,rmse_to_truth,fwd_calls,adj_calls";

inline std::string csv_row(const ConvergenceRow& r) {
  return format_double(r.epoch) + "," + format_double(r.dist_sq) + "," + format_double(r.objective) + "," +
         format_double(r.rmse_to_truth) + "," + std::to_string(r.fwd_calls) + "," + std::to_string(r.adj_calls);
}

inline std::string encode_csv(const ConvergenceRecord& rec) {
  std::string out(csv_header);
  out += '\n';
  for (const auto& r : rec) out += csv_row(r) + "\n";
  return out;
}

inline ConvergenceRecord decode_csv(std::string_view text) {
  ConvergenceRecord rec;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    const std::size_t line_start = pos;
    pos = nl + 1;
    if (line.empty()) continue;
    if (header) {
      if (line != csv_header) throw FormatError("csv: unexpected header", line_start);
      header = false;
      continue;
    }
    std::vector<std::string_view> cells;
    std::size_t c = 0;
    while (true) {
      const auto comma = line.find(',', c);
      cells.push_back(line.substr(c, comma == std::string_view::npos ? std::string_view::npos : comma - c));
      if (comma == std::string_view::npos) break;
      c = comma + 1;
    }
    if (cells.size() != 6) throw FormatError("csv: expected 6 columns", line_start);
    try {
      ConvergenceRow r;
      r.epoch = parse_double(cells[0]);
      r.dist_sq = parse_double(cells[1]);
      r.objective = parse_double(cells[2]);
      r.rmse_to_truth = parse_double(cells[3]);
      r.fwd_calls = std::uint64_t(parse_double(cells[4]));
      r.adj_calls = std::uint64_t(parse_double(cells[5]));
      rec.push_back(r);
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("csv: ") + e.what(), line_start);
    }
  }
  if (header) throw FormatError("csv: missing header", 0);
  return rec;
}

inline void write_csv(const fs::path& path, const ConvergenceRecord& rec) { write_file(path, encode_csv(rec)); }
inline ConvergenceRecord read_csv(const fs::path& path) { return decode_csv(read_file(path)); }

// ---------------------------------------------------------------- analysis

struct RateFit {
  double rate = 0.0;           // exp(slope) of log dist_sq vs epoch
  double log_intercept = 0.0;  // log C
  double r_squared = 0.0;
  double first_epoch = 0.0;
  double last_epoch = 0.0;
  std::size_t points = 0;
};

/// Least-squares line through (epoch, log dist_sq) over rows with epoch in
/// [first_epoch, last_epoch].
inline RateFit fit_rate(const ConvergenceRecord& rec, double first_epoch = 5.0,
                        double last_epoch = std::numeric_limits<double>::infinity()) {
  std::vector<double> xs, ys;
  for (const auto& r : rec) {
    if (r.epoch < first_epoch || r.epoch > last_epoch) continue;
    if (!(r.dist_sq > 0.0)) {
      throw std::invalid_argument("fit_rate: nonpositive distance at epoch " + format_double(r.epoch));
    }
    xs.push_back(r.epoch);
    ys.push_back(std::log(r.dist_sq));
  }
  if (xs.size() < 5) throw std::invalid_argument("fit_rate: fewer than 5 rows in the window");
  const double n = double(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  RateFit f;
  const double slope = sxy / sxx;
  f.rate = std::exp(slope);
  f.log_intercept = my - slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (f.log_intercept + slope * xs[i]);
    ss_res += e * e;
  }
  f.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  f.first_epoch = xs.front();
  f.last_epoch = xs.back();
  f.points = xs.size();
  return f;
}

using mcir::rmse;

// ---------------------------------------------------------------- manifest

inline json to_json(const Geometry& g) {
  return {{"image_rows", g.image_rows}, {"image_cols", g.image_cols},   {"num_angles", g.num_angles()},
          {"num_bins", g.num_bins},     {"detector_spacing", g.detector_spacing}, {"angles", g.angles}};
}

inline Geometry geometry_from_json(const json& j) {
  Geometry g;
  g.image_rows = j.at("image_rows").get<std::size_t>();
  g.image_cols = j.at("image_cols").get<std::size_t>();
  g.num_bins = j.at("num_bins").get<std::size_t>();
  g.detector_spacing = j.at("detector_spacing").get<double>();
  g.angles = j.at("angles").get<std::vector<double>>();
  if (g.angles.size() != j.at("num_angles").get<std::size_t>()) {
    throw std::invalid_argument("manifest: num_angles does not match the angle list");
  }
  g.validate();
  return g;
}

inline json to_json(const MotionParams& m) {
  return {{"kind", to_string(m.kind)}, {"rotation", m.rotation}, {"dx", m.dx}, {"dy", m.dy}, {"scale", m.scale}};
}

inline MotionParams motion_from_json(const json& j) {
  MotionParams m;
  m.kind = motion_kind_from_string(j.at("kind").get<std::string>());
  m.rotation = j.at("rotation").get<double>();
  m.dx = j.at("dx").get<double>();
  m.dy = j.at("dy").get<double>();
  m.scale = j.at("scale").get<double>();
  m.validate();
  return m;
}

inline json to_json(const theory::RateReport& r) {
  return {{"num_gates", r.num_gates},
          {"alpha", r.alpha},
          {"kappa_global", r.kappa_global},
          {"kappa_spdhg", r.kappa_spdhg},
          {"kappa_pdhg", r.kappa_pdhg},
          {"r_spdhg", r.r_spdhg},
          {"r_pdhg", r.r_pdhg},
          {"r_spdhg_approx", r.r_spdhg_approx},
          {"r_pdhg_approx", r.r_pdhg_approx},
          {"approx_max_precision", r.approx_max_precision},
          {"approx_stack_precision", r.approx_stack_precision},
          {"dominance", r.dominance},
          {"power_iterations", r.power_iterations},
          {"power_seed", r.power_seed}};
}

inline std::string gate_file(std::size_t i) {
  std::ostringstream ss;
  ss << "gate_" << std::setw(3) << std::setfill('0') << i << ".f64";
  return ss.str();
}

inline json dataset_manifest(const GatedDataset& ds) {
  json gates = json::array();
  for (std::size_t i = 0; i < ds.num_gates(); ++i) {
    gates.push_back({{"index", i}, {"sinogram", gate_file(i)}, {"motion", to_json(ds.motion[i])}});
  }
  return {{"format", "mcir-dataset"},
          {"version", 1},
          {"phantom", to_string(ds.phantom)},
          {"truth", "truth.f64"},
          {"geometry", to_json(ds.geometry)},
          {"num_gates", ds.num_gates()},
          {"gates", gates},
          {"noise", {{"level", ds.noise.level}, {"relative", ds.noise.relative}, {"sigma", ds.sigma}}},
          {"seed", ds.seed}};
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Writes manifest.json, truth.f64 and one raster per gate into `dir`. Keys
/// in `extra` are merged into the manifest.
inline void write_dataset(const fs::path& dir, const GatedDataset& ds, const json& extra = json::object()) {
  fs::create_directories(dir);
  write_raster(dir / "truth.f64", ds.truth);
  for (std::size_t i = 0; i < ds.num_gates(); ++i) write_raster(dir / gate_file(i), ds.sinograms[i]);
  json m = dataset_manifest(ds);
  m.update(extra);
  write_file(dir / "manifest.json", dump(m));
}

inline json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

inline GatedDataset read_dataset(const fs::path& dir) {
  const json m = read_json(dir / "manifest.json");
  try {
    if (m.at("format").get<std::string>() != "mcir-dataset") {
      throw std::invalid_argument("manifest: not an mcir-dataset");
    }
    GatedDataset ds;
    ds.geometry = geometry_from_json(m.at("geometry"));
    ds.phantom = phantom_kind_from_string(m.at("phantom").get<std::string>());
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.noise.level = m.at("noise").at("level").get<double>();
    ds.noise.relative = m.at("noise").at("relative").get<bool>();
    ds.sigma = m.at("noise").at("sigma").get<double>();
    ds.truth = read_raster(dir / m.at("truth").get<std::string>());
    require_shape(ds.truth.shape(), ds.geometry.image_shape(), "dataset truth");
    for (const auto& g : m.at("gates")) {
      ds.motion.push_back(motion_from_json(g.at("motion")));
      ds.sinograms.push_back(read_raster(dir / g.at("sinogram").get<std::string>()));
      require_shape(ds.sinograms.back().shape(), ds.geometry.sinogram_shape(), "dataset sinogram");
    }
    if (ds.motion.empty()) throw std::invalid_argument("manifest: no gates");
    return ds;
  } catch (const json::exception& e) {
    throw std::invalid_argument((dir / "manifest.json").string() + ": " + e.what());
  }
}

/// Saddle point directory: saddle.json, x_star.f64, y_star_NNN.f64.
inline void write_saddle(const fs::path& dir, const SaddlePoint& sp, const json& extra = json::object()) {
  fs::create_directories(dir);
  write_raster(dir / "x_star.f64", sp.x_star);
  json files = json::array();
  for (std::size_t i = 0; i < sp.y_star.size(); ++i) {
    const std::string name = "y_star_" + gate_file(i).substr(5);
    write_raster(dir / name, sp.y_star[i]);
    files.push_back(name);
  }
  json j = {{"format", "mcir-saddle"},        {"version", 1},
            {"source", to_string(sp.source)}, {"converged", sp.converged},
            {"iterations", sp.iterations},    {"residual", sp.residual},
            {"x_star", "x_star.f64"},         {"y_star", files}};
  j.update(extra);
  write_file(dir / "saddle.json", dump(j));
}

inline SaddlePoint read_saddle(const fs::path& dir) {
  const json j = read_json(dir / "saddle.json");
  try {
    SaddlePoint sp;
    sp.source = j.at("source").get<std::string>() == "long_pdhg" ? SaddlePoint::Source::long_pdhg
                                                                 : SaddlePoint::Source::cg_reference;
    sp.converged = j.at("converged").get<bool>();
    sp.iterations = j.at("iterations").get<std::size_t>();
    sp.residual = j.at("residual").get<double>();
    sp.x_star = read_raster(dir / j.at("x_star").get<std::string>());
    for (const auto& f : j.at("y_star")) sp.y_star.push_back(read_raster(dir / f.get<std::string>()));
    return sp;
  } catch (const json::exception& e) {
    throw std::invalid_argument((dir / "saddle.json").string() + ": " + e.what());
  }
}

}  // namespace mcir::io
