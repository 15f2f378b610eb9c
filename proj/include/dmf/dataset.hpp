#pragma once

// Multi-fidelity datasets: container, generators and the on-disk layout
//
//   <dir>/meta.json
//   <dir>/inputs_f{m}.csv, <dir>/outputs_f{m}.csv   m = 1..M, low to high
//   <dir>/inputs_test.csv, <dir>/outputs_test.csv   optional held-out set
//
// CSV files carry a header (x1..xl or y1..yd) and 17 significant digits.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmf/benchmarks.hpp"
#include "dmf/error.hpp"
#include "dmf/pde.hpp"
#include "dmf/rng.hpp"
#include "dmf/tensor.hpp"

namespace dmf {

inline constexpr int kGeneratorVersion = 1;

struct FidelityLevel {
  Tensor x;  // N_m x l
  Tensor y;  // N_m x d_m

  std::size_t count() const { return x.rows(); }
  std::size_t output_dim() const { return y.cols(); }
};

struct FidelityDataset {
  std::string benchmark;
  std::uint64_t seed = 0;
  std::vector<Bound> bounds;
  std::vector<FidelityLevel> levels;  // lowest fidelity first
  std::optional<FidelityLevel> test;  // held-out highest-fidelity samples

  std::size_t input_dim() const { return levels.empty() ? 0 : levels.front().x.cols(); }
  const FidelityLevel& low() const { return levels.front(); }
  const FidelityLevel& high() const { return levels.back(); }

  // d_1 <= ... <= d_M and N_1 >= ... >= N_M; rows aligned, one input width.
  void validate() const {
    if (levels.empty()) throw ConfigError("dataset has no fidelity levels");
    for (std::size_t m = 0; m < levels.size(); ++m) {
      const auto& lv = levels[m];
      const std::string tag = "fidelity level " + std::to_string(m + 1);
      if (lv.x.rows() != lv.y.rows()) throw ConfigError(tag + ": inputs and outputs have different row counts");
      if (lv.x.cols() != input_dim()) throw ConfigError(tag + ": input width differs from level 1");
      if (m > 0) {
        if (lv.output_dim() < levels[m - 1].output_dim()) {
          throw ConfigError(tag + ": output dimension must not decrease with fidelity");
        }
        if (lv.count() > levels[m - 1].count()) {
          throw ConfigError(tag + ": sample count must not increase with fidelity");
        }
      }
    }
    if (test) {
      if (test->x.cols() != input_dim() || test->y.cols() != high().output_dim() || test->x.rows() != test->y.rows()) {
        throw ConfigError("test set does not match the highest fidelity level");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Generators

inline constexpr std::size_t kBurgersLowMesh = 16;
inline constexpr std::size_t kBurgersHighMesh = 32;
inline constexpr std::size_t kPoissonLowMesh = 8;
inline constexpr std::size_t kPoissonHighMesh = 32;

inline InputSpec burgers_spec() { return {"burgers", {"nu"}, {{0.001, 0.1}}}; }

inline InputSpec poisson_spec() {
  return {"poisson", {"left", "right", "bottom", "top", "center"}, {{0.1, 0.9}, {0.1, 0.9}, {0.1, 0.9}, {0.1, 0.9}, {0.1, 0.9}}};
}

inline InputSpec input_spec(Benchmark b) {
  switch (b) {
    case Benchmark::Borehole: return borehole_spec();
    case Benchmark::Currin: return currin_spec();
    case Benchmark::Park: return park_spec();
    case Benchmark::Burgers: return burgers_spec();
    case Benchmark::Poisson: return poisson_spec();
  }
  throw ConfigError("unknown benchmark");
}

inline Tensor flatten_field(const FieldGrid& f) { return Tensor(Shape{1, f.values.size()}, f.values.data()); }

inline FieldGrid unflatten_field(std::span<const double> row, std::size_t rows, std::size_t cols) {
  if (row.size() != rows * cols) throw DimensionError("field vector length does not match the grid");
  FieldGrid f(rows, cols);
  std::copy(row.begin(), row.end(), f.values.data().begin());
  return f;
}

// Solution field of a PDE benchmark at one input, resampled to grid x grid.
inline FieldGrid pde_field(Benchmark b, std::span<const double> x, Fidelity fidelity, std::size_t grid) {
  if (b == Benchmark::Burgers) {
    const std::size_t mesh = fidelity == Fidelity::Low ? kBurgersLowMesh : kBurgersHighMesh;
    return upscale_bilinear(solve_burgers(x[0], mesh, mesh), grid, grid);
  }
  if (b == Benchmark::Poisson) {
    const std::size_t mesh = fidelity == Fidelity::Low ? kPoissonLowMesh : kPoissonHighMesh;
    return upscale_bilinear(solve_poisson(PoissonInputs{x[0], x[1], x[2], x[3], x[4]}, mesh), grid, grid);
  }
  throw ConfigError(to_string(b) + " is not a PDE benchmark");
}

// Outputs for every row of x; scalar for analytic benchmarks, a flattened
// grid x grid field (row-major, time/y major) for PDE benchmarks.
inline Tensor evaluate_benchmark(Benchmark b, const Tensor& x, Fidelity fidelity, std::size_t grid = 100) {
  if (is_analytic(b)) return evaluate_rows(b, x, fidelity);
  Tensor y(Shape{x.rows(), grid * grid});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const FieldGrid f = pde_field(b, x.row(i), fidelity, grid);
    std::copy(f.values.data().begin(), f.values.data().end(), y.row(i).begin());
  }
  return y;
}

struct GenerateOptions {
  Benchmark benchmark = Benchmark::Currin;
  std::size_t n_lf = 20;
  std::size_t n_hf = 8;
  std::size_t n_test = 50;
  std::uint64_t seed = 0;
  std::size_t grid = 100;  // PDE output resolution
};

// Seed streams for the three independent input draws.
enum class SampleStream : std::uint64_t { Low = 1, High = 2, Test = 3 };

inline std::uint64_t stream_seed(std::uint64_t seed, SampleStream s) {
  return derive_seed(seed, static_cast<std::uint64_t>(s));
}

// Low- and high-fidelity inputs are drawn independently (no nesting).
inline FidelityDataset generate_dataset(const GenerateOptions& opt) {
  if (opt.n_lf == 0 || opt.n_hf == 0) throw ConfigError("both fidelity levels need at least one sample");
  if (opt.n_hf > opt.n_lf) throw ConfigError("n_hf must not exceed n_lf");
  const InputSpec spec = input_spec(opt.benchmark);
  FidelityDataset d;
  d.benchmark = to_string(opt.benchmark);
  d.seed = opt.seed;
  d.bounds = spec.bounds;
  Tensor xl = sample_inputs(spec, opt.n_lf, stream_seed(opt.seed, SampleStream::Low));
  Tensor xh = sample_inputs(spec, opt.n_hf, stream_seed(opt.seed, SampleStream::High));
  Tensor yl = evaluate_benchmark(opt.benchmark, xl, Fidelity::Low, opt.grid);
  Tensor yh = evaluate_benchmark(opt.benchmark, xh, Fidelity::High, opt.grid);
  d.levels.push_back({std::move(xl), std::move(yl)});
  d.levels.push_back({std::move(xh), std::move(yh)});
  if (opt.n_test > 0) {
    Tensor xt = sample_inputs(spec, opt.n_test, stream_seed(opt.seed, SampleStream::Test));
    Tensor yt = evaluate_benchmark(opt.benchmark, xt, Fidelity::High, opt.grid);
    d.test = FidelityLevel{std::move(xt), std::move(yt)};
  }
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// CSV / directory IO

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_matrix_csv(const std::filesystem::path& path, const Tensor& m, char prefix) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << prefix << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

inline Tensor read_matrix_csv(const std::filesystem::path& path, char prefix) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  const std::string where = path.filename().string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(where + ": missing header");
  std::size_t cols = 0;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      ++cols;
      if (cell != std::string(1, prefix) + std::to_string(cols)) {
        throw ParseError(where + ": header column " + std::to_string(cols) + " should be '" + prefix +
                         std::to_string(cols) + "', got '" + cell + "'");
      }
    }
  }
  if (cols == 0) throw ParseError(where + ": empty header");
  std::vector<double> data;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    std::size_t col = 0, start = 0;
    while (start <= line.size()) {
      const std::size_t end = std::min(line.find(',', start), line.size());
      ++col;
      double v = 0.0;
      const char* first = line.data() + start;
      const char* last = line.data() + end;
      auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc() || res.ptr != last) {
        throw ParseError(where + ": row " + std::to_string(row) + ", column " + std::to_string(col) +
                         ": not a number '" + std::string(first, last) + "'");
      }
      data.push_back(v);
      start = end + 1;
    }
    if (col != cols) {
      throw ParseError(where + ": row " + std::to_string(row) + " has " + std::to_string(col) + " columns, header has " +
                       std::to_string(cols));
    }
  }
  if (row == 0) throw ParseError(where + ": no data rows");
  return Tensor(Shape{row, cols}, std::move(data));
}

inline void write_dataset(const FidelityDataset& d, const std::filesystem::path& dir) {
  d.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json levels = nlohmann::json::array();
  for (std::size_t m = 0; m < d.levels.size(); ++m) {
    const auto tag = std::to_string(m + 1);
    write_matrix_csv(dir / ("inputs_f" + tag + ".csv"), d.levels[m].x, 'x');
    write_matrix_csv(dir / ("outputs_f" + tag + ".csv"), d.levels[m].y, 'y');
    levels.push_back({{"fidelity", m + 1}, {"n", d.levels[m].count()}, {"d", d.levels[m].output_dim()}});
  }
  nlohmann::json bounds = nlohmann::json::array();
  for (const auto& b : d.bounds) bounds.push_back({b.lower, b.upper});
  nlohmann::json meta{{"benchmark", d.benchmark},   {"M", d.levels.size()},     {"levels", levels},
                      {"bounds", bounds},           {"seed", d.seed},           {"generator_version", kGeneratorVersion},
                      {"n_test", d.test ? d.test->count() : 0}};
  if (d.test) {
    write_matrix_csv(dir / "inputs_test.csv", d.test->x, 'x');
    write_matrix_csv(dir / "outputs_test.csv", d.test->y, 'y');
  }
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

inline FidelityDataset read_dataset(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw ParseError("missing " + meta_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("meta.json: " + std::string(e.what()));
  }
  FidelityDataset d;
  try {
    d.benchmark = meta.at("benchmark").get<std::string>();
    d.seed = meta.value("seed", std::uint64_t{0});
    for (const auto& b : meta.value("bounds", nlohmann::json::array())) {
      d.bounds.push_back(Bound{b.at(0).get<double>(), b.at(1).get<double>()});
    }
    const auto m_count = meta.at("M").get<std::size_t>();
    const auto& levels = meta.at("levels");
    if (levels.size() != m_count) throw ParseError("meta.json: M does not match the level list");
    for (std::size_t m = 1; m <= m_count; ++m) {
      const auto tag = std::to_string(m);
      const auto xin = dir / ("inputs_f" + tag + ".csv");
      const auto yout = dir / ("outputs_f" + tag + ".csv");
      if (!std::filesystem::exists(xin)) throw ParseError("fidelity level " + tag + ": missing inputs file");
      if (!std::filesystem::exists(yout)) throw ParseError("fidelity level " + tag + ": missing outputs file");
      FidelityLevel lv{read_matrix_csv(xin, 'x'), read_matrix_csv(yout, 'y')};
      const auto& jl = levels.at(m - 1);
      if (lv.count() != jl.at("n").get<std::size_t>() || lv.y.rows() != lv.count() ||
          lv.output_dim() != jl.at("d").get<std::size_t>()) {
        throw ParseError("fidelity level " + tag + ": file dimensions disagree with meta.json");
      }
      d.levels.push_back(std::move(lv));
    }
    if (meta.value("n_test", std::size_t{0}) > 0) {
      FidelityLevel t{read_matrix_csv(dir / "inputs_test.csv", 'x'), read_matrix_csv(dir / "outputs_test.csv", 'y')};
      if (t.count() != meta.at("n_test").get<std::size_t>()) {
        throw ParseError("test set: file dimensions disagree with meta.json");
      }
      d.test = std::move(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("meta.json: " + std::string(e.what()));
  }
  try {
    d.validate();
  } catch (const ConfigError& e) {
    throw ParseError(e.what());
  }
  return d;
}

}  // namespace dmf
