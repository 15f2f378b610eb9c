#pragma once

// Analytic two-fidelity test functions: Borehole (8-D), Currin (2-D) and
// Park (4-D).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmf/error.hpp"
#include "dmf/rng.hpp"
#include "dmf/tensor.hpp"

namespace dmf {

enum class Fidelity { Low, High };

struct Bound {
  double lower;
  double upper;
};

// Box-shaped input domain of a benchmark.
struct InputSpec {
  std::string benchmark;
  std::vector<std::string> names;
  std::vector<Bound> bounds;

  std::size_t dim() const { return bounds.size(); }

  void validate() const {
    for (const auto& b : bounds) {
      if (!(b.lower < b.upper)) throw ConfigError(benchmark + ": bound lower must be < upper");
    }
  }
};

inline InputSpec borehole_spec() {
  return {"borehole",
          {"r_w", "r", "T_u", "H_u", "T_l", "H_l", "L", "K_w"},
          {{0.05, 0.15},
           {100.0, 50000.0},
           {63070.0, 115600.0},
           {990.0, 1110.0},
           {63.1, 116.0},
           {700.0, 820.0},
           {1120.0, 1680.0},
           {9855.0, 12045.0}}};
}

inline InputSpec currin_spec() { return {"currin", {"x1", "x2"}, {{0.0, 1.0}, {0.0, 1.0}}}; }

inline InputSpec park_spec() {
  return {"park", {"x1", "x2", "x3", "x4"}, {{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}}};
}

namespace detail {

inline void check_domain(std::span<const double> x, const InputSpec& spec) {
  if (x.size() != spec.dim()) {
    throw DimensionError(spec.benchmark + " takes " + std::to_string(spec.dim()) + " inputs, got " +
                         std::to_string(x.size()));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= spec.bounds[i].lower && x[i] <= spec.bounds[i].upper)) {
      throw DomainError(spec.benchmark + ": input " + spec.names[i] + " = " + std::to_string(x[i]) +
                        " outside [" + std::to_string(spec.bounds[i].lower) + ", " +
                        std::to_string(spec.bounds[i].upper) + "]");
    }
  }
}

inline double currin_high_unchecked(double x1, double x2) {
  // the exponential factor tends to 1 as x2 -> 0+
  const double factor = x2 > 0.0 ? 1.0 - std::exp(-1.0 / (2.0 * x2)) : 1.0;
  const double num = 2300.0 * x1 * x1 * x1 + 1900.0 * x1 * x1 + 2092.0 * x1 + 60.0;
  const double den = 100.0 * x1 * x1 * x1 + 500.0 * x1 * x1 + 4.0 * x1 + 20.0;
  return factor * num / den;
}

inline constexpr double kParkMinX1 = 1e-6;

inline double park_high_unchecked(double x1, double x2, double x3, double x4) {
  x1 = std::max(x1, kParkMinX1);
  const double root = std::sqrt(1.0 + (x2 + x3 * x3) * x4 / (x1 * x1));
  return x1 / 2.0 * (root - 1.0) + (x1 + 3.0 * x4) * std::exp(1.0 + std::sin(x3));
}

}  // namespace detail

inline double eval_borehole(std::span<const double> x, Fidelity fidelity) {
  static const InputSpec spec = borehole_spec();
  detail::check_domain(x, spec);
  const double rw = x[0], r = x[1], tu = x[2], hu = x[3], tl = x[4], hl = x[5], len = x[6], kw = x[7];
  const double log_ratio = std::log(r / rw);
  const double leak = 2.0 * len * tu / (log_ratio * rw * rw * kw);
  if (fidelity == Fidelity::High) {
    return 2.0 * std::numbers::pi * tu * (hu - hl) / (log_ratio * (1.0 + leak + tu / tl));
  }
  return 5.0 * tu * (hu - hl) / (log_ratio * (1.5 + leak + tu / tl));
}

inline double eval_currin(std::span<const double> x, Fidelity fidelity) {
  static const InputSpec spec = currin_spec();
  detail::check_domain(x, spec);
  const double x1 = x[0], x2 = x[1];
  if (fidelity == Fidelity::High) return detail::currin_high_unchecked(x1, x2);
  const double lo2 = std::max(0.0, x2 - 0.05);
  return 0.25 * (detail::currin_high_unchecked(x1 + 0.05, x2 + 0.05) +
                 detail::currin_high_unchecked(x1 + 0.05, lo2)) +
         0.25 * (detail::currin_high_unchecked(x1 - 0.05, x2 + 0.05) +
                 detail::currin_high_unchecked(x1 - 0.05, lo2));
}

// x1 is clamped to >= 1e-6 where the printed form is 0/0.
inline double eval_park(std::span<const double> x, Fidelity fidelity) {
  static const InputSpec spec = park_spec();
  detail::check_domain(x, spec);
  const double high = detail::park_high_unchecked(x[0], x[1], x[2], x[3]);
  if (fidelity == Fidelity::High) return high;
  const double x1 = std::max(x[0], detail::kParkMinX1);
  return (1.0 + std::sin(x1) / 10.0) * high - 2.0 * x1 + x[1] * x[1] + x[2] * x[2] + 0.5;
}

enum class Benchmark { Borehole, Currin, Park, Burgers, Poisson };

inline std::string to_string(Benchmark b) {
  switch (b) {
    case Benchmark::Borehole: return "borehole";
    case Benchmark::Currin: return "currin";
    case Benchmark::Park: return "park";
    case Benchmark::Burgers: return "burgers";
    case Benchmark::Poisson: return "poisson";
  }
  return "?";
}

inline Benchmark benchmark_from_string(const std::string& s) {
  for (Benchmark b : {Benchmark::Borehole, Benchmark::Currin, Benchmark::Park, Benchmark::Burgers,
                      Benchmark::Poisson}) {
    if (to_string(b) == s) return b;
  }
  throw ConfigError("unknown benchmark '" + s + "'");
}

inline bool is_analytic(Benchmark b) {
  return b == Benchmark::Borehole || b == Benchmark::Currin || b == Benchmark::Park;
}

inline double eval_analytic(Benchmark b, std::span<const double> x, Fidelity f) {
  switch (b) {
    case Benchmark::Borehole: return eval_borehole(x, f);
    case Benchmark::Currin: return eval_currin(x, f);
    case Benchmark::Park: return eval_park(x, f);
    default: throw ConfigError(to_string(b) + " is not an analytic benchmark");
  }
}

// n i.i.d. uniform draws from the box, one row per sample.
inline Tensor sample_inputs(const InputSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("sample count must be >= 1");
  spec.validate();
  Rng rng(seed);
  Tensor out(Shape{n, spec.dim()});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < spec.dim(); ++k) {
      const auto& b = spec.bounds[k];
      // clamp guards the rounding of lo + (hi - lo) * u onto hi
      out(i, k) = std::min(rng.uniform(b.lower, b.upper), b.upper);
    }
  }
  return out;
}

// Column of f(x_i) for each row of x.
inline Tensor evaluate_rows(Benchmark b, const Tensor& x, Fidelity f) {
  Tensor y(Shape{x.rows(), 1});
  for (std::size_t i = 0; i < x.rows(); ++i) y(i, 0) = eval_analytic(b, x.row(i), f);
  return y;
}

}  // namespace dmf
