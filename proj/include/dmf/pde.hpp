#pragma once

// Fidelity-dependent PDE solvers for the spatial-temporal benchmarks and the
// bilinear resampling used to bring every fidelity onto one output grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "dmf/error.hpp"
#include "dmf/tensor.hpp"

namespace dmf {

struct Extent {
  double lo = 0.0;
  double hi = 1.0;
};

// Solution field on a regular rows x cols node grid. Rows run along
// `row_extent` (time for Burgers, y for Poisson), columns along `col_extent`.
struct FieldGrid {
  Tensor values;
  Extent row_extent;
  Extent col_extent;

  FieldGrid(std::size_t rows, std::size_t cols, Extent re = {}, Extent ce = {})
      : values(Shape{rows, cols}), row_extent(re), col_extent(ce) {
    if (rows < 2 || cols < 2) throw ConfigError("field grids need at least 2x2 nodes");
  }

  std::size_t rows() const { return values.shape()[0]; }
  std::size_t cols() const { return values.shape()[1]; }
  double& operator()(std::size_t i, std::size_t j) { return values(i, j); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }

  double min() const { return *std::min_element(values.data().begin(), values.data().end()); }
  double max() const { return *std::max_element(values.data().begin(), values.data().end()); }
};

// ---------------------------------------------------------------------------
// Viscous Burgers  u_t + u u_x = ν u_xx  on x ∈ [0, 1], t ∈ [0, 3],
// u(0, t) = u(1, t) = 0 for t > 0.
//
// Each step applies explicit first-order upwind advection followed by a
// backward-Euler diffusion solve (tridiagonal). Steps between recorded time
// levels are subdivided so that max|u| dt/dx <= 0.5. Both stages are
// monotone, so the discrete maximum principle holds.

using InitialCondition = std::function<double(double)>;

inline double burgers_default_initial(double x) { return std::sin(x * std::numbers::pi / 2.0); }

inline FieldGrid solve_burgers(double nu, std::size_t n_space, std::size_t n_time,
                               const InitialCondition& initial = burgers_default_initial) {
  if (!(nu >= 0.001 && nu <= 0.1)) throw ConfigError("Burgers viscosity must lie in [0.001, 0.1]");
  if (n_space < 8 || n_time < 8) throw ConfigError("Burgers mesh must be at least 8x8");
  constexpr double kT = 3.0;
  const double dx = 1.0 / static_cast<double>(n_space - 1);
  const double record_dt = kT / static_cast<double>(n_time - 1);

  FieldGrid field(n_time, n_space, {0.0, kT}, {0.0, 1.0});
  std::vector<double> u(n_space);
  for (std::size_t i = 0; i < n_space; ++i) {
    u[i] = initial(static_cast<double>(i) * dx);
    field(0, i) = u[i];
  }
  u.front() = 0.0;
  u.back() = 0.0;

  std::vector<double> adv(n_space), cprime(n_space), dprime(n_space);
  auto fail = [&] {
    throw NumericError("Burgers solver diverged for nu=" + std::to_string(nu) + " on a " +
                       std::to_string(n_space) + "x" + std::to_string(n_time) + " mesh");
  };

  for (std::size_t k = 1; k < n_time; ++k) {
    double umax = 0.0;
    for (double v : u) umax = std::max(umax, std::abs(v));
    const double dt_limit = umax > 0.0 ? 0.5 * dx / umax : record_dt;
    const auto substeps = static_cast<std::size_t>(std::max(1.0, std::ceil(record_dt / dt_limit - 1e-12)));
    const double dt = record_dt / static_cast<double>(substeps);
    const double r = nu * dt / (dx * dx);

    for (std::size_t s = 0; s < substeps; ++s) {
      adv.front() = 0.0;
      adv.back() = 0.0;
      for (std::size_t i = 1; i + 1 < n_space; ++i) {
        const double c = u[i] * dt / dx;
        adv[i] = c >= 0.0 ? u[i] - c * (u[i] - u[i - 1]) : u[i] - c * (u[i + 1] - u[i]);
      }
      // (1 + 2r) u_i − r u_{i−1} − r u_{i+1} = adv_i on interior nodes
      const std::size_t m = n_space - 2;
      const double a = -r, b = 1.0 + 2.0 * r;
      cprime[0] = a / b;
      dprime[0] = adv[1] / b;
      for (std::size_t i = 1; i < m; ++i) {
        const double denom = b - a * cprime[i - 1];
        cprime[i] = a / denom;
        dprime[i] = (adv[i + 1] - a * dprime[i - 1]) / denom;
      }
      u[m] = dprime[m - 1];
      for (std::size_t i = m - 1; i >= 1; --i) u[i] = dprime[i - 1] - cprime[i - 1] * u[i + 1];
      u.front() = 0.0;
      u.back() = 0.0;
    }
    for (std::size_t i = 0; i < n_space; ++i) {
      if (!std::isfinite(u[i])) fail();
      field(k, i) = u[i];
    }
  }
  return field;
}

// ---------------------------------------------------------------------------
// Laplace equation with the 5-point stencil. Nodes flagged in `fixed` keep
// their value from `field`; the remaining nodes are solved by SOR until the
// max stencil residual |Σ neighbours − 4u| falls below `tolerance`.

inline constexpr std::size_t kLaplaceMaxSweeps = 200000;

inline void solve_laplace(FieldGrid& field, const std::vector<bool>& fixed, double tolerance = 1e-10) {
  const std::size_t ny = field.rows(), nx = field.cols();
  if (fixed.size() != ny * nx) throw DimensionError("fixed-node mask does not match field size");
  for (std::size_t i = 0; i < ny; ++i) {
    for (std::size_t j = 0; j < nx; ++j) {
      const bool border = i == 0 || j == 0 || i + 1 == ny || j + 1 == nx;
      if (border && !fixed[i * nx + j]) throw ConfigError("every border node must be a Dirichlet node");
    }
  }
  const double h = std::max(ny, nx) - 1.0;
  const double omega = 2.0 / (1.0 + std::sin(std::numbers::pi / h));
  auto residual_at = [&](std::size_t i, std::size_t j) {
    return field(i - 1, j) + field(i + 1, j) + field(i, j - 1) + field(i, j + 1) - 4.0 * field(i, j);
  };
  for (std::size_t sweep = 0; sweep < kLaplaceMaxSweeps; ++sweep) {
    for (std::size_t i = 1; i + 1 < ny; ++i) {
      for (std::size_t j = 1; j + 1 < nx; ++j) {
        if (fixed[i * nx + j]) continue;
        field(i, j) += omega * 0.25 * residual_at(i, j);
      }
    }
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < ny; ++i) {
      for (std::size_t j = 1; j + 1 < nx; ++j) {
        if (!fixed[i * nx + j]) worst = std::max(worst, std::abs(residual_at(i, j)));
      }
    }
    if (!std::isfinite(worst)) break;
    if (worst < tolerance) return;
  }
  throw NumericError("Laplace solve did not converge on a " + std::to_string(ny) + "x" + std::to_string(nx) +
                     " grid");
}

struct PoissonInputs {
  double left = 0.5;
  double right = 0.5;
  double bottom = 0.5;
  double top = 0.5;
  double center = 0.5;
};

// Grid index of the node nearest the domain centre; ties go to the lower
// index.
inline std::size_t poisson_center_index(std::size_t n) { return (n - 1) / 2; }

// u_xx + u_yy = 0 on [0,1]² with constant border values and the node nearest
// (0.5, 0.5) pinned to `center`. Columns run along x, rows along y; corner
// nodes take the mean of their two borders.
inline FieldGrid solve_poisson(const PoissonInputs& in, std::size_t n) {
  for (double v : {in.left, in.right, in.bottom, in.top, in.center}) {
    if (!(v >= 0.1 && v <= 0.9)) throw ConfigError("Poisson boundary and centre values must lie in [0.1, 0.9]");
  }
  if (n < 8) throw ConfigError("Poisson mesh must be at least 8x8");
  FieldGrid f(n, n);
  std::vector<bool> fixed(n * n, false);
  const double interior_guess = (in.left + in.right + in.bottom + in.top) / 4.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool l = j == 0, r = j + 1 == n, b = i == 0, t = i + 1 == n;
      double v = interior_guess;
      if ((l || r) && (b || t)) v = 0.5 * ((l ? in.left : in.right) + (b ? in.bottom : in.top));
      else if (l) v = in.left;
      else if (r) v = in.right;
      else if (b) v = in.bottom;
      else if (t) v = in.top;
      f(i, j) = v;
      fixed[i * n + j] = l || r || b || t;
    }
  }
  const std::size_t c = poisson_center_index(n);
  f(c, c) = in.center;
  fixed[c * n + c] = true;
  solve_laplace(f, fixed);
  return f;
}

// ---------------------------------------------------------------------------

// Bilinear resampling on normalized coordinates; corner nodes map onto
// corner nodes exactly.
inline FieldGrid upscale_bilinear(const FieldGrid& field, std::size_t out_rows, std::size_t out_cols) {
  if (out_rows < 2 || out_cols < 2) throw ConfigError("upscale target must be at least 2x2");
  const std::size_t r = field.rows(), c = field.cols();
  FieldGrid out(out_rows, out_cols, field.row_extent, field.col_extent);
  auto locate = [](std::size_t i, std::size_t n_out, std::size_t n_in, std::size_t& i0, double& frac) {
    const std::size_t num = i * (n_in - 1);
    i0 = std::min(num / (n_out - 1), n_in - 2);
    frac = static_cast<double>(num - i0 * (n_out - 1)) / static_cast<double>(n_out - 1);
  };
  for (std::size_t i = 0; i < out_rows; ++i) {
    std::size_t i0;
    double fi;
    locate(i, out_rows, r, i0, fi);
    for (std::size_t j = 0; j < out_cols; ++j) {
      std::size_t j0;
      double fj;
      locate(j, out_cols, c, j0, fj);
      const double top = (1.0 - fj) * field(i0, j0) + fj * field(i0, j0 + 1);
      const double bot = (1.0 - fj) * field(i0 + 1, j0) + fj * field(i0 + 1, j0 + 1);
      out(i, j) = (1.0 - fi) * top + fi * bot;
    }
  }
  return out;
}

}  // namespace dmf
