#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dmf/error.hpp"
#include "dmf/pde.hpp"
#include "dmf/tensor.hpp"

namespace dmf {

// Root of the mean squared error over all n·d entries.
inline double rmse(const Tensor& pred, const Tensor& truth) {
  require_same_shape(pred, truth, "rmse");
  if (pred.size() == 0) throw DimensionError("rmse of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

// 1 − SS_res / SS_tot. Undefined (error) for constant truth.
inline double r_squared(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DimensionError("r_squared: prediction and truth lengths differ");
  if (truth.empty()) throw DimensionError("r_squared of empty vectors");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (tot == 0.0) throw NumericError("r_squared: truth is constant");
  return 1.0 - res / tot;
}

// Pixel-wise mean absolute error over aligned field pairs.
inline FieldGrid mae_field(const std::vector<FieldGrid>& preds, const std::vector<FieldGrid>& truths) {
  if (preds.size() != truths.size()) throw DimensionError("mae_field: prediction and truth counts differ");
  if (preds.empty()) throw DimensionError("mae_field needs at least one field");
  FieldGrid out(truths.front().rows(), truths.front().cols(), truths.front().row_extent,
                truths.front().col_extent);
  for (std::size_t k = 0; k < preds.size(); ++k) {
    require_same_shape(preds[k].values, truths[k].values, "mae_field");
    require_same_shape(preds[k].values, out.values, "mae_field");
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      out.values[i] += std::abs(preds[k].values[i] - truths[k].values[i]);
    }
  }
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] /= static_cast<double>(preds.size());
  return out;
}

}  // namespace dmf
