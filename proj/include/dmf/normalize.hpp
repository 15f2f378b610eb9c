#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmf/error.hpp"
#include "dmf/hexfloat.hpp"
#include "dmf/tensor.hpp"

namespace dmf {

// Per-column z-score. Columns with (near) zero spread get scale 0: apply()
// only centres them and invert() returns the constant.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Normalizer fit(const Tensor& x) {
    const std::size_t n = x.rows(), d = x.cols();
    Normalizer z{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
    for (std::size_t j = 0; j < d; ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += x(i, j);
      m /= static_cast<double>(n);
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) v += (x(i, j) - m) * (x(i, j) - m);
      const double sd = std::sqrt(v / static_cast<double>(n));
      z.mean[j] = m;
      z.scale[j] = sd > 1e-12 * std::max(1.0, std::abs(m)) ? sd : 0.0;
    }
    return z;
  }

  std::size_t dim() const { return mean.size(); }

  Tensor apply(const Tensor& x) const {
    check(x);
    Tensor out = x;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < dim(); ++j) out(i, j) = (x(i, j) - mean[j]) / (scale[j] > 0.0 ? scale[j] : 1.0);
    return out;
  }

  Tensor invert(const Tensor& z) const {
    check(z);
    Tensor out = z;
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < dim(); ++j) out(i, j) = z(i, j) * scale[j] + mean[j];
    return out;
  }

  friend bool operator==(const Normalizer&, const Normalizer&) = default;

 private:
  void check(const Tensor& x) const {
    if (x.cols() != dim()) {
      throw DimensionError("normalizer fitted on " + std::to_string(dim()) + " columns, got " +
                           shape_string(x.shape()));
    }
  }
};

inline nlohmann::json to_json(const Normalizer& z) {
  return nlohmann::json{{"mean", encode_hex(z.mean)}, {"scale", encode_hex(z.scale)}};
}

inline Normalizer normalizer_from_json(const nlohmann::json& j) {
  Normalizer z{decode_hex(j.at("mean").get<std::string>()), decode_hex(j.at("scale").get<std::string>())};
  if (z.mean.size() != z.scale.size()) throw ParseError("normalizer mean/scale lengths differ");
  for (double s : z.scale) {
    if (!(s >= 0.0)) throw ParseError("normalizer scale must be nonnegative");
  }
  return z;
}

}  // namespace dmf
