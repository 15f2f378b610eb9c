#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dmf/autodiff.hpp"
#include "dmf/error.hpp"
#include "dmf/rng.hpp"
#include "dmf/tensor.hpp"

namespace dmf {

// Candidate operations on a DAG edge. Order is stable and used as the index
// into an edge's architecture logits.
enum class OpKind { Deep = 0, Shallow = 1, Wide = 2, Linear = 3, Zero = 4 };

inline constexpr std::size_t kNumOps = 5;
inline constexpr std::array<OpKind, kNumOps> kAllOps = {OpKind::Deep, OpKind::Shallow, OpKind::Wide,
                                                       OpKind::Linear, OpKind::Zero};

inline std::string_view to_string(OpKind k) {
  switch (k) {
    case OpKind::Deep: return "deep";
    case OpKind::Shallow: return "shallow";
    case OpKind::Wide: return "wide";
    case OpKind::Linear: return "linear";
    case OpKind::Zero: return "zero";
  }
  return "?";
}

inline OpKind op_kind_from_string(std::string_view s) {
  for (OpKind k : kAllOps) {
    if (to_string(k) == s) return k;
  }
  throw ParseError("unknown operation kind '" + std::string(s) + "'");
}

// Hidden widths of each kind; every hidden layer is followed by ReLU.
inline std::vector<std::size_t> hidden_widths(OpKind k) {
  switch (k) {
    case OpKind::Deep: return {20, 20, 20, 20};
    case OpKind::Shallow: return {20, 20};
    case OpKind::Wide: return {40, 40};
    case OpKind::Linear:
    case OpKind::Zero: return {};
  }
  return {};
}

struct DenseLayer {
  ParamPtr weight;  // in x out
  ParamPtr bias;    // out
  bool relu = false;

  std::size_t in_dim() const { return weight->value.shape()[0]; }
  std::size_t out_dim() const { return weight->value.shape()[1]; }
};

// Affine layer with weights uniform in ±sqrt(6 / fan_in) and zero bias.
inline DenseLayer make_dense(std::size_t in, std::size_t out, bool relu, Rng& rng, const std::string& name) {
  Tensor w(Shape{in, out});
  const double limit = std::sqrt(6.0 / static_cast<double>(in));
  for (double& v : w.data()) v = rng.uniform(-limit, limit);
  return DenseLayer{make_param(name + ".W", std::move(w)), make_param(name + ".b", Tensor(Shape{out})), relu};
}

class CandidateOp {
 public:
  CandidateOp(OpKind kind, std::size_t in_dim, std::size_t out_dim, std::vector<DenseLayer> layers)
      : kind_(kind), in_dim_(in_dim), out_dim_(out_dim), layers_(std::move(layers)) {}

  OpKind kind() const { return kind_; }
  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  std::vector<ParamPtr> parameters() const {
    std::vector<ParamPtr> ps;
    for (const auto& l : layers_) {
      ps.push_back(l.weight);
      ps.push_back(l.bias);
    }
    return ps;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight->value.size() + l.bias->value.size();
    return n;
  }

  Var forward(Tape& tape, Var x) const {
    const Tensor& in = tape.value(x);
    if (in.cols() != in_dim_) {
      throw DimensionError("candidate op '" + std::string(to_string(kind_)) + "' expects " +
                           std::to_string(in_dim_) + " input columns, got " + shape_string(in.shape()));
    }
    if (kind_ == OpKind::Zero) return tape.constant(Tensor(Shape{in.rows(), out_dim_}));
    Var h = x;
    for (const auto& l : layers_) {
      h = tape.linear(h, tape.param(l.weight), tape.param(l.bias));
      if (l.relu) h = tape.relu(h);
    }
    return h;
  }

  CandidateOp clone() const {
    std::vector<DenseLayer> ls;
    for (const auto& l : layers_) {
      ls.push_back(DenseLayer{make_param(l.weight->name, l.weight->value), make_param(l.bias->name, l.bias->value),
                              l.relu});
    }
    return CandidateOp(kind_, in_dim_, out_dim_, std::move(ls));
  }

 private:
  OpKind kind_;
  std::size_t in_dim_;
  std::size_t out_dim_;
  std::vector<DenseLayer> layers_;
};

// Builds the layer stack of `kind`. Kinds with hidden layers get a trailing
// linear projection when the last hidden width differs from out_dim.
inline CandidateOp build_candidate(OpKind kind, std::size_t in_dim, std::size_t out_dim, std::uint64_t seed,
                                   const std::string& name = "op") {
  if (in_dim == 0 || out_dim == 0) throw ConfigError("candidate op dimensions must be positive");
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  const std::string base = name + "." + std::string(to_string(kind));
  if (kind == OpKind::Linear) {
    layers.push_back(make_dense(in_dim, out_dim, false, rng, base + ".0"));
  } else if (kind != OpKind::Zero) {
    std::size_t prev = in_dim;
    const auto widths = hidden_widths(kind);
    for (std::size_t i = 0; i < widths.size(); ++i) {
      layers.push_back(make_dense(prev, widths[i], true, rng, base + "." + std::to_string(i)));
      prev = widths[i];
    }
    if (prev != out_dim) layers.push_back(make_dense(prev, out_dim, false, rng, base + ".proj"));
  }
  return CandidateOp(kind, in_dim, out_dim, std::move(layers));
}

// Softmax-weighted mixture of the five candidate operations.
class MixedEdge {
 public:
  MixedEdge(std::array<CandidateOp, kNumOps> ops, ParamPtr alpha) : ops_(std::move(ops)), alpha_(std::move(alpha)) {
    for (const auto& op : ops_) {
      if (op.in_dim() != ops_[0].in_dim() || op.out_dim() != ops_[0].out_dim()) {
        throw DimensionError("mixed edge operations disagree on dimensions");
      }
    }
    if (alpha_->value.size() != kNumOps) throw DimensionError("mixed edge needs 5 architecture logits");
  }

  std::size_t in_dim() const { return ops_[0].in_dim(); }
  std::size_t out_dim() const { return ops_[0].out_dim(); }
  const std::array<CandidateOp, kNumOps>& ops() const { return ops_; }
  std::array<CandidateOp, kNumOps>& ops() { return ops_; }
  const CandidateOp& op(OpKind k) const { return ops_[static_cast<std::size_t>(k)]; }
  const ParamPtr& alpha() const { return alpha_; }

  // softmax(alpha) evaluated off-tape.
  std::array<double, kNumOps> mixing_weights() const {
    Tape t;
    const Tensor& w = t.value(t.softmax(t.constant(alpha_->value)));
    std::array<double, kNumOps> out{};
    for (std::size_t l = 0; l < kNumOps; ++l) out[l] = w[l];
    return out;
  }

  Var forward(Tape& tape, Var x) const {
    Var weights = tape.softmax(tape.param(alpha_));
    std::array<Var, kNumOps> outs;
    for (std::size_t l = 0; l < kNumOps; ++l) outs[l] = ops_[l].forward(tape, x);
    return tape.weighted_sum(weights, outs);
  }

  std::vector<ParamPtr> weight_parameters() const {
    std::vector<ParamPtr> ps;
    for (const auto& op : ops_) {
      auto p = op.parameters();
      ps.insert(ps.end(), p.begin(), p.end());
    }
    return ps;
  }

  std::size_t weight_count() const {
    std::size_t n = 0;
    for (const auto& op : ops_) n += op.parameter_count();
    return n;
  }

  MixedEdge clone() const {
    return MixedEdge({ops_[0].clone(), ops_[1].clone(), ops_[2].clone(), ops_[3].clone(), ops_[4].clone()},
                     make_param(alpha_->name, alpha_->value));
  }

 private:
  std::array<CandidateOp, kNumOps> ops_;
  ParamPtr alpha_;
};

// Logits start at zero (equal mixing weights).
inline MixedEdge build_mixed_edge(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed,
                                  const std::string& name = "edge") {
  auto make = [&](OpKind k) {
    return build_candidate(k, in_dim, out_dim, derive_seed(seed, static_cast<std::uint64_t>(k)), name);
  };
  return MixedEdge({make(OpKind::Deep), make(OpKind::Shallow), make(OpKind::Wide), make(OpKind::Linear),
                    make(OpKind::Zero)},
                   make_param(name + ".alpha", Tensor(Shape{kNumOps})));
}

// Off-tape forward helpers.
inline Tensor candidate_forward(const CandidateOp& op, const Tensor& x) {
  Tape t;
  return t.value(op.forward(t, t.constant(x)));
}

inline Tensor mixed_forward(const MixedEdge& edge, const Tensor& x) {
  Tape t;
  return t.value(edge.forward(t, t.constant(x)));
}

}  // namespace dmf
