#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every primitive applied during one forward pass. Values
// live on the tape; trainable tensors live in Parameter objects that are
// bound to the tape as leaves. backward() sweeps the record in reverse and
// accumulates into Parameter::grad, so several passes may be summed before
// an optimizer step clears them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dmf/error.hpp"
#include "dmf/tensor.hpp"

namespace dmf {

struct Parameter {
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }

  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value
};

using ParamPtr = std::shared_ptr<Parameter>;

inline ParamPtr make_param(std::string name, Tensor value) {
  return std::make_shared<Parameter>(std::move(name), std::move(value));
}

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Tensor& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.param ? n.param->value : n.value;
  }
  std::size_t size() const { return nodes_.size(); }
  bool swept() const { return swept_; }

  Var constant(Tensor v) { return push(std::move(v), false, {}); }

  // Leaf reading p->value in place; p must not change until the tape is
  // swept.
  Var param(const ParamPtr& p) {
    Var v = push(Tensor(), true, {});
    nodes_[v.id].param = p;
    return v;
  }

  // out = x W + b, x: n x p, W: p x q, b: q.
  Var linear(Var x, Var w, Var b) {
    const Tensor& X = value(x);
    const Tensor& W = value(w);
    const Tensor& B = value(b);
    if (W.rank() != 2 || X.cols() != W.shape()[0] || B.size() != W.shape()[1]) {
      throw DimensionError("linear: cannot apply weight " + shape_string(W.shape()) + " and bias " +
                           shape_string(B.shape()) + " to input " + shape_string(X.shape()));
    }
    const std::size_t n = X.rows(), p = W.shape()[0], q = W.shape()[1];
    Tensor out(Shape{n, q});
    for (std::size_t i = 0; i < n; ++i) {
      double* o = &out.data()[i * q];
      std::copy(B.data().begin(), B.data().end(), o);
      const double* xi = &X.data()[i * p];
      for (std::size_t k = 0; k < p; ++k) {
        const double a = xi[k];
        const double* wk = &W.data()[k * q];
        for (std::size_t j = 0; j < q; ++j) o[j] += a * wk[j];
      }
    }
    const bool ng = needs(x) || needs(w) || needs(b);
    return push(std::move(out), ng, [x, w, b, n, p, q](Tape& t, const Tensor& g) {
      const Tensor& X = t.value(x);
      const Tensor& W = t.value(w);
      if (t.needs(x)) {
        Tensor& dx = t.grad_of(x);
        for (std::size_t i = 0; i < n; ++i) {
          const double* gi = &g.data()[i * q];
          for (std::size_t k = 0; k < p; ++k) {
            const double* wk = &W.data()[k * q];
            double s = 0.0;
            for (std::size_t j = 0; j < q; ++j) s += gi[j] * wk[j];
            dx.data()[i * p + k] += s;
          }
        }
      }
      if (t.needs(w)) {
        Tensor& dw = t.grad_of(w);
        for (std::size_t i = 0; i < n; ++i) {
          const double* gi = &g.data()[i * q];
          const double* xi = &X.data()[i * p];
          for (std::size_t k = 0; k < p; ++k) {
            const double a = xi[k];
            double* dwk = &dw.data()[k * q];
            for (std::size_t j = 0; j < q; ++j) dwk[j] += a * gi[j];
          }
        }
      }
      if (t.needs(b)) {
        Tensor& db = t.grad_of(b);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < q; ++j) db.data()[j] += g.data()[i * q + j];
        }
      }
    });
  }

  Var relu(Var x) {
    Tensor out = value(x);
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), needs(x), [x](Tape& t, const Tensor& g) {
      const Tensor& X = t.value(x);
      Tensor& dx = t.grad_of(x);
      // subgradient at 0 is 0
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (X[i] > 0.0) dx[i] += g[i];
      }
    });
  }

  // Stable softmax over all entries of v.
  Var softmax(Var v) {
    const Tensor& in = value(v);
    Tensor out(in.shape());
    const double m = *std::max_element(in.data().begin(), in.data().end());
    double z = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      out[i] = std::exp(in[i] - m);
      z += out[i];
    }
    for (double& e : out.data()) e /= z;
    const std::size_t self = nodes_.size();
    return push(std::move(out), needs(v), [v, self](Tape& t, const Tensor& g) {
      const Tensor& s = t.nodes_[self].value;
      double dot = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) dot += g[i] * s[i];
      Tensor& dv = t.grad_of(v);
      for (std::size_t i = 0; i < s.size(); ++i) dv[i] += s[i] * (g[i] - dot);
    });
  }

  // out = sum_l weights[l] * terms[l]; all terms share one shape.
  Var weighted_sum(Var weights, std::span<const Var> terms) {
    const Tensor& w = value(weights);
    if (terms.empty() || w.size() != terms.size()) {
      throw DimensionError("weighted_sum: " + std::to_string(w.size()) + " weights for " +
                           std::to_string(terms.size()) + " terms");
    }
    Tensor out(value(terms[0]).shape());
    bool ng = needs(weights);
    for (std::size_t l = 0; l < terms.size(); ++l) {
      const Tensor& t = value(terms[l]);
      require_same_shape(out, t, "weighted_sum");
      const double wl = w[l];
      for (std::size_t i = 0; i < t.size(); ++i) out[i] += wl * t[i];
      ng = ng || needs(terms[l]);
    }
    std::vector<Var> ts(terms.begin(), terms.end());
    return push(std::move(out), ng, [weights, ts = std::move(ts)](Tape& t, const Tensor& g) {
      const Tensor& w = t.value(weights);
      const bool nw = t.needs(weights);
      for (std::size_t l = 0; l < ts.size(); ++l) {
        const Tensor& term = t.value(ts[l]);
        if (nw) {
          double dot = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * term[i];
          t.grad_of(weights)[l] += dot;
        }
        if (t.needs(ts[l])) {
          Tensor& dt = t.grad_of(ts[l]);
          const double wl = w[l];
          for (std::size_t i = 0; i < g.size(); ++i) dt[i] += wl * g[i];
        }
      }
    });
  }

  Var add(Var a, Var b) {
    require_same_shape(value(a), value(b), "add");
    Tensor out = value(a);
    const Tensor& B = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, const Tensor& g) {
      for (Var v : {a, b}) {
        if (!t.needs(v)) continue;
        Tensor& d = t.grad_of(v);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    });
  }

  Var scale(Var x, double c) {
    Tensor out = value(x);
    for (double& v : out.data()) v *= c;
    return push(std::move(out), needs(x), [x, c](Tape& t, const Tensor& g) {
      Tensor& d = t.grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += c * g[i];
    });
  }

  // [a | b] for matrices with equal row counts.
  Var concat_cols(Var a, Var b) {
    Tensor out = hcat(value(a), value(b));
    const std::size_t ca = value(a).cols(), cb = value(b).cols();
    return push(std::move(out), needs(a) || needs(b), [a, b, ca, cb](Tape& t, const Tensor& g) {
      const std::size_t n = g.rows();
      if (t.needs(a)) {
        Tensor& d = t.grad_of(a);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < ca; ++j) d[i * ca + j] += g[i * (ca + cb) + j];
      }
      if (t.needs(b)) {
        Tensor& d = t.grad_of(b);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < cb; ++j) d[i * cb + j] += g[i * (ca + cb) + ca + j];
      }
    });
  }

  // (1/n) sum_i ||pred_i - target_i||^2 over the n rows.
  Var mse(Var pred, const Tensor& target) {
    const Tensor& p = value(pred);
    require_same_shape(p, target, "mse");
    const double inv_n = 1.0 / static_cast<double>(p.rows());
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = p[i] - target[i];
      s += d * d;
    }
    const std::size_t tid = constant(target).id;
    return push(Tensor::scalar(s * inv_n), needs(pred), [pred, tid, inv_n](Tape& t, const Tensor& g) {
      const Tensor& p = t.value(pred);
      const Tensor& y = t.nodes_[tid].value;
      Tensor& d = t.grad_of(pred);
      const double c = 2.0 * inv_n * g[0];
      for (std::size_t i = 0; i < p.size(); ++i) d[i] += c * (p[i] - y[i]);
    });
  }

  Var sum_squares(Var x) {
    const double s = value(x).squared_norm();
    return push(Tensor::scalar(s), needs(x), [x](Tape& t, const Tensor& g) {
      const Tensor& X = t.value(x);
      Tensor& d = t.grad_of(x);
      for (std::size_t i = 0; i < X.size(); ++i) d[i] += 2.0 * X[i] * g[0];
    });
  }

  // Σ_p ‖p‖² over parameters read directly, without one leaf per tensor.
  // Gradients go straight into Parameter::grad.
  Var params_sum_squares(std::span<const ParamPtr> params) {
    double s = 0.0;
    for (const auto& p : params) s += p->value.squared_norm();
    const bool any = !params.empty();
    std::vector<ParamPtr> ps(params.begin(), params.end());
    return push(Tensor::scalar(s), any, [ps = std::move(ps)](Tape&, const Tensor& g) {
      for (const auto& p : ps) {
        for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += 2.0 * p->value[i] * g[0];
      }
    });
  }

  // Reverse sweep from a scalar node. A tape can be swept once.
  void backward(Var loss) {
    if (swept_) throw StaleTapeError("backward called twice on the same tape; run a new forward pass");
    if (value(loss).size() != 1) {
      throw DimensionError("backward needs a scalar loss, got " + shape_string(value(loss).shape()));
    }
    swept_ = true;
    if (!needs(loss)) return;
    grad_of(loss)[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.grad) continue;
      if (node.param) {
        Tensor& pg = node.param->grad;
        for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += (*node.grad)[i];
      } else if (node.reverse) {
        node.reverse(*this, *node.grad);
      }
    }
  }

 private:
  using Reverse = std::function<void(Tape&, const Tensor&)>;

  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    bool needs_grad = false;
    ParamPtr param;
    Reverse reverse;
  };

  Var push(Tensor v, bool needs_grad, Reverse r) {
    nodes_.push_back(Node{std::move(v), std::nullopt, needs_grad, nullptr, needs_grad ? std::move(r) : Reverse{}});
    return Var{nodes_.size() - 1};
  }

  bool needs(Var v) const { return nodes_.at(v.id).needs_grad; }

  Tensor& grad_of(Var v) {
    Node& n = nodes_[v.id];
    if (!n.grad) n.grad.emplace(n.param ? n.param->value.shape() : n.value.shape());
    return *n.grad;
  }

  std::vector<Node> nodes_;
  bool swept_ = false;
};

// Central differences (f(θ+h e) − f(θ−h e)) / 2h for every entry of every
// parameter. f must read the parameters' current values.
inline std::vector<Tensor> fd_gradient(const std::function<double()>& f,
                                       std::span<const ParamPtr> params, double h) {
  if (!(h > 0.0)) throw ConfigError("fd_gradient: step must be positive");
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const ParamPtr& p : params) {
    Tensor g(p->value.shape());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = f();
      p->value[i] = saved - h;
      const double down = f();
      p->value[i] = saved;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

enum class GroupLabel { Weights, Architecture, Head };

inline const char* to_string(GroupLabel l) {
  switch (l) {
    case GroupLabel::Weights: return "weights";
    case GroupLabel::Architecture: return "architecture";
    case GroupLabel::Head: return "head";
  }
  return "?";
}

struct ParamGroup {
  GroupLabel label = GroupLabel::Weights;
  double learning_rate = 0.0;
  std::vector<ParamPtr> params;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p->value.size();
    return n;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& p : params) s += p->value.squared_norm();
    return s;
  }

  void zero_grad() const {
    for (const auto& p : params) p->zero_grad();
  }
};

// Throws if any parameter object appears in more than one group.
inline void check_partition(std::span<const ParamGroup> groups) {
  std::unordered_set<const Parameter*> seen;
  for (const auto& g : groups) {
    for (const auto& p : g.params) {
      if (!seen.insert(p.get()).second) {
        throw ConfigError("parameter '" + p->name + "' belongs to more than one group");
      }
    }
  }
}

// θ ← θ − rate·∇θ, then clear the gradients.
inline void sgd_step(const ParamGroup& group, double rate) {
  if (!(rate >= 0.0)) throw ConfigError("learning rate must be nonnegative");
  for (const auto& p : group.params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= rate * p->grad[i];
    p->zero_grad();
  }
}

inline void sgd_step(const ParamGroup& group) { sgd_step(group, group.learning_rate); }

}  // namespace dmf
