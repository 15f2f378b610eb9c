#pragma once

// Loss assembly and the two training schedules.
//
//   L(w, α) = (1/N) Σ ||y_i − f(x_i; w, α)||² + λ1 ||w||² + λ2 ||α||²
//
// Alternate: every inner epoch steps w with r1; on epochs i with
// i mod k == 0 the α gradient is re-evaluated at the updated w and α is
// stepped with r2. Joint: one gradient evaluation per epoch, both groups
// stepped from it. All epochs are full batch.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmf/autodiff.hpp"
#include "dmf/dag.hpp"
#include "dmf/error.hpp"

namespace dmf {

enum class TrainMode { Alternate, Joint };

struct TrainConfig {
  int outer_iters = 1;     // N
  int inner_epochs = 2000;  // W
  int alpha_every = 5;      // k
  double r1 = 1e-2;         // weight learning rate
  double r2 = 1e-2;         // architecture learning rate
  double lambda1 = 1e-4;
  double lambda2 = 1e-4;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::Alternate;

  void validate() const {
    if (outer_iters < 0 || inner_epochs < 0) throw ConfigError("iteration counts must be nonnegative");
    if (alpha_every < 1) throw ConfigError("alpha_every must be >= 1");
    if (!(r1 >= 0.0) || !(r2 >= 0.0)) throw ConfigError("learning rates must be nonnegative");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("weight decays must be nonnegative");
  }
};

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {"outer_iters", "inner_epochs", "alpha_every", "r1",  "r2",
                                              "lambda1",     "lambda2",      "seed",        "mode"};
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) throw ConfigError("unknown train config key '" + key + "'");
  }
  TrainConfig c;
  try {
    c.outer_iters = j.value("outer_iters", c.outer_iters);
    c.inner_epochs = j.value("inner_epochs", c.inner_epochs);
    c.alpha_every = j.value("alpha_every", c.alpha_every);
    c.r1 = j.value("r1", c.r1);
    c.r2 = j.value("r2", c.r2);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.seed = j.value("seed", c.seed);
    const std::string mode = j.value("mode", std::string("alternate"));
    if (mode == "alternate") c.mode = TrainMode::Alternate;
    else if (mode == "joint") c.mode = TrainMode::Joint;
    else throw ConfigError("mode must be 'alternate' or 'joint', got '" + mode + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad train config value: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{{"outer_iters", c.outer_iters}, {"inner_epochs", c.inner_epochs},
                        {"alpha_every", c.alpha_every}, {"r1", c.r1},
                        {"r2", c.r2},                   {"lambda1", c.lambda1},
                        {"lambda2", c.lambda2},         {"seed", c.seed},
                        {"mode", c.mode == TrainMode::Alternate ? "alternate" : "joint"}};
}

struct LossTerms {
  double total = 0.0;
  double data = 0.0;
  double reg_weights = 0.0;  // ||w||²
  double reg_alpha = 0.0;    // ||α||²
};

struct TrainTrace {
  LossTerms initial;
  std::vector<double> total;
  std::vector<double> data;
  std::vector<double> reg_weights;
  std::vector<double> reg_alpha;
  std::vector<int> alpha_updates;  // per outer iteration

  std::size_t epochs() const { return total.size(); }

  void push(const LossTerms& t) {
    total.push_back(t.total);
    data.push_back(t.data);
    reg_weights.push_back(t.reg_weights);
    reg_alpha.push_back(t.reg_alpha);
  }
};

// Records the loss on `tape`; returns the total node and fills `terms`.
inline Var record_loss(Tape& tape, const DmfNetwork& net, const Tensor& x, const Tensor& y, double lambda1,
                       double lambda2, LossTerms* terms = nullptr) {
  if (x.rows() != y.rows()) {
    throw DimensionError("inputs " + shape_string(x.shape()) + " and targets " + shape_string(y.shape()) +
                         " are not row-aligned");
  }
  Var pred = net.forward(tape, tape.constant(x));
  Var loss = tape.mse(pred, y);
  const double data = tape.value(loss)[0];
  const auto wp = net.weight_parameters();
  const auto ap = net.architecture_parameters();
  Var sw = tape.params_sum_squares(wp);
  Var sa = tape.params_sum_squares(ap);
  const double rw = tape.value(sw)[0], ra = tape.value(sa)[0];
  if (lambda1 != 0.0) loss = tape.add(loss, tape.scale(sw, lambda1));
  if (lambda2 != 0.0) loss = tape.add(loss, tape.scale(sa, lambda2));
  if (terms) *terms = LossTerms{tape.value(loss)[0], data, rw, ra};
  return loss;
}

inline LossTerms loss_total(const DmfNetwork& net, const Tensor& x, const Tensor& y, double lambda1,
                            double lambda2) {
  Tape tape;
  LossTerms terms;
  record_loss(tape, net, x, y, lambda1, lambda2, &terms);
  return terms;
}

namespace detail {

inline LossTerms gradient_pass(const DmfNetwork& net, const Tensor& x, const Tensor& y, const TrainConfig& cfg) {
  Tape tape;
  LossTerms terms;
  Var loss = record_loss(tape, net, x, y, cfg.lambda1, cfg.lambda2, &terms);
  if (!std::isfinite(terms.total)) {
    throw NumericError("training loss became non-finite (r1=" + std::to_string(cfg.r1) +
                       ", r2=" + std::to_string(cfg.r2) + ")");
  }
  tape.backward(loss);
  return terms;
}

}  // namespace detail

inline TrainTrace alternate_train(DmfNetwork& net, const Tensor& x, const Tensor& y, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.mode != TrainMode::Alternate) throw ConfigError("alternate_train needs mode = alternate");
  auto groups = param_groups(net);
  groups.weights.zero_grad();
  groups.architecture.zero_grad();
  TrainTrace trace;
  bool first = true;
  for (int t = 0; t < cfg.outer_iters; ++t) {
    int updates = 0;
    for (int i = 1; i <= cfg.inner_epochs; ++i) {
      // this pass sees the state left by the previous epoch
      const LossTerms before = detail::gradient_pass(net, x, y, cfg);
      if (first) {
        trace.initial = before;
        first = false;
      } else {
        trace.push(before);
      }
      sgd_step(groups.weights, cfg.r1);
      groups.architecture.zero_grad();
      if (i % cfg.alpha_every == 0) {
        detail::gradient_pass(net, x, y, cfg);
        sgd_step(groups.architecture, cfg.r2);
        groups.weights.zero_grad();
        ++updates;
      }
    }
    trace.alpha_updates.push_back(updates);
  }
  const LossTerms end = loss_total(net, x, y, cfg.lambda1, cfg.lambda2);
  if (first) trace.initial = end;
  else trace.push(end);
  return trace;
}

inline TrainTrace joint_train(DmfNetwork& net, const Tensor& x, const Tensor& y, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.mode != TrainMode::Joint) throw ConfigError("joint_train needs mode = joint");
  auto groups = param_groups(net);
  groups.weights.zero_grad();
  groups.architecture.zero_grad();
  TrainTrace trace;
  bool first = true;
  for (int t = 0; t < cfg.outer_iters; ++t) {
    for (int i = 1; i <= cfg.inner_epochs; ++i) {
      const LossTerms before = detail::gradient_pass(net, x, y, cfg);
      if (first) {
        trace.initial = before;
        first = false;
      } else {
        trace.push(before);
      }
      sgd_step(groups.weights, cfg.r1);
      sgd_step(groups.architecture, cfg.r2);
    }
    trace.alpha_updates.push_back(cfg.inner_epochs);
  }
  const LossTerms end = loss_total(net, x, y, cfg.lambda1, cfg.lambda2);
  if (first) trace.initial = end;
  else trace.push(end);
  return trace;
}

inline TrainTrace train(DmfNetwork& net, const Tensor& x, const Tensor& y, const TrainConfig& cfg) {
  return cfg.mode == TrainMode::Alternate ? alternate_train(net, x, y, cfg) : joint_train(net, x, y, cfg);
}

}  // namespace dmf
