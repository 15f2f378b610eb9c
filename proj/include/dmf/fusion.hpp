#pragma once

// Multi-fidelity model variants built on a low-fidelity DMF.
//
//   low    the pretrained low-fidelity network used as-is
//   trans  low network + one affine head over [x, f_L(x)], fine-tuned on
//          high-fidelity data with separate rates r1 (w_L), r2 (α_L), r3 (head)
//   dmf2   a second DMF mapping predicted f_L(x) to y_H
//   hf     a single DMF trained on high-fidelity data only
//   copy   a clone of the low network fine-tuned on high-fidelity data
//
// All networks work in z-scored coordinates; predictions are de-normalized.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmf/autodiff.hpp"
#include "dmf/candidate_ops.hpp"
#include "dmf/dag.hpp"
#include "dmf/dataset.hpp"
#include "dmf/error.hpp"
#include "dmf/normalize.hpp"
#include "dmf/rng.hpp"
#include "dmf/trainer.hpp"

namespace dmf {

enum class Variant { Low, Trans, Dmf2, HfOnly, Copy };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::Low: return "low";
    case Variant::Trans: return "trans";
    case Variant::Dmf2: return "dmf2";
    case Variant::HfOnly: return "hf";
    case Variant::Copy: return "copy";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::Low, Variant::Trans, Variant::Dmf2, Variant::HfOnly, Variant::Copy}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + s + "' (expected trans|dmf2|hf|copy|low)");
}

struct FinetuneConfig {
  double r1 = 1e-4;  // low-network weights
  double r2 = 1e-4;  // low-network architecture logits
  double r3 = 1e-2;  // head
  int epochs = 2000;

  void validate() const {
    if (!(r1 >= 0.0) || !(r2 >= 0.0) || !(r3 >= 0.0)) throw ConfigError("fine-tune rates must be nonnegative");
    if (epochs < 0) throw ConfigError("fine-tune epochs must be nonnegative");
  }
};

// Everything `train` needs besides the data.
struct ModelConfig {
  std::size_t n_cells = 3;
  std::size_t node_width = 20;
  TrainConfig low;       // pretraining of the low-fidelity network
  TrainConfig high;      // dmf2 second network, hf-only, copy fine-tuning
  FinetuneConfig finetune;

  void validate() const {
    DagConfig{n_cells, 1, 1, node_width}.validate();
    low.validate();
    high.validate();
    finetune.validate();
  }
};

inline FinetuneConfig finetune_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {"r1", "r2", "r3", "epochs"};
  if (!j.is_object()) throw ConfigError("finetune config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) throw ConfigError("unknown finetune config key '" + key + "'");
  }
  FinetuneConfig c;
  try {
    c.r1 = j.value("r1", c.r1);
    c.r2 = j.value("r2", c.r2);
    c.r3 = j.value("r3", c.r3);
    c.epochs = j.value("epochs", c.epochs);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad finetune config value: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const FinetuneConfig& c) {
  return nlohmann::json{{"r1", c.r1}, {"r2", c.r2}, {"r3", c.r3}, {"epochs", c.epochs}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {"n_cells", "node_width", "low", "high", "finetune"};
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) throw ConfigError("unknown model config key '" + key + "'");
  }
  ModelConfig c;
  try {
    c.n_cells = j.value("n_cells", c.n_cells);
    c.node_width = j.value("node_width", c.node_width);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config value: ") + e.what());
  }
  if (j.contains("low")) c.low = train_config_from_json(j.at("low"));
  if (j.contains("high")) c.high = train_config_from_json(j.at("high"));
  if (j.contains("finetune")) c.finetune = finetune_config_from_json(j.at("finetune"));
  c.validate();
  return c;
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{{"n_cells", c.n_cells},
                        {"node_width", c.node_width},
                        {"low", to_json(c.low)},
                        {"high", to_json(c.high)},
                        {"finetune", to_json(c.finetune)}};
}

// ---------------------------------------------------------------------------

// A DMF together with the statistics it was trained under.
struct LowModel {
  DmfNetwork net;
  Normalizer x_norm;
  Normalizer y_norm;

  std::size_t input_dim() const { return net.config().in_dim; }
  std::size_t output_dim() const { return net.config().out_dim; }

  Tensor predict(const Tensor& x) const {
    check_input(x);
    return y_norm.invert(net.predict(x_norm.apply(x)));
  }

  LowModel clone() const { return LowModel{net.clone(), x_norm, y_norm}; }

  void check_input(const Tensor& x) const {
    if (x.rank() != 2 || x.cols() != input_dim()) {
      throw DimensionError("model expects n x " + std::to_string(input_dim()) + " inputs, got " +
                           shape_string(x.shape()));
    }
  }
};

// Trains a fresh DMF on (x, y) with statistics fitted on the same data.
inline LowModel train_surrogate(const Tensor& x, const Tensor& y, const TrainConfig& cfg, std::size_t n_cells = 3,
                                std::size_t node_width = 20, TrainTrace* trace = nullptr) {
  if (x.rows() == 0 || x.rows() != y.rows()) throw ConfigError("training data is empty or misaligned");
  LowModel m{build_dag(DagConfig{n_cells, x.cols(), y.cols(), node_width}, cfg.seed), Normalizer::fit(x),
             Normalizer::fit(y)};
  TrainTrace t = train(m.net, m.x_norm.apply(x), m.y_norm.apply(y), cfg);
  if (trace) *trace = std::move(t);
  return m;
}

inline LowModel pretrain_low(const FidelityDataset& data, const TrainConfig& cfg, std::size_t n_cells = 3,
                             std::size_t node_width = 20, TrainTrace* trace = nullptr) {
  if (data.levels.empty() || data.low().count() == 0) throw ConfigError("low-fidelity data is empty");
  return train_surrogate(data.low().x, data.low().y, cfg, n_cells, node_width, trace);
}

// ---------------------------------------------------------------------------

struct TransModel {
  LowModel low;
  DenseLayer head;     // (l + d_L) -> d_H, no activation
  Normalizer y_norm;   // high-fidelity output statistics
  FinetuneConfig rates;

  std::size_t output_dim() const { return head.out_dim(); }

  Var forward(Tape& tape, Var xn) const {
    Var fl = low.net.forward(tape, xn);
    Var features = tape.concat_cols(xn, fl);
    return tape.linear(features, tape.param(head.weight), tape.param(head.bias));
  }

  Tensor predict(const Tensor& x) const {
    low.check_input(x);
    Tape t;
    return y_norm.invert(t.value(forward(t, t.constant(low.x_norm.apply(x)))));
  }

  std::size_t head_parameter_count() const { return head.weight->value.size() + head.bias->value.size(); }
};

// Attaches a zero-initialized head to a copy of `low`. Output statistics
// come from the high-fidelity training targets, so the untrained model
// predicts their mean.
inline TransModel build_trans(const LowModel& low, const Tensor& y_high, const FinetuneConfig& rates = {}) {
  const std::size_t in = low.input_dim() + low.output_dim();
  const std::size_t out = y_high.cols();
  return TransModel{low.clone(),
                    DenseLayer{make_param("head.W", Tensor(Shape{in, out})), make_param("head.b", Tensor(Shape{out})),
                               false},
                    Normalizer::fit(y_high), rates};
}

// Full-batch gradient steps on the high-fidelity MSE; every group is
// stepped every epoch at its own rate. Returns the per-epoch loss before
// each step.
inline std::vector<double> finetune_trans(TransModel& model, const FidelityDataset& data, int epochs) {
  if (data.levels.empty() || data.high().count() == 0) throw ConfigError("high-fidelity data is empty");
  model.rates.validate();
  const Tensor xn = model.low.x_norm.apply(data.high().x);
  const Tensor yn = model.y_norm.apply(data.high().y);
  const ParamGroup weights{GroupLabel::Weights, model.rates.r1, model.low.net.weight_parameters()};
  const ParamGroup arch{GroupLabel::Architecture, model.rates.r2, model.low.net.architecture_parameters()};
  const ParamGroup head{GroupLabel::Head, model.rates.r3, {model.head.weight, model.head.bias}};
  for (const auto* g : {&weights, &arch, &head}) g->zero_grad();
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(epochs));
  for (int e = 0; e < epochs; ++e) {
    Tape tape;
    Var loss = tape.mse(model.forward(tape, tape.constant(xn)), yn);
    const double value = tape.value(loss)[0];
    if (!std::isfinite(value)) throw NumericError("fine-tuning loss became non-finite");
    losses.push_back(value);
    tape.backward(loss);
    sgd_step(weights);
    sgd_step(arch);
    sgd_step(head);
  }
  return losses;
}

// ---------------------------------------------------------------------------

struct Dmf2Model {
  LowModel low;
  DmfNetwork second;  // d_L -> d_H on normalized coordinates
  Normalizer y_norm;

  Tensor predict(const Tensor& x) const {
    low.check_input(x);
    const Tensor fl = low.net.predict(low.x_norm.apply(x));
    return y_norm.invert(second.predict(fl));
  }
};

// The second network sees predicted (not observed) low-fidelity responses.
inline Dmf2Model train_dmf2(const LowModel& low, const FidelityDataset& data, const TrainConfig& cfg,
                            std::size_t n_cells = 3, std::size_t node_width = 20, TrainTrace* trace = nullptr) {
  if (data.levels.empty() || data.high().count() == 0) throw ConfigError("high-fidelity data is empty");
  const Tensor fl = low.net.predict(low.x_norm.apply(data.high().x));
  Dmf2Model m{low.clone(),
              build_dag(DagConfig{n_cells, low.output_dim(), data.high().output_dim(), node_width},
                        derive_seed(cfg.seed, 2)),
              Normalizer::fit(data.high().y)};
  TrainTrace t = train(m.second, fl, m.y_norm.apply(data.high().y), cfg);
  if (trace) *trace = std::move(t);
  return m;
}

// DMF-HF: ignores every level but the highest.
inline LowModel train_hf_only(const FidelityDataset& data, const TrainConfig& cfg, std::size_t n_cells = 3,
                              std::size_t node_width = 20) {
  if (data.levels.empty() || data.high().count() == 0) throw ConfigError("high-fidelity data is empty");
  return train_surrogate(data.high().x, data.high().y, cfg, n_cells, node_width);
}

// DMF-copy: clone of the low model, trained further on high-fidelity data
// under the low model's statistics.
inline LowModel train_copy(const LowModel& low, const FidelityDataset& data, const TrainConfig& cfg) {
  if (data.levels.empty() || data.high().count() == 0) throw ConfigError("high-fidelity data is empty");
  if (data.high().output_dim() != low.output_dim()) {
    throw ConfigError("copy variant needs equal low/high output dimensions");
  }
  LowModel m = low.clone();
  train(m.net, m.x_norm.apply(data.high().x), m.y_norm.apply(data.high().y), cfg);
  return m;
}

// ---------------------------------------------------------------------------

struct SurrogateModel {
  Variant variant = Variant::Low;
  std::variant<LowModel, TransModel, Dmf2Model> model;
};

inline Tensor predict_high(const SurrogateModel& m, const Tensor& x) {
  return std::visit([&](const auto& inner) { return inner.predict(x); }, m.model);
}

// Fits `variant` on top of an already pretrained low model.
inline SurrogateModel fit_from_low(Variant variant, const LowModel& low, const FidelityDataset& data,
                                   const ModelConfig& cfg) {
  switch (variant) {
    case Variant::Low:
      return SurrogateModel{variant, low.clone()};
    case Variant::Trans: {
      TransModel t = build_trans(low, data.high().y, cfg.finetune);
      finetune_trans(t, data, cfg.finetune.epochs);
      return SurrogateModel{variant, std::move(t)};
    }
    case Variant::Dmf2:
      return SurrogateModel{variant, train_dmf2(low, data, cfg.high, cfg.n_cells, cfg.node_width)};
    case Variant::Copy:
      return SurrogateModel{variant, train_copy(low, data, cfg.high)};
    case Variant::HfOnly:
      return SurrogateModel{variant, train_hf_only(data, cfg.high, cfg.n_cells, cfg.node_width)};
  }
  throw ConfigError("unhandled variant");
}

inline SurrogateModel fit_variant(Variant variant, const FidelityDataset& data, const ModelConfig& cfg) {
  cfg.validate();
  data.validate();
  if (variant == Variant::HfOnly) {
    return SurrogateModel{variant, train_hf_only(data, cfg.high, cfg.n_cells, cfg.node_width)};
  }
  return fit_from_low(variant, pretrain_low(data, cfg.low, cfg.n_cells, cfg.node_width), data, cfg);
}

// ---------------------------------------------------------------------------
// Serialization: the dag_model network document plus head weights and
// normalization statistics.

inline nlohmann::json to_json(const LowModel& m) {
  return nlohmann::json{{"network", network_to_json(m.net)}, {"x_norm", to_json(m.x_norm)}, {"y_norm", to_json(m.y_norm)}};
}

inline LowModel low_model_from_json(const nlohmann::json& j) {
  return LowModel{network_from_json(j.at("network")), normalizer_from_json(j.at("x_norm")),
                  normalizer_from_json(j.at("y_norm"))};
}

inline nlohmann::json model_to_json(const SurrogateModel& m) {
  nlohmann::json j{{"format", "dmf-model"}, {"version", 1}, {"variant", to_string(m.variant)}};
  if (const auto* low = std::get_if<LowModel>(&m.model)) {
    j["low"] = to_json(*low);
  } else if (const auto* t = std::get_if<TransModel>(&m.model)) {
    j["low"] = to_json(t->low);
    j["head"] = {{"weight", tensor_to_json(t->head.weight->value)}, {"bias", tensor_to_json(t->head.bias->value)}};
    j["y_norm"] = to_json(t->y_norm);
    j["rates"] = to_json(t->rates);
  } else if (const auto* d = std::get_if<Dmf2Model>(&m.model)) {
    j["low"] = to_json(d->low);
    j["second"] = network_to_json(d->second);
    j["y_norm"] = to_json(d->y_norm);
  }
  return j;
}

inline SurrogateModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "dmf-model") throw ParseError("not a dmf-model document");
    const Variant v = variant_from_string(j.at("variant").get<std::string>());
    LowModel low = low_model_from_json(j.at("low"));
    switch (v) {
      case Variant::Low:
      case Variant::HfOnly:
      case Variant::Copy:
        return SurrogateModel{v, std::move(low)};
      case Variant::Trans: {
        Tensor w = tensor_from_json(j.at("head").at("weight"));
        Tensor b = tensor_from_json(j.at("head").at("bias"));
        if (w.rank() != 2 || w.shape()[0] != low.input_dim() + low.output_dim() || b.size() != w.shape()[1]) {
          throw ParseError("head shape inconsistent with the low network");
        }
        return SurrogateModel{
            v, TransModel{std::move(low),
                          DenseLayer{make_param("head.W", std::move(w)), make_param("head.b", std::move(b)), false},
                          normalizer_from_json(j.at("y_norm")), finetune_config_from_json(j.at("rates"))}};
      }
      case Variant::Dmf2:
        return SurrogateModel{
            v, Dmf2Model{std::move(low), network_from_json(j.at("second")), normalizer_from_json(j.at("y_norm"))}};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model document: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("malformed model document: ") + e.what());
  }
  throw ParseError("unhandled variant");
}

}  // namespace dmf
