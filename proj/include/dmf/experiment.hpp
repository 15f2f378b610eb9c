#pragma once

// Seeded experiment orchestration: HPO objective for DMF-trans, RMSE curves
// over growing high-fidelity sets, and the alternate-vs-joint training check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmf/benchmarks.hpp"
#include "dmf/dataset.hpp"
#include "dmf/error.hpp"
#include "dmf/fusion.hpp"
#include "dmf/hpo.hpp"
#include "dmf/metrics.hpp"
#include "dmf/normalize.hpp"
#include "dmf/rng.hpp"
#include "dmf/trainer.hpp"

namespace dmf {

// Two-level view (level 1 and level M) restricted to the given rows.
inline FidelityDataset subset_levels(const FidelityDataset& d, std::span<const std::size_t> low_rows,
                                     std::span<const std::size_t> high_rows) {
  FidelityDataset out;
  out.benchmark = d.benchmark;
  out.seed = d.seed;
  out.bounds = d.bounds;
  out.levels.push_back({d.low().x.select_rows(low_rows), d.low().y.select_rows(low_rows)});
  out.levels.push_back({d.high().x.select_rows(high_rows), d.high().y.select_rows(high_rows)});
  return out;
}

inline std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

// ---------------------------------------------------------------------------
// HPO objective: validation RMSE of DMF-trans on a seeded 80/20 split of the
// high-fidelity training rows. λ1/λ2 apply to pretraining (cached per pair),
// r1/r2/r3 to fine-tuning; budget = fine-tuning epochs.

inline const std::set<std::string>& dmf_search_keys() {
  static const std::set<std::string> keys = {"r1", "r2", "r3", "lambda1", "lambda2"};
  return keys;
}

class DmfTransObjective {
 public:
  DmfTransObjective(const FidelityDataset& data, const ModelConfig& base, std::uint64_t seed)
      : state_(std::make_shared<State>()) {
    data.validate();
    const std::size_t n = data.high().count();
    if (n < 2) throw ConfigError("HPO needs at least 2 high-fidelity samples for the validation split");
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(n))));
    Rng rng(derive_seed(seed, 0x5eed));
    const auto perm = rng.permutation(n);
    std::vector<std::size_t> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());
    state_->train = subset_levels(data, iota_rows(data.low().count()), train);
    state_->x_val = data.high().x.select_rows(val);
    state_->y_val = data.high().y.select_rows(val);
    state_->base = base;
  }

  ObjectiveFactory factory() const {
    auto st = state_;
    return [st](const Configuration& c) -> std::unique_ptr<ObjectiveSession> {
      for (const auto& name : c.names) {
        if (!dmf_search_keys().contains(name)) throw ConfigError("unknown search parameter '" + name + "'");
      }
      TrainConfig low_cfg = st->base.low;
      low_cfg.lambda1 = c.get("lambda1", low_cfg.lambda1);
      low_cfg.lambda2 = c.get("lambda2", low_cfg.lambda2);
      const auto key = std::make_pair(low_cfg.lambda1, low_cfg.lambda2);
      auto it = st->low_cache.find(key);
      if (it == st->low_cache.end()) {
        it = st->low_cache.emplace(key, pretrain_low(st->train, low_cfg, st->base.n_cells, st->base.node_width)).first;
      }
      FinetuneConfig rates = st->base.finetune;
      rates.r1 = c.get("r1", rates.r1);
      rates.r2 = c.get("r2", rates.r2);
      rates.r3 = c.get("r3", rates.r3);
      return std::make_unique<Session>(st, build_trans(it->second, st->train.high().y, rates));
    };
  }

 private:
  struct State {
    FidelityDataset train;
    Tensor x_val, y_val;
    ModelConfig base;
    std::map<std::pair<double, double>, LowModel> low_cache;
  };

  class Session : public ObjectiveSession {
   public:
    Session(std::shared_ptr<State> st, TransModel m) : st_(std::move(st)), model_(std::move(m)) {}
    double advance(int epochs) override {
      finetune_trans(model_, st_->train, epochs);
      return rmse(model_.predict(st_->x_val), st_->y_val);
    }

   private:
    std::shared_ptr<State> st_;
    TransModel model_;
  };

  std::shared_ptr<State> state_;
};

// Search space, limits and base model as read from a JSON document:
//   {"params": {"r3": [1e-2, 1e-3]} | [{"name": "r3", "values": [...]}],
//    "max_budget": 27, "eta": 3, "seed": 0, "warmup": 5, "report_every": 0,
//    "model": {...}}
struct HpoSetup {
  SearchSpace space;
  StudyLimits limits;
  ModelConfig model;
};

inline HpoSetup hpo_setup_from_json(const nlohmann::ordered_json& j) {
  static const std::set<std::string> kKeys = {"params", "max_budget", "eta", "seed", "warmup", "report_every", "model"};
  if (!j.is_object()) throw ConfigError("search space must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) throw ConfigError("unknown search space key '" + key + "'");
  }
  HpoSetup h;
  try {
    const auto& params = j.at("params");
    if (params.is_object()) {
      for (const auto& [name, values] : params.items()) h.space.params.push_back({name, values.get<std::vector<double>>()});
    } else {
      for (const auto& p : params) {
        h.space.params.push_back({p.at("name").get<std::string>(), p.at("values").get<std::vector<double>>()});
      }
    }
    h.limits.max_budget = j.value("max_budget", h.limits.max_budget);
    h.limits.eta = j.value("eta", h.limits.eta);
    h.limits.seed = j.value("seed", h.limits.seed);
    h.limits.warmup = j.value("warmup", h.limits.warmup);
    h.limits.report_every = j.value("report_every", h.limits.report_every);
    if (j.contains("model")) h.model = model_config_from_json(nlohmann::json::parse(j.at("model").dump()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad search space: ") + e.what());
  }
  h.space.validate();
  h.limits.validate();
  for (const auto& p : h.space.params) {
    if (!dmf_search_keys().contains(p.name)) throw ConfigError("unknown search parameter '" + p.name + "'");
  }
  return h;
}

inline nlohmann::ordered_json to_json(const HpoSetup& h) {
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  for (const auto& p : h.space.params) params.push_back({{"name", p.name}, {"values", p.values}});
  return nlohmann::ordered_json{{"params", params},
                                {"max_budget", h.limits.max_budget},
                                {"eta", h.limits.eta},
                                {"seed", h.limits.seed},
                                {"warmup", h.limits.warmup},
                                {"report_every", h.limits.report_every},
                                {"model", nlohmann::ordered_json::parse(to_json(h.model).dump())}};
}

// Applies a configuration's values onto a model config.
inline ModelConfig apply_configuration(ModelConfig cfg, const Configuration& c) {
  cfg.low.lambda1 = c.get("lambda1", cfg.low.lambda1);
  cfg.low.lambda2 = c.get("lambda2", cfg.low.lambda2);
  cfg.finetune.r1 = c.get("r1", cfg.finetune.r1);
  cfg.finetune.r2 = c.get("r2", cfg.finetune.r2);
  cfg.finetune.r3 = c.get("r3", cfg.finetune.r3);
  return cfg;
}

// ---------------------------------------------------------------------------
// RMSE curves

struct ExperimentSpec {
  std::string benchmark;  // generate data per seed, or
  std::string data_dir;   // subsample an existing dataset
  Variant variant = Variant::Trans;
  std::size_t n_lf = 20;
  std::vector<std::size_t> n_hf = {4, 8, 12, 16, 20};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::size_t n_test = 0;  // 0: 50 for analytic, 16 for PDE benchmarks
  std::size_t grid = 100;
  ModelConfig model;
  std::optional<Strategy> hpo_strategy;
  std::optional<HpoSetup> hpo;

  void validate() const {
    if (benchmark.empty() == data_dir.empty()) throw ConfigError("experiment needs exactly one of benchmark / data");
    if (!benchmark.empty()) benchmark_from_string(benchmark);
    if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
    if (n_hf.empty()) throw ConfigError("experiment needs at least one n_hf value");
    for (std::size_t n : n_hf) {
      if (n == 0) throw ConfigError("n_hf values must be positive");
    }
    if (n_lf == 0) throw ConfigError("n_lf must be positive");
    if (hpo_strategy.has_value() != hpo.has_value()) throw ConfigError("hpo needs both a strategy and a space");
    model.validate();
  }

  std::size_t max_n_hf() const { return *std::max_element(n_hf.begin(), n_hf.end()); }

  std::size_t resolved_n_test() const {
    if (n_test > 0) return n_test;
    return is_analytic(benchmark_from_string(benchmark)) ? 50 : 16;
  }
};

inline ExperimentSpec experiment_spec_from_json(const nlohmann::ordered_json& j) {
  static const std::set<std::string> kKeys = {"benchmark", "data",  "variant", "n_lf",  "n_hf", "seeds",
                                              "n_test",    "grid",  "model",   "hpo"};
  if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) throw ConfigError("unknown experiment spec key '" + key + "'");
  }
  ExperimentSpec s;
  try {
    s.benchmark = j.value("benchmark", std::string());
    s.data_dir = j.value("data", std::string());
    s.variant = variant_from_string(j.value("variant", std::string("trans")));
    s.n_lf = j.value("n_lf", s.n_lf);
    if (j.contains("n_hf")) s.n_hf = j.at("n_hf").get<std::vector<std::size_t>>();
    if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    s.n_test = j.value("n_test", s.n_test);
    s.grid = j.value("grid", s.grid);
    if (j.contains("model")) s.model = model_config_from_json(nlohmann::json::parse(j.at("model").dump()));
    if (j.contains("hpo")) {
      nlohmann::ordered_json h = j.at("hpo");
      if (!h.is_object() || !h.contains("strategy")) throw ConfigError("hpo block needs a strategy");
      s.hpo_strategy = strategy_from_string(h.at("strategy").get<std::string>());
      h.erase("strategy");
      s.hpo = hpo_setup_from_json(h);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad experiment spec: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::ordered_json to_json(const ExperimentSpec& s) {
  nlohmann::ordered_json j;
  if (!s.benchmark.empty()) j["benchmark"] = s.benchmark;
  if (!s.data_dir.empty()) j["data"] = s.data_dir;
  j["variant"] = to_string(s.variant);
  j["n_lf"] = s.n_lf;
  j["n_hf"] = s.n_hf;
  j["seeds"] = s.seeds;
  j["n_test"] = s.data_dir.empty() ? s.resolved_n_test() : s.n_test;
  j["grid"] = s.grid;
  j["model"] = nlohmann::ordered_json::parse(to_json(s.model).dump());
  if (s.hpo) {
    nlohmann::ordered_json h{{"strategy", to_string(*s.hpo_strategy)}};
    h.update(to_json(*s.hpo));
    j["hpo"] = h;
  }
  return j;
}

struct CurveRow {
  std::size_t n_hf;
  std::uint64_t seed;
  double rmse;
};

struct CurvePoint {
  std::size_t n_hf;
  double mean;
  double stddev;  // sample standard deviation; 0 for one seed
  std::size_t count;
};

struct RmseCurve {
  std::vector<CurveRow> rows;
  std::vector<CurvePoint> summary;

  const CurvePoint& at(std::size_t n_hf) const {
    for (const auto& p : summary) {
      if (p.n_hf == n_hf) return p;
    }
    throw ConfigError("curve has no point at n_hf = " + std::to_string(n_hf));
  }
};

// Per-n_hf mean and sample standard deviation, in first-appearance order.
inline std::vector<CurvePoint> summarize(const std::vector<CurveRow>& rows) {
  std::vector<CurvePoint> out;
  for (const auto& r : rows) {
    if (std::none_of(out.begin(), out.end(), [&](const CurvePoint& p) { return p.n_hf == r.n_hf; })) {
      out.push_back({r.n_hf, 0.0, 0.0, 0});
    }
  }
  for (auto& p : out) {
    double sum = 0.0;
    for (const auto& r : rows) {
      if (r.n_hf == p.n_hf) {
        sum += r.rmse;
        ++p.count;
      }
    }
    p.mean = sum / static_cast<double>(p.count);
    double ss = 0.0;
    for (const auto& r : rows) {
      if (r.n_hf == p.n_hf) ss += (r.rmse - p.mean) * (r.rmse - p.mean);
    }
    p.stddev = p.count > 1 ? std::sqrt(ss / static_cast<double>(p.count - 1)) : 0.0;
  }
  return out;
}

struct ExperimentResult {
  RmseCurve curve;
  std::map<std::size_t, FieldGrid> mae_fields;  // PDE benchmarks only, keyed by n_hf
};

namespace detail {

struct SeedData {
  FidelityDataset train_pool;  // level 2 holds max(n_hf) rows; subsets are prefixes
  FidelityLevel test;
};

inline SeedData seed_data(const ExperimentSpec& spec, const FidelityDataset* stored, std::uint64_t seed) {
  if (!stored) {
    GenerateOptions opt{benchmark_from_string(spec.benchmark), spec.n_lf, spec.max_n_hf(), spec.resolved_n_test(),
                        seed, spec.grid};
    FidelityDataset d = generate_dataset(opt);
    FidelityLevel test = *d.test;
    d.test.reset();
    return {std::move(d), std::move(test)};
  }
  // random prefixes of per-seed permutations keep subsets nested
  Rng rng(derive_seed(seed, 0xc0de));
  auto lo = rng.permutation(stored->low().count());
  auto hi = rng.permutation(stored->high().count());
  lo.resize(spec.n_lf);
  hi.resize(spec.max_n_hf());
  return {subset_levels(*stored, lo, hi), *stored->test};
}

inline std::size_t field_side(std::size_t d) {
  const auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
  return s * s == d ? s : 0;
}

}  // namespace detail

inline ModelConfig seeded_model_config(ModelConfig cfg, std::uint64_t seed) {
  cfg.low.seed = seed;
  cfg.high.seed = seed;
  return cfg;
}

// Trains one model per (n_hf, seed) and scores it on the held-out test set.
// Test rows never enter training, normalization or HPO.
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  std::optional<FidelityDataset> stored;
  bool fields = false;
  if (!spec.data_dir.empty()) {
    stored = read_dataset(spec.data_dir);
    if (!stored->test) throw ConfigError("dataset has no test set");
    if (spec.n_lf > stored->low().count()) throw ConfigError("n_lf exceeds the available low-fidelity samples");
    if (spec.max_n_hf() > stored->high().count()) {
      throw ConfigError("n_hf exceeds the available high-fidelity samples");
    }
    fields = stored->high().output_dim() > 1 && detail::field_side(stored->high().output_dim()) > 0;
  } else {
    if (spec.max_n_hf() > spec.n_lf) throw ConfigError("n_hf values must not exceed n_lf");
    fields = !is_analytic(benchmark_from_string(spec.benchmark));
  }

  ExperimentResult result;
  std::map<std::size_t, std::pair<std::vector<FieldGrid>, std::vector<FieldGrid>>> field_pairs;
  for (std::uint64_t seed : spec.seeds) {
    const detail::SeedData sd = detail::seed_data(spec, stored ? &*stored : nullptr, seed);
    const ModelConfig base = seeded_model_config(spec.model, seed);
    std::optional<LowModel> low;
    if (spec.variant != Variant::HfOnly && !spec.hpo) {
      low = pretrain_low(sd.train_pool, base.low, base.n_cells, base.node_width);
    }
    for (std::size_t n : spec.n_hf) {
      const FidelityDataset train =
          subset_levels(sd.train_pool, iota_rows(sd.train_pool.low().count()), iota_rows(n));
      const SurrogateModel model = [&] {
        if (spec.hpo) {
          DmfTransObjective objective(train, base, seed);
          StudyLimits limits = spec.hpo->limits;
          limits.seed = seed;
          const StudyResult study = run_study(objective.factory(), *spec.hpo_strategy, spec.hpo->space, limits);
          return fit_variant(spec.variant, train, apply_configuration(base, study.best().config));
        }
        if (low) return fit_from_low(spec.variant, *low, train, base);
        return fit_variant(spec.variant, train, base);
      }();
      const Tensor pred = predict_high(model, sd.test.x);
      result.curve.rows.push_back({n, seed, rmse(pred, sd.test.y)});
      if (fields) {
        const std::size_t side = detail::field_side(pred.cols());
        auto& [p, t] = field_pairs[n];
        for (std::size_t i = 0; i < pred.rows(); ++i) {
          p.push_back(unflatten_field(pred.row(i), side, side));
          t.push_back(unflatten_field(sd.test.y.row(i), side, side));
        }
      }
    }
  }
  result.curve.summary = summarize(result.curve.rows);
  for (const auto& [n, pt] : field_pairs) result.mae_fields.emplace(n, mae_field(pt.first, pt.second));
  return result;
}

// curve.csv, summary.csv, mae_nhf<N>.csv (fields) and the spec.json sidecar.
inline void write_experiment(const ExperimentSpec& spec, const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string bench = spec.benchmark.empty() ? spec.data_dir : spec.benchmark;
  {
    std::ofstream out(dir / "curve.csv");
    if (!out) throw ConfigError("cannot write " + (dir / "curve.csv").string());
    out << "variant,n_hf,seed,rmse\n";
    for (const auto& row : r.curve.rows) {
      out << to_string(spec.variant) << ',' << row.n_hf << ',' << row.seed << ',' << format_double(row.rmse) << '\n';
    }
  }
  {
    std::ofstream out(dir / "summary.csv");
    out << "variant,n_hf,mean_rmse,std_rmse,runs\n";
    for (const auto& p : r.curve.summary) {
      out << to_string(spec.variant) << ',' << p.n_hf << ',' << format_double(p.mean) << ','
          << format_double(p.stddev) << ',' << p.count << '\n';
    }
  }
  for (const auto& [n, field] : r.mae_fields) {
    write_matrix_csv(dir / ("mae_nhf" + std::to_string(n) + ".csv"), field.values, 'y');
  }
  nlohmann::ordered_json sidecar{{"source", bench}, {"spec", to_json(spec)}};
  std::ofstream(dir / "spec.json") << sidecar.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Alternate (k = 1) against joint training from one initialization.

struct Prop1Row {
  std::uint64_t seed;
  double rate;
  double loss_alternate;
  double loss_joint;

  double relative_gap() const { return std::abs(loss_alternate - loss_joint) / loss_joint; }
};

struct Prop1Options {
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<double> rates = {1e-4, 1e-2};
  int epochs = 2000;
  std::size_t samples = 20;
};

// Currin low-fidelity toy, standardized; r1 = r2 = rate.
inline std::vector<Prop1Row> run_prop1(const Prop1Options& opt = {}) {
  std::vector<Prop1Row> rows;
  for (std::uint64_t seed : opt.seeds) {
    const Tensor x = sample_inputs(currin_spec(), opt.samples, seed);
    const Tensor y = evaluate_rows(Benchmark::Currin, x, Fidelity::Low);
    const Tensor xn = Normalizer::fit(x).apply(x);
    const Tensor yn = Normalizer::fit(y).apply(y);
    const DmfNetwork init = build_dag(DagConfig{3, 2, 1, 20}, seed);
    for (double rate : opt.rates) {
      TrainConfig cfg;
      cfg.inner_epochs = opt.epochs;
      cfg.alpha_every = 1;
      cfg.r1 = cfg.r2 = rate;
      cfg.seed = seed;
      DmfNetwork alt = init.clone();
      DmfNetwork joint = init.clone();
      cfg.mode = TrainMode::Alternate;
      const double la = alternate_train(alt, xn, yn, cfg).total.back();
      cfg.mode = TrainMode::Joint;
      const double lj = joint_train(joint, xn, yn, cfg).total.back();
      rows.push_back({seed, rate, la, lj});
    }
  }
  return rows;
}

inline void write_prop1_csv(std::ostream& os, const std::vector<Prop1Row>& rows) {
  os << "seed,rate,loss_alternate,loss_joint,relative_gap\n";
  for (const auto& r : rows) {
    os << r.seed << ',' << format_double(r.rate) << ',' << format_double(r.loss_alternate) << ','
       << format_double(r.loss_joint) << ',' << format_double(r.relative_gap()) << '\n';
  }
}

}  // namespace dmf
