// Command-line front end: data generation, training, evaluation, HPO,
// RMSE curves and the alternate/joint training check.
//
// Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dmf/dmf.hpp"

namespace fs = std::filesystem;

namespace {

nlohmann::ordered_json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dmf::ConfigError("cannot open " + path);
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw dmf::ConfigError(path + ": " + e.what());
  }
}

std::ofstream open_output(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw dmf::ConfigError("cannot write " + path);
  return out;
}

int gen_data(const dmf::GenerateOptions& opt, const std::string& out) {
  const dmf::FidelityDataset d = dmf::generate_dataset(opt);
  dmf::write_dataset(d, out);
  std::cout << "wrote " << d.benchmark << " dataset (" << d.low().count() << " low, " << d.high().count()
            << " high, " << (d.test ? d.test->count() : 0) << " test) to " << out << '\n';
  return 0;
}

int train(const std::string& data_dir, const std::string& variant, const std::string& config,
          std::optional<std::uint64_t> seed, const std::string& out) {
  dmf::ModelConfig cfg;
  if (!config.empty()) cfg = dmf::model_config_from_json(nlohmann::json::parse(read_json_file(config).dump()));
  if (seed) cfg = dmf::seeded_model_config(cfg, *seed);
  const dmf::FidelityDataset d = dmf::read_dataset(data_dir);
  const dmf::SurrogateModel m = dmf::fit_variant(dmf::variant_from_string(variant), d, cfg);
  open_output(out) << dmf::model_to_json(m).dump(1) << '\n';
  std::cout << "trained " << variant << " model -> " << out << '\n';
  return 0;
}

int eval(const std::string& model_path, const std::string& data_dir, const std::string& metrics) {
  std::ifstream in(model_path);
  if (!in) throw dmf::ConfigError("cannot open " + model_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw dmf::ParseError(model_path + ": " + e.what());
  }
  const dmf::SurrogateModel m = dmf::model_from_json(j);
  const dmf::FidelityDataset d = dmf::read_dataset(data_dir);
  const bool has_test = d.test.has_value();
  const dmf::FidelityLevel& split = has_test ? *d.test : d.high();
  const dmf::Tensor pred = dmf::predict_high(m, split.x);
  const double e = dmf::rmse(pred, split.y);
  std::string r2 = "nan";
  try {
    r2 = dmf::format_double(dmf::r_squared(pred.values(), split.y.values()));
  } catch (const dmf::NumericError&) {
  }
  auto out = open_output(metrics);
  out << "variant,split,n,rmse,r_squared\n";
  out << dmf::to_string(m.variant) << ',' << (has_test ? "test" : "high") << ',' << split.count() << ','
      << dmf::format_double(e) << ',' << r2 << '\n';
  std::cout << "rmse " << dmf::format_double(e) << " on " << split.count() << " points\n";
  return 0;
}

int hpo(const std::string& data_dir, const std::string& space_path, const std::string& strategy,
        std::optional<std::uint64_t> seed, const std::string& out) {
  dmf::HpoSetup setup = dmf::hpo_setup_from_json(read_json_file(space_path));
  if (seed) {
    setup.limits.seed = *seed;
    setup.model = dmf::seeded_model_config(setup.model, *seed);
  }
  const dmf::FidelityDataset d = dmf::read_dataset(data_dir);
  const dmf::DmfTransObjective objective(d, setup.model, setup.limits.seed);
  const dmf::StudyResult r =
      dmf::run_study(objective.factory(), dmf::strategy_from_string(strategy), setup.space, setup.limits);
  auto os = open_output(out);
  dmf::write_study_csv(os, setup.space, r, dmf::format_double);
  std::cout << "best trial " << r.best().id << " value " << dmf::format_double(r.best().last_value())
            << ", budget " << r.total_budget << " epochs\n";
  return 0;
}

int curve(const std::string& spec_path, const std::string& out) {
  const dmf::ExperimentSpec spec = dmf::experiment_spec_from_json(read_json_file(spec_path));
  const dmf::ExperimentResult r = dmf::run_experiment(spec);
  dmf::write_experiment(spec, r, out);
  for (const auto& p : r.curve.summary) {
    std::cout << "n_hf " << p.n_hf << ": rmse " << dmf::format_double(p.mean) << " +- "
              << dmf::format_double(p.stddev) << '\n';
  }
  return 0;
}

int prop1(const dmf::Prop1Options& opt, const std::string& out) {
  const auto rows = dmf::run_prop1(opt);
  auto os = open_output(out);
  dmf::write_prop1_csv(os, rows);
  for (const auto& r : rows) {
    std::cout << "seed " << r.seed << " rate " << r.rate << ": gap " << r.relative_gap() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable multi-fidelity surrogate toolkit"};
  app.require_subcommand(1);

  dmf::GenerateOptions gen;
  std::string gen_bench, gen_out;
  auto* g = app.add_subcommand("gen-data", "generate a two-fidelity benchmark dataset");
  g->add_option("--benchmark", gen_bench, "borehole|currin|park|burgers|poisson")->required();
  g->add_option("--n-lf", gen.n_lf, "low-fidelity samples")->required();
  g->add_option("--n-hf", gen.n_hf, "high-fidelity samples")->required();
  g->add_option("--n-test", gen.n_test, "held-out high-fidelity samples")->required();
  g->add_option("--seed", gen.seed, "random seed")->required();
  g->add_option("--out", gen_out, "output directory")->required();
  g->add_option("--grid", gen.grid, "PDE output grid size")->capture_default_str();

  std::string data_dir, variant, config, model_out;
  std::optional<std::uint64_t> train_seed;
  auto* t = app.add_subcommand("train", "train a surrogate variant");
  t->add_option("--data", data_dir, "dataset directory")->required();
  t->add_option("--variant", variant, "trans|dmf2|hf|copy|low")->required();
  t->add_option("--config", config, "model config JSON");
  t->add_option("--seed", train_seed, "override every training seed");
  t->add_option("--out", model_out, "model JSON")->required();

  std::string model_path, eval_data, metrics;
  auto* e = app.add_subcommand("eval", "evaluate a trained model");
  e->add_option("--model", model_path, "model JSON")->required();
  e->add_option("--data", eval_data, "dataset directory")->required();
  e->add_option("--metrics", metrics, "metrics CSV")->required();

  std::string hpo_data, space, strategy, hpo_out;
  std::optional<std::uint64_t> hpo_seed;
  auto* h = app.add_subcommand("hpo", "hyperparameter search for DMF-trans");
  h->add_option("--data", hpo_data, "dataset directory")->required();
  h->add_option("--space", space, "search space JSON")->required();
  h->add_option("--strategy", strategy, "grid|median|sha|hyperband")->required();
  h->add_option("--seed", hpo_seed, "override the study seed");
  h->add_option("--out", hpo_out, "trials CSV")->required();

  std::string spec, curve_out;
  auto* c = app.add_subcommand("curve", "RMSE against the number of high-fidelity samples");
  c->add_option("--spec", spec, "experiment spec JSON")->required();
  c->add_option("--out", curve_out, "output directory")->required();

  dmf::Prop1Options p1;
  std::string p1_out;
  auto* p = app.add_subcommand("prop1-check", "alternate (k=1) against joint training");
  p->add_option("--out", p1_out, "results CSV")->required();
  p->add_option("--epochs", p1.epochs, "epochs per run")->capture_default_str();
  p->add_option("--seeds", p1.seeds, "seeds")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*g) {
      gen.benchmark = dmf::benchmark_from_string(gen_bench);
      return gen_data(gen, gen_out);
    }
    if (*t) return train(data_dir, variant, config, train_seed, model_out);
    if (*e) return eval(model_path, eval_data, metrics);
    if (*h) return hpo(hpo_data, space, strategy, hpo_seed, hpo_out);
    if (*c) return curve(spec, curve_out);
    if (*p) return prop1(p1, p1_out);
  } catch (const dmf::NumericError& err) {
    std::cerr << "numeric failure: " << err.what() << '\n';
    return 3;
  } catch (const dmf::Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
  return 2;
}
