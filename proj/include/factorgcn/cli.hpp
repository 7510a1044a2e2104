#pragma once

// Command-line driver: generate, train, eval, correlate and sweep.
//
// Exit codes: 0 success, 1 runtime failure (I/O, non-finite loss),
// 2 usage or validation failure.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "factorgcn/errors.hpp"
#include "factorgcn/graph.hpp"
#include "factorgcn/metrics.hpp"
#include "factorgcn/model.hpp"

namespace factorgcn::cli {

enum ExitCode : int { ok = 0, runtime_failure = 1, usage_failure = 2 };

/// Raised for flag combinations CLI11 cannot express.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainFlags {
  std::string data, out, report, config;
  std::string model = "factorgcn";
  std::optional<double> lambda;
  std::vector<std::size_t> factors_per_layer;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
};

struct SweepFlags {
  std::string data, out, config;
  std::vector<double> lambdas;
  std::vector<std::size_t> factor_counts;
  std::optional<double> lambda;
  std::optional<std::size_t> epochs;
  std::uint64_t seed = 0;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

/// defaults ← --config file ← explicit flags.
inline ModelConfig resolve_config(const Dataset& data, ModelKind kind, const std::string& config_path,
                                  const std::vector<std::size_t>& factors_per_layer,
                                  std::optional<double> lambda, std::optional<std::size_t> epochs,
                                  std::optional<std::uint64_t> seed) {
  if (kind != ModelKind::factorgcn && !factors_per_layer.empty()) {
    throw ValidationError("--factors-per-layer applies to factorgcn only");
  }
  ModelConfig c = default_config(kind, data.feature_dim, data.n_factors, factors_per_layer);
  if (!config_path.empty()) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(read_file(config_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("<config>", e.what());
    }
    c = config_from_json(doc, c);
    if (!factors_per_layer.empty()) c.layers = default_config(kind, data.feature_dim, data.n_factors, factors_per_layer).layers;
  }
  if (lambda) c.lambda = *lambda;
  if (epochs) c.epochs = *epochs;
  if (seed) c.seed = *seed;
  c.validate();
  return c;
}

inline void print_epoch(std::ostream& out, const EpochRecord& e) {
  out << "epoch " << std::setw(3) << e.epoch << "  loss " << std::fixed << std::setprecision(4) << e.train_loss
      << "  task " << e.train_task_loss << "  disc " << e.train_disc_loss << "  val_loss " << e.val_task_loss
      << "  val_f1 " << e.val_micro_f1 << '\n';
  out.unsetf(std::ios::floatfield);
}

inline void print_metrics(std::ostream& out, const MetricsReport& r) {
  out << std::fixed << std::setprecision(4);
  out << "model      " << r.model << "\nsamples    " << r.num_samples << '\n';
  if (r.micro_f1) out << "micro_f1   " << *r.micro_f1 << '\n';
  if (r.ged_e) out << "ged_e      " << r.ged_e->mean << " +/- " << r.ged_e->std << '\n';
  if (r.c_score) out << "c_score    " << *r.c_score << '\n';
  for (const auto& [kind, kc] : r.per_kind) {
    out << "  " << std::left << std::setw(20) << kind_name(kind) << std::right << " factor " << kc.mode_factor
        << " (" << kc.mode_frequency << ")\n";
  }
  out.unsetf(std::ios::floatfield);
}

inline int cmd_generate(std::size_t factors, std::size_t samples, std::uint64_t seed, const std::string& path,
                        std::ostream& out) {
  const Dataset d = generate_synthetic(factors, samples, seed);
  save_dataset(d, path);
  out << "samples    " << d.samples.size() << "\nfactors   ";
  for (std::size_t e = 0; e < d.n_factors; ++e) out << ' ' << kind_name(factor_catalog[e]);
  out << "\nsplits     train " << d.splits.train.size() << ", val " << d.splits.val.size() << ", test "
      << d.splits.test.size() << "\nwrote      " << path << '\n';
  return ok;
}

inline int cmd_train(const TrainFlags& f, std::ostream& out) {
  const Dataset data = load_dataset(f.data);
  const ModelConfig config = resolve_config(data, model_kind_from(f.model), f.config, f.factors_per_layer,
                                            f.lambda, f.epochs, f.seed);
  const auto result = train(data, config, [&](const EpochRecord& e) { print_epoch(out, e); });
  save_model(result.model, f.out);
  nlohmann::json report = train_report_to_json(result.report);
  report["config"] = config_to_json(config);
  report["data"] = f.data;
  const std::string report_path = f.report.empty() ? f.out + ".report.json" : f.report;
  write_text(report_path, report.dump(2) + "\n");
  out << "best epoch " << result.report.best_epoch << " (val micro_f1 " << result.report.best_val_micro_f1
      << ")\ntest micro_f1 " << result.report.test_micro_f1 << "\nwrote " << f.out << ", " << report_path << '\n';
  return ok;
}

inline void check_compatible(const Model& m, const Dataset& d) {
  if (m.config.in_features != d.feature_dim) {
    throw ValidationError("model in_features " + std::to_string(m.config.in_features) +
                          " does not match dataset feature_dim " + std::to_string(d.feature_dim));
  }
  if (m.config.num_outputs != d.n_factors) {
    throw ValidationError("model num_outputs " + std::to_string(m.config.num_outputs) +
                          " does not match dataset n_factors " + std::to_string(d.n_factors));
  }
}

inline const std::vector<std::size_t>& split_by_name(const Dataset& d, const std::string& name) {
  if (name == "train") return d.splits.train;
  if (name == "val") return d.splits.val;
  if (name == "test") return d.splits.test;
  throw ValidationError("unknown split '" + name + "'");
}

inline int cmd_eval(const std::string& data_path, const std::string& model_path, const std::string& out_path,
                    const std::string& split, std::size_t random_factors, std::uint64_t seed, std::ostream& out) {
  const Dataset data = load_dataset(data_path);
  const auto& indices = split_by_name(data, split);
  MetricsReport report;
  if (model_path == "random") {
    report = evaluate_random(data, indices, random_factors, seed);
  } else {
    const Model model = load_model(model_path);
    check_compatible(model, data);
    report = evaluate(model, data, indices);
  }
  write_text(out_path, report_to_json(report).dump(2) + "\n");
  print_metrics(out, report);
  out << "wrote      " << out_path << '\n';
  return ok;
}

inline int cmd_correlate(const std::string& data_path, const std::string& model_path, const std::string& out_path,
                         const std::string& split, std::ostream& out) {
  const Dataset data = load_dataset(data_path);
  const Model model = load_model(model_path);
  check_compatible(model, data);
  const auto report = evaluate(model, data, split_by_name(data, split));
  if (report.correlation.empty()) throw ValidationError("correlation needs at least 2 samples in the split");
  write_text(out_path, correlation_csv(report.correlation));
  out << "dimensions " << report.correlation.size();
  if (model.config.kind == ModelKind::factorgcn) {
    const auto bc = block_correlation(report.correlation, model.config.layers.back().out_per_factor);
    out << "\nwithin-block mean |r| " << bc.within << ", cross-block " << bc.across;
  }
  out << "\nwrote      " << out_path << '\n';
  return ok;
}

struct SweepRow {
  std::string setting;
  double value = 0;
  std::string status = "ok";
  double micro_f1 = 0, ged_mean = 0, ged_std = 0, c_score = 0;
};

inline int cmd_sweep(const SweepFlags& f, std::ostream& out) {
  if (f.lambdas.empty() == f.factor_counts.empty()) {
    throw ValidationError("give exactly one of --lambdas or --factor-counts");
  }
  const Dataset data = load_dataset(f.data);
  std::vector<SweepRow> rows;
  const bool by_lambda = !f.lambdas.empty();
  std::vector<double> values = by_lambda ? f.lambdas : std::vector<double>(f.factor_counts.begin(), f.factor_counts.end());
  std::sort(values.begin(), values.end());
  for (double v : values) {
    SweepRow row{by_lambda ? "lambda" : "factors", v};
    try {
      std::vector<std::size_t> fpl;
      std::optional<double> lambda = f.lambda;
      if (by_lambda) {
        lambda = v;
      } else {
        fpl = {static_cast<std::size_t>(v), static_cast<std::size_t>(v)};
      }
      const auto config = resolve_config(data, ModelKind::factorgcn, f.config, fpl, lambda, f.epochs, f.seed);
      const auto result = train(data, config);
      const auto m = evaluate(result.model, data, data.splits.test);
      row.micro_f1 = m.micro_f1.value_or(0);
      if (m.ged_e) row.ged_mean = m.ged_e->mean, row.ged_std = m.ged_e->std;
      row.c_score = m.c_score.value_or(0);
    } catch (const std::exception& e) {
      row.status = std::string("error: ") + e.what();
    }
    out << row.setting << '=' << v << "  " << row.status << "  micro_f1 " << row.micro_f1 << "  ged_e "
        << row.ged_mean << "  c_score " << row.c_score << '\n';
    rows.push_back(row);
  }

  std::filesystem::create_directories(f.out);
  std::ostringstream csv;
  csv << "setting,value,micro_f1,ged_e_mean,ged_e_std,c_score,status\n" << std::setprecision(17);
  nlohmann::json table = nlohmann::json::array();
  bool failed = false;
  for (const auto& r : rows) {
    csv << r.setting << ',' << r.value << ',' << r.micro_f1 << ',' << r.ged_mean << ',' << r.ged_std << ','
        << r.c_score << ',' << '"' << r.status << '"' << '\n';
    table.push_back({{"setting", r.setting},
                     {"value", r.value},
                     {"micro_f1", r.micro_f1},
                     {"ged_e", {{"mean", r.ged_mean}, {"std", r.ged_std}}},
                     {"c_score", r.c_score},
                     {"status", r.status}});
    failed |= r.status != "ok";
  }
  write_text((std::filesystem::path(f.out) / "sweep.csv").string(), csv.str());
  write_text((std::filesystem::path(f.out) / "sweep.json").string(), table.dump(2) + "\n");
  return failed ? runtime_failure : ok;
}

/// Parses argv and runs one subcommand.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"FactorGCN: graph-level disentanglement toolkit"};
  app.require_subcommand(1);

  std::size_t gen_factors = 0, gen_samples = default_num_samples;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Write a synthetic multi-factor dataset");
  gen->add_option("--factors", gen_factors, "Number of factor types")->required()->check(CLI::Range(2, 6));
  gen->add_option("--samples", gen_samples, "Number of graphs")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Dataset file")->required();

  TrainFlags tf;
  auto* tr = app.add_subcommand("train", "Train a model and write it with its report");
  tr->add_option("--data", tf.data, "Dataset file")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tf.out, "Model file")->required();
  tr->add_option("--model", tf.model, "Model kind")->check(CLI::IsMember({"factorgcn", "mlp", "gcn"}));
  tr->add_option("--lambda", tf.lambda, "Discriminator loss weight")->check(CLI::NonNegativeNumber);
  tr->add_option("--factors-per-layer", tf.factors_per_layer, "Factor count of each layer")->delimiter(',');
  tr->add_option("--epochs", tf.epochs, "Training epochs");
  tr->add_option("--seed", tf.seed, "Initialization and shuffling seed");
  tr->add_option("--report", tf.report, "Training report file (default: <out>.report.json)");
  tr->add_option("--config", tf.config, "Model config file")->check(CLI::ExistingFile);

  std::string ev_data, ev_model, ev_out, ev_split = "test";
  std::size_t ev_random_factors = 4;
  std::uint64_t ev_seed = 0;
  auto* ev = app.add_subcommand("eval", "Evaluate a model (or 'random') on a dataset split");
  ev->add_option("--data", ev_data, "Dataset file")->required()->check(CLI::ExistingFile);
  ev->add_option("--model", ev_model, "Model file, or 'random'")->required();
  ev->add_option("--out", ev_out, "Metrics report file")->required();
  ev->add_option("--split", ev_split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--random-factors", ev_random_factors, "Factor graphs of the random baseline")
      ->check(CLI::PositiveNumber);
  ev->add_option("--seed", ev_seed, "Seed of the random baseline");

  std::string co_data, co_model, co_out, co_split = "test";
  auto* co = app.add_subcommand("correlate", "Export the feature correlation matrix as CSV");
  co->add_option("--data", co_data, "Dataset file")->required()->check(CLI::ExistingFile);
  co->add_option("--model", co_model, "Model file")->required()->check(CLI::ExistingFile);
  co->add_option("--out", co_out, "CSV file")->required();
  co->add_option("--split", co_split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

  SweepFlags sf;
  auto* sw = app.add_subcommand("sweep", "Train one FactorGCN per lambda or factor count");
  sw->add_option("--data", sf.data, "Dataset file")->required()->check(CLI::ExistingFile);
  sw->add_option("--lambdas", sf.lambdas, "Lambda values")->delimiter(',');
  sw->add_option("--factor-counts", sf.factor_counts, "Factor counts per layer")->delimiter(',');
  sw->add_option("--out", sf.out, "Output directory")->required();
  sw->add_option("--lambda", sf.lambda, "Lambda for a factor-count sweep")->check(CLI::NonNegativeNumber);
  sw->add_option("--epochs", sf.epochs, "Training epochs");
  sw->add_option("--seed", sf.seed, "Seed shared by every setting");
  sw->add_option("--config", sf.config, "Model config file")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success&) {
    out << app.help();
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return usage_failure;
  }

  try {
    if (*gen) return cmd_generate(gen_factors, gen_samples, gen_seed, gen_out, out);
    if (*tr) return cmd_train(tf, out);
    if (*ev) return cmd_eval(ev_data, ev_model, ev_out, ev_split, ev_random_factors, ev_seed, out);
    if (*co) return cmd_correlate(co_data, co_model, co_out, co_split, out);
    if (*sw) return cmd_sweep(sf, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return usage_failure;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return usage_failure;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return usage_failure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return runtime_failure;
  }
  return usage_failure;
}

}  // namespace factorgcn::cli
