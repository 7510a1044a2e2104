#pragma once

// FactorGCN assembly, MLP/GCN baselines, the combined loss, the training loop
// with best-validation checkpointing, evaluation, and the model file format.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "factorgcn/discriminator.hpp"
#include "factorgcn/errors.hpp"
#include "factorgcn/factor_layer.hpp"
#include "factorgcn/graph.hpp"
#include "factorgcn/metrics.hpp"
#include "factorgcn/optim.hpp"
#include "factorgcn/rng.hpp"
#include "factorgcn/tensor.hpp"

namespace factorgcn {

enum class ModelKind { factorgcn, mlp, gcn };
enum class TaskKind { multi_label, multi_class, regression };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::factorgcn: return "factorgcn";
    case ModelKind::mlp: return "mlp";
    case ModelKind::gcn: return "gcn";
  }
  return "?";
}

inline std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::multi_label: return "multi_label";
    case TaskKind::multi_class: return "multi_class";
    case TaskKind::regression: return "regression";
  }
  return "?";
}

inline ModelKind model_kind_from(std::string_view s) {
  for (auto k : {ModelKind::factorgcn, ModelKind::mlp, ModelKind::gcn})
    if (to_string(k) == s) return k;
  throw InputError("unknown model kind '" + std::string(s) + "'");
}

inline TaskKind task_kind_from(std::string_view s) {
  for (auto k : {TaskKind::multi_label, TaskKind::multi_class, TaskKind::regression})
    if (to_string(k) == s) return k;
  throw InputError("unknown task kind '" + std::string(s) + "'");
}

struct LayerSpec {
  std::size_t num_factors = 1;  // always 1 for the baselines
  std::size_t out_per_factor = 32;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelConfig {
  ModelKind kind = ModelKind::factorgcn;
  TaskKind task = TaskKind::multi_label;
  std::size_t in_features = synthetic_nodes;
  std::size_t num_outputs = 4;
  std::vector<LayerSpec> layers;
  double lambda = 0.5;
  AdamOptions optimizer{0.005, 0.9, 0.999, 1e-8, 5e-5};
  std::size_t epochs = 80;
  std::uint64_t seed = 0;
  std::string rng = std::string(Rng::algorithm);

  void validate() const {
    if (layers.empty()) throw InputError("model needs at least one layer");
    if (!(lambda >= 0)) throw InputError("lambda must be >= 0");
    if (in_features == 0 || num_outputs == 0) throw InputError("feature and output widths must be positive");
    for (const auto& l : layers) {
      if (l.num_factors == 0 || l.out_per_factor == 0) throw InputError("layer widths must be positive");
      if (kind != ModelKind::factorgcn && l.num_factors != 1)
        throw InputError("baseline layers have exactly one factor");
    }
    if (rng != Rng::algorithm) throw InputError("unsupported rng algorithm '" + rng + "'");
  }
};

/// Hidden width for the synthetic benchmark: 32 up to four factor types, 64 above.
inline std::size_t default_hidden_width(std::size_t data_factors) { return data_factors <= 4 ? 32 : 64; }

/// Two layers; a FactorGCN layer with N_e factors splits the hidden width into
/// N_e equal blocks. `factors_per_layer` overrides the per-layer factor count.
inline ModelConfig default_config(ModelKind kind, std::size_t in_features, std::size_t data_factors,
                                  std::vector<std::size_t> factors_per_layer = {}) {
  ModelConfig c;
  c.kind = kind;
  c.in_features = in_features;
  c.num_outputs = data_factors;
  const std::size_t hidden = default_hidden_width(data_factors);
  if (kind != ModelKind::factorgcn) {
    c.layers = {{1, hidden}, {1, hidden}};
    return c;
  }
  if (factors_per_layer.empty()) factors_per_layer = {data_factors, data_factors};
  for (std::size_t ne : factors_per_layer) {
    if (ne == 0) throw InputError("factor count per layer must be positive");
    c.layers.push_back({ne, std::max<std::size_t>(1, hidden / ne)});
  }
  return c;
}

struct DenseLayer {
  Tensor weight;  // out × in
  Tensor bias;    // 1 × out
};

struct Model {
  ModelConfig config;
  std::vector<DisentangleLayerParams> factor_layers;  // factorgcn
  std::vector<DenseLayer> dense_layers;               // mlp, gcn
  std::optional<DiscriminatorParams> discriminator;   // factorgcn
  Tensor head_weight;                                 // final width × outputs
  Tensor head_bias;                                   // 1 × outputs

  static Model create(const ModelConfig& config) {
    config.validate();
    Rng rng(config.seed);
    Model m;
    m.config = config;
    std::size_t width = config.in_features;
    for (const auto& spec : config.layers) {
      if (config.kind == ModelKind::factorgcn) {
        m.factor_layers.push_back(
            DisentangleLayerParams::init(width, spec.out_per_factor, spec.num_factors, rng));
      } else {
        m.dense_layers.push_back({glorot_uniform(spec.out_per_factor, width, width, spec.out_per_factor, rng),
                                  Tensor::zeros({1, spec.out_per_factor}, true)});
      }
      width = spec.num_factors * spec.out_per_factor;
    }
    if (config.kind == ModelKind::factorgcn) {
      const auto& first = config.layers.front();
      m.discriminator = DiscriminatorParams::init(first.out_per_factor, first.num_factors, rng);
    }
    m.head_weight = glorot_uniform(width, config.num_outputs, width, config.num_outputs, rng);
    m.head_bias = Tensor::zeros({1, config.num_outputs}, true);
    return m;
  }

  std::size_t final_width() const { return head_weight.dim(0); }

  /// Every trainable tensor with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t l = 0; l < factor_layers.size(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      out.emplace_back(p + "weight", factor_layers[l].weight);
      out.emplace_back(p + "psi_weight", factor_layers[l].psi_weight);
      out.emplace_back(p + "psi_bias", factor_layers[l].psi_bias);
    }
    for (std::size_t l = 0; l < dense_layers.size(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      out.emplace_back(p + "weight", dense_layers[l].weight);
      out.emplace_back(p + "bias", dense_layers[l].bias);
    }
    if (discriminator) {
      for (std::size_t k = 0; k < discriminator->encoder.size(); ++k)
        out.emplace_back("discriminator.encoder." + std::to_string(k), discriminator->encoder[k]);
      out.emplace_back("discriminator.classifier_weight", discriminator->classifier_weight);
      out.emplace_back("discriminator.classifier_bias", discriminator->classifier_bias);
    }
    out.emplace_back("head.weight", head_weight);
    out.emplace_back("head.bias", head_bias);
    return out;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  std::vector<Tensor> discriminator_parameters() const {
    return discriminator ? discriminator->parameters() : std::vector<Tensor>{};
  }
};

struct ForwardResult {
  Tensor output;          // 1 × outputs; probabilities for multi-label
  Tensor node_features;   // final layer, num_nodes × final width
  Tensor graph_features;  // mean readout, 1 × final width
  std::vector<LayerOutput> layers;  // factorgcn only
};

namespace detail {

inline Activation layer_activation(std::size_t l, std::size_t count) {
  return l + 1 < count ? Activation::relu : Activation::identity;
}

inline ForwardResult finish(const Model& model, ForwardResult r) {
  r.graph_features = readout(r.node_features);
  const Tensor logits = add(matmul(r.graph_features, model.head_weight), model.head_bias);
  r.output = model.config.task == TaskKind::multi_label ? sigmoid(logits) : logits;
  return r;
}

}  // namespace detail

/// Stacked disentangle layers (ReLU between layers, identity on the last),
/// mean readout and an affine head.
inline ForwardResult model_forward(const Model& model, const Graph& graph) {
  if (graph.feature_dim() != model.config.in_features) {
    throw ShapeError("graph feature width " + std::to_string(graph.feature_dim()) + " != model input " +
                     std::to_string(model.config.in_features));
  }
  if (model.config.kind != ModelKind::factorgcn) {
    throw UsageError("model_forward called on a baseline; use baseline_forward");
  }
  ForwardResult r;
  Tensor h = graph.features;
  const std::size_t count = model.factor_layers.size();
  for (std::size_t l = 0; l < count; ++l) {
    r.layers.push_back(layer_forward(h, graph, model.factor_layers[l], detail::layer_activation(l, count)));
    h = r.layers.back().features;
  }
  r.node_features = h;
  return detail::finish(model, std::move(r));
}

/// MLP: per-node affine layers, arcs ignored. GCN: the same aggregation as a
/// disentangle layer with every coefficient fixed to 1.
inline ForwardResult baseline_forward(const Model& model, const Graph& graph) {
  if (graph.feature_dim() != model.config.in_features) {
    throw ShapeError("graph feature width " + std::to_string(graph.feature_dim()) + " != model input " +
                     std::to_string(model.config.in_features));
  }
  ForwardResult r;
  Tensor h = graph.features;
  const std::size_t count = model.dense_layers.size();
  const Tensor ones = Tensor::full({graph.num_arcs(), 1}, 1.0);
  for (std::size_t l = 0; l < count; ++l) {
    const auto& layer = model.dense_layers[l];
    Tensor z = linear(h, layer.weight);
    if (model.config.kind == ModelKind::gcn) {
      z = weighted_neighbor_sum(z, ones, graph.src, graph.dst, graph.norm);
    } else if (model.config.kind != ModelKind::mlp) {
      throw UsageError("baseline_forward called on a FactorGCN model");
    }
    h = apply(detail::layer_activation(l, count), add(z, layer.bias));
  }
  r.node_features = h;
  return detail::finish(model, std::move(r));
}

inline ForwardResult forward(const Model& model, const Graph& graph) {
  return model.config.kind == ModelKind::factorgcn ? model_forward(model, graph)
                                                   : baseline_forward(model, graph);
}

/// L_d for one input graph: the first layer's factor graphs classified by
/// the discriminator.
inline Tensor graph_discriminator_loss(const Model& model, const Graph& graph, const ForwardResult& r) {
  if (!model.discriminator || r.layers.empty()) throw UsageError("model has no discriminator");
  const auto& first = r.layers.front();
  return discriminator_loss(
      factor_graph_probabilities(first.coefficients, first.transformed, graph, *model.discriminator));
}

/// Task loss for one sample: BCE on probabilities (multi-label), cross-entropy
/// on logits against a single class index (multi-class), or L1 (regression).
inline Tensor task_loss(const Tensor& output, std::span<const double> target, TaskKind task) {
  switch (task) {
    case TaskKind::multi_label:
      if (target.size() != output.size())
        throw InputError("multi-label target has " + std::to_string(target.size()) + " entries, output " +
                         std::to_string(output.size()));
      return binary_cross_entropy(output, Tensor::from(output.shape(), {target.begin(), target.end()}));
    case TaskKind::multi_class: {
      if (target.size() != 1 || target[0] < 0 || target[0] != std::floor(target[0]))
        throw InputError("multi-class target must be one class index");
      const std::size_t cls = static_cast<std::size_t>(target[0]);
      if (cls >= output.size()) throw InputError("class index out of range");
      const std::size_t idx[] = {cls};
      return cross_entropy(reshape(output, {1, output.size()}), idx);
    }
    case TaskKind::regression:
      if (target.size() != output.size()) throw InputError("regression target width mismatch");
      return l1_loss(output, Tensor::from(output.shape(), {target.begin(), target.end()}));
  }
  throw InputError("unknown task kind");
}

/// L = L_t + λ·L_d. Without a discriminator term, L = L_t.
inline Tensor total_loss(const Tensor& task, const std::optional<Tensor>& disc, double lambda) {
  if (!(lambda >= 0)) throw InputError("lambda must be >= 0");
  if (!disc) return task;
  return add(task, scale(*disc, lambda));
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double train_task_loss = 0;
  double train_disc_loss = 0;
  double val_task_loss = 0;
  double val_micro_f1 = 0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_micro_f1 = 0;
  double test_micro_f1 = 0;
  double wall_clock_seconds = 0;
};

struct TrainResult {
  Model model;
  TrainReport report;
};

inline std::vector<double> label_vector(const Sample& s) { return {s.label.begin(), s.label.end()}; }

struct SplitScore {
  double task_loss = 0;
  double micro_f1 = 0;
};

inline SplitScore score_split(const Model& model, const Dataset& data, std::span<const std::size_t> indices) {
  SplitScore s;
  std::vector<std::vector<double>> pred, target;
  for (std::size_t i : indices) {
    const auto& sample = data.samples.at(i);
    const auto r = forward(model, sample.graph);
    const auto t = label_vector(sample);
    s.task_loss += task_loss(r.output, t, model.config.task).item();
    pred.emplace_back(r.output.data().begin(), r.output.data().end());
    target.push_back(t);
  }
  if (!indices.empty()) s.task_loss /= static_cast<double>(indices.size());
  s.micro_f1 = micro_f1(pred, target);
  return s;
}

/// One optimizer step per training graph, shuffled each epoch. The returned
/// model holds the parameters of the epoch with the best validation Micro-F1
/// (ties go to the lower validation loss, then the earlier epoch).
inline TrainResult train(const Dataset& data, const ModelConfig& config,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (data.splits.train.empty() || data.splits.val.empty() || data.splits.test.empty()) {
    throw InputError("dataset needs non-empty train, val and test splits");
  }
  if (config.task != TaskKind::multi_label) {
    throw InputError("synthetic datasets carry multi-label targets; task must be multi_label");
  }
  if (config.in_features != data.feature_dim || config.num_outputs != data.n_factors) {
    throw InputError("model widths do not match the dataset (feature_dim " + std::to_string(data.feature_dim) +
                     ", n_factors " + std::to_string(data.n_factors) + ")");
  }
  const auto started = std::chrono::steady_clock::now();
  TrainResult result{Model::create(config), {}};
  Model& model = result.model;
  std::vector<Tensor> params = model.parameters();
  AdamState adam;
  adam.options = config.optimizer;
  Rng order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const bool use_disc = model.discriminator && config.lambda > 0;

  std::vector<std::vector<double>> best_values;
  SplitScore best{INFINITY, -1};
  std::vector<std::size_t> order = data.splits.train;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t i : order) {
      const auto& sample = data.samples[i];
      zero_grads(params);
      const auto r = forward(model, sample.graph);
      const Tensor lt = task_loss(r.output, label_vector(sample), config.task);
      std::optional<Tensor> ld;
      if (use_disc) ld = graph_discriminator_loss(model, sample.graph, r);
      const Tensor loss = total_loss(lt, ld, config.lambda);
      if (!std::isfinite(loss.item())) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                 std::to_string(i));
      }
      loss.backward();
      adam_step(params, adam);
      rec.train_loss += loss.item();
      rec.train_task_loss += lt.item();
      rec.train_disc_loss += ld ? ld->item() : 0.0;
    }
    const double n = static_cast<double>(order.size());
    rec.train_loss /= n;
    rec.train_task_loss /= n;
    rec.train_disc_loss /= n;
    const SplitScore val = score_split(model, data, data.splits.val);
    rec.val_task_loss = val.task_loss;
    rec.val_micro_f1 = val.micro_f1;
    if (val.micro_f1 > best.micro_f1 || (val.micro_f1 == best.micro_f1 && val.task_loss < best.task_loss)) {
      best = val;
      result.report.best_epoch = epoch;
      best_values.clear();
      for (const auto& p : params) best_values.emplace_back(p.data().begin(), p.data().end());
    }
    result.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (!best_values.empty()) {
    for (std::size_t k = 0; k < params.size(); ++k)
      std::copy(best_values[k].begin(), best_values[k].end(), params[k].mutable_data().begin());
  }
  zero_grads(params);
  result.report.best_val_micro_f1 = best.micro_f1 < 0 ? 0.0 : best.micro_f1;
  result.report.test_micro_f1 = score_split(model, data, data.splits.test).micro_f1;
  result.report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

inline nlohmann::json train_report_to_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_task_loss", e.train_task_loss},
                      {"train_disc_loss", e.train_disc_loss},
                      {"val_task_loss", e.val_task_loss},
                      {"val_micro_f1", e.val_micro_f1}});
  }
  return {{"epochs", std::move(epochs)},
          {"best_epoch", r.best_epoch},
          {"best_val_micro_f1", r.best_val_micro_f1},
          {"test_micro_f1", r.test_micro_f1},
          {"wall_clock_seconds", r.wall_clock_seconds}};
}

// ---------------------------------------------------------------------------
// Evaluation

inline std::vector<std::vector<double>> first_layer_factors(const ForwardResult& r) {
  std::vector<std::vector<double>> out;
  const auto& c = r.layers.front().coefficients;
  for (std::size_t e = 0; e < c.num_factors(); ++e) out.push_back(c.factor(e));
  return out;
}

inline void finish_disentanglement(MetricsReport& report, std::size_t num_factors) {
  std::vector<double> totals;
  for (const auto& m : report.matches) totals.push_back(static_cast<double>(m.total));
  report.ged_e = mean_std(totals);
  report.per_kind = match_histograms(report.matches, num_factors);
  report.c_score = c_score(report.matches, num_factors);
}

/// Micro-F1, and for FactorGCN the GED_E / C-Score of the first layer's factor
/// graphs against the ground truth, plus the correlation of the mean-pooled
/// final features.
inline MetricsReport evaluate(const Model& model, const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InputError("evaluate: empty split");
  MetricsReport report;
  report.model = std::string(to_string(model.config.kind));
  report.num_samples = indices.size();
  std::vector<std::vector<double>> pred, target, features;
  for (std::size_t i : indices) {
    const auto& sample = data.samples.at(i);
    const auto r = forward(model, sample.graph);
    pred.emplace_back(r.output.data().begin(), r.output.data().end());
    target.push_back(label_vector(sample));
    features.emplace_back(r.graph_features.data().begin(), r.graph_features.data().end());
    if (model.config.kind == ModelKind::factorgcn && !sample.factors.empty()) {
      report.sample_indices.push_back(i);
      report.matches.push_back(gede_sample(sample.graph, first_layer_factors(r), sample.factors));
    }
  }
  report.micro_f1 = micro_f1(pred, target);
  if (model.config.kind == ModelKind::factorgcn) {
    report.num_factors = model.config.layers.front().num_factors;
    if (!report.matches.empty()) finish_disentanglement(report, report.num_factors);
  }
  if (features.size() >= 2) report.correlation = feature_correlation(features);
  return report;
}

/// Reference point: each arc gets an independent uniform(0,1) coefficient in
/// each of `num_factors` factor graphs, and each label a uniform(0,1) score.
inline MetricsReport evaluate_random(const Dataset& data, std::span<const std::size_t> indices,
                                     std::size_t num_factors, std::uint64_t seed) {
  if (indices.empty()) throw InputError("evaluate_random: empty split");
  Rng rng(seed);
  MetricsReport report;
  report.model = "random";
  report.num_samples = indices.size();
  report.num_factors = num_factors;
  std::vector<std::vector<double>> pred, target;
  for (std::size_t i : indices) {
    const auto& sample = data.samples.at(i);
    std::vector<std::vector<double>> factors(num_factors, std::vector<double>(sample.graph.num_arcs()));
    for (auto& f : factors)
      for (double& v : f) v = rng.uniform();
    std::vector<double> p(data.n_factors);
    for (double& v : p) v = rng.uniform();
    pred.push_back(std::move(p));
    target.push_back(label_vector(sample));
    if (!sample.factors.empty()) {
      report.sample_indices.push_back(i);
      report.matches.push_back(gede_sample(sample.graph, factors, sample.factors));
    }
  }
  report.micro_f1 = micro_f1(pred, target);
  if (!report.matches.empty()) finish_disentanglement(report, num_factors);
  return report;
}

// ---------------------------------------------------------------------------
// Model file

inline constexpr int model_format_version = 1;

inline nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : c.layers) layers.push_back({{"num_factors", l.num_factors}, {"out_per_factor", l.out_per_factor}});
  return {{"kind", to_string(c.kind)},
          {"task", to_string(c.task)},
          {"in_features", c.in_features},
          {"num_outputs", c.num_outputs},
          {"layers", std::move(layers)},
          {"lambda", c.lambda},
          {"optimizer",
           {{"learning_rate", c.optimizer.learning_rate},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"epsilon", c.optimizer.epsilon},
            {"weight_decay", c.optimizer.weight_decay}}},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"rng", c.rng}};
}

/// Overlays the fields present in `j` onto `base`.
inline ModelConfig config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  if (!j.is_object()) throw ParseError("config", "expected an object");
  auto number = [&](const nlohmann::json& obj, const char* key, const std::string& path, double& out) {
    if (auto it = obj.find(key); it != obj.end()) {
      if (!it->is_number()) throw ParseError(path + key, "expected a number");
      out = it->get<double>();
    }
  };
  auto count = [&](const nlohmann::json& obj, const char* key, const std::string& path, auto& out) {
    if (auto it = obj.find(key); it != obj.end()) {
      if (!it->is_number_integer() || it->template get<std::int64_t>() < 0)
        throw ParseError(path + key, "expected a non-negative integer");
      out = it->get<std::remove_reference_t<decltype(out)>>();
    }
  };
  try {
    if (auto it = j.find("kind"); it != j.end()) base.kind = model_kind_from(it->get<std::string>());
    if (auto it = j.find("task"); it != j.end()) base.task = task_kind_from(it->get<std::string>());
    if (auto it = j.find("rng"); it != j.end()) base.rng = it->get<std::string>();
  } catch (const std::exception& e) {
    throw ParseError("config", e.what());
  }
  count(j, "in_features", "config.", base.in_features);
  count(j, "num_outputs", "config.", base.num_outputs);
  count(j, "epochs", "config.", base.epochs);
  count(j, "seed", "config.", base.seed);
  number(j, "lambda", "config.", base.lambda);
  if (auto it = j.find("optimizer"); it != j.end()) {
    if (!it->is_object()) throw ParseError("config.optimizer", "expected an object");
    number(*it, "learning_rate", "config.optimizer.", base.optimizer.learning_rate);
    number(*it, "beta1", "config.optimizer.", base.optimizer.beta1);
    number(*it, "beta2", "config.optimizer.", base.optimizer.beta2);
    number(*it, "epsilon", "config.optimizer.", base.optimizer.epsilon);
    number(*it, "weight_decay", "config.optimizer.", base.optimizer.weight_decay);
  }
  if (auto it = j.find("layers"); it != j.end()) {
    if (!it->is_array()) throw ParseError("config.layers", "expected an array");
    base.layers.clear();
    for (std::size_t l = 0; l < it->size(); ++l) {
      const std::string path = "config.layers[" + std::to_string(l) + "].";
      LayerSpec spec;
      count((*it)[l], "num_factors", path, spec.num_factors);
      count((*it)[l], "out_per_factor", path, spec.out_per_factor);
      base.layers.push_back(spec);
    }
  }
  return base;
}

inline nlohmann::json model_to_json(const Model& m) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& [name, t] : m.named_parameters()) {
    params.push_back({{"name", name},
                      {"shape", t.shape()},
                      {"data", std::vector<double>(t.data().begin(), t.data().end())}});
  }
  return {{"version", model_format_version}, {"config", config_to_json(m.config)}, {"params", std::move(params)}};
}

inline Model model_from_json(const nlohmann::json& j) {
  const auto& version = detail::field(j, "version", "");
  if (!version.is_number_integer() || version.get<int>() != model_format_version) {
    throw ParseError("version", "unsupported model version");
  }
  ModelConfig config = config_from_json(detail::field(j, "config", ""));
  try {
    config.validate();
  } catch (const InputError& e) {
    throw ParseError("config", e.what());
  }
  Model m = Model::create(config);
  const auto& params = detail::field(j, "params", "");
  if (!params.is_array()) throw ParseError("params", "expected an array");
  auto named = m.named_parameters();
  if (params.size() != named.size()) {
    throw ParseError("params", "expected " + std::to_string(named.size()) + " tensors, found " +
                                   std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < named.size(); ++k) {
    const std::string path = "params[" + std::to_string(k) + "]";
    const auto& jp = params[k];
    const auto& name = detail::field(jp, "name", path);
    if (!name.is_string() || name.get<std::string>() != named[k].first)
      throw ParseError(path + ".name", "expected '" + named[k].first + "'");
    const auto& shape = detail::field(jp, "shape", path);
    if (!shape.is_array() || shape.get<Shape>() != named[k].second.shape())
      throw ParseError(path + ".shape", "expected " + shape_string(named[k].second.shape()));
    const auto& data = detail::field(jp, "data", path);
    if (!data.is_array() || data.size() != named[k].second.size())
      throw ParseError(path + ".data", "wrong number of values");
    auto dst = named[k].second.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (!data[i].is_number()) throw ParseError(path + ".data", "non-numeric value");
      dst[i] = data[i].get<double>();
    }
  }
  return m;
}

inline void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << model_to_json(m).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline Model load_model(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("<document>", e.what());
  }
  return model_from_json(doc);
}

}  // namespace factorgcn
