#pragma once

// Auxiliary head that classifies which factor a factor graph came from. All
// factor graphs of a layer are encoded from the same node features, so only
// their edge coefficients can tell them apart.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "factorgcn/errors.hpp"
#include "factorgcn/factor_layer.hpp"
#include "factorgcn/graph.hpp"
#include "factorgcn/rng.hpp"
#include "factorgcn/tensor.hpp"

namespace factorgcn {

inline constexpr std::size_t discriminator_depth = 3;

struct DiscriminatorParams {
  std::array<Tensor, discriminator_depth> encoder;  // each F' × F', shared across factors
  Tensor classifier_weight;                         // F' × N_e
  Tensor classifier_bias;                           // 1 × N_e

  std::size_t width() const { return classifier_weight.dim(0); }
  std::size_t num_factors() const { return classifier_weight.dim(1); }

  static DiscriminatorParams init(std::size_t width, std::size_t num_factors, Rng& rng) {
    DiscriminatorParams p;
    for (auto& w : p.encoder) w = glorot_uniform(width, width, width, width, rng);
    p.classifier_weight = glorot_uniform(width, num_factors, width, num_factors, rng);
    p.classifier_bias = Tensor::zeros({1, num_factors}, true);
    return p;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out(encoder.begin(), encoder.end());
    out.push_back(classifier_weight);
    out.push_back(classifier_bias);
    return out;
  }
};

/// Three rounds of relu(coefficient-weighted normalized aggregation of x·Wᵀ).
inline Tensor encode(const Tensor& coefficients, const Tensor& transformed, const Graph& graph,
                     const DiscriminatorParams& params) {
  Tensor x = transformed;
  for (const auto& w : params.encoder) {
    x = relu(weighted_neighbor_sum(linear(x, w), coefficients, graph.src, graph.dst, graph.norm));
  }
  return x;
}

/// Mean over nodes, returned as a 1 × F row.
inline Tensor readout(const Tensor& node_features) {
  if (node_features.rank() != 2 || node_features.dim(0) == 0) {
    throw InputError("readout needs at least one node");
  }
  return mean(node_features, 0, true);
}

/// Softmax of the affine classifier; 1 × N_e.
inline Tensor classify(const Tensor& graph_vector, const DiscriminatorParams& params) {
  return softmax(add(matmul(graph_vector, params.classifier_weight), params.classifier_bias), 1);
}

/// Class distributions for every factor graph of one layer; row e is G_e.
inline Tensor factor_graph_probabilities(const FactorCoefficients& coefficients,
                                         const Tensor& transformed, const Graph& graph,
                                         const DiscriminatorParams& params) {
  if (coefficients.num_factors() != params.num_factors()) {
    throw ShapeError("discriminator classifies " + std::to_string(params.num_factors()) +
                     " factors, layer has " + std::to_string(coefficients.num_factors()));
  }
  std::vector<Tensor> rows;
  rows.reserve(coefficients.num_factors());
  for (std::size_t e = 0; e < coefficients.num_factors(); ++e) {
    rows.push_back(classify(readout(encode(coefficients.factor_tensor(e), transformed, graph, params)),
                            params));
  }
  return concat(rows, 0);
}

/// Mean negative log-probability of the true factor index over every factor
/// graph of every input graph. `probabilities` stacks G rows from
/// factor_graph_probabilities; `factor_index` gives each row's factor.
inline Tensor discriminator_loss(const Tensor& probabilities, std::span<const std::size_t> factor_index) {
  return nll_loss(probabilities, factor_index);
}

/// Convenience form for one input graph whose rows are factors 0..N_e-1.
inline Tensor discriminator_loss(const Tensor& probabilities) {
  std::vector<std::size_t> labels(probabilities.rows());
  for (std::size_t e = 0; e < labels.size(); ++e) labels[e] = e;
  return nll_loss(probabilities, labels);
}

}  // namespace factorgcn
