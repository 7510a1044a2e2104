#pragma once

// One disentangle layer: shared feature transform, per-factor edge
// coefficients, per-factor normalized aggregation, and block-wise merge.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "factorgcn/errors.hpp"
#include "factorgcn/graph.hpp"
#include "factorgcn/rng.hpp"
#include "factorgcn/tensor.hpp"

namespace factorgcn {

enum class Activation { relu, identity };

inline Tensor apply(Activation act, const Tensor& x) {
  return act == Activation::relu ? relu(x) : x;
}

/// Glorot-uniform matrix of the given shape, bound sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                             std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from({rows, cols}, std::move(values), true);
}

struct DisentangleLayerParams {
  Tensor weight;      // out_per_factor × in_features, shared by all factors
  Tensor psi_weight;  // 2·out_per_factor × num_factors; column e scores [h'_i, h'_j]
  Tensor psi_bias;    // 1 × num_factors
  std::size_t num_factors = 0;
  std::size_t in_features = 0;
  std::size_t out_per_factor = 0;

  std::size_t out_features() const { return num_factors * out_per_factor; }

  static DisentangleLayerParams init(std::size_t in_features, std::size_t out_per_factor,
                                     std::size_t num_factors, Rng& rng) {
    if (num_factors == 0 || in_features == 0 || out_per_factor == 0) {
      throw InputError("disentangle layer dimensions must be positive");
    }
    DisentangleLayerParams p;
    p.num_factors = num_factors;
    p.in_features = in_features;
    p.out_per_factor = out_per_factor;
    p.weight = glorot_uniform(out_per_factor, in_features, in_features, out_per_factor, rng);
    // Each factor's scorer maps 2F' inputs to one score.
    p.psi_weight = glorot_uniform(2 * out_per_factor, num_factors, 2 * out_per_factor, 1, rng);
    p.psi_bias = Tensor::zeros({1, num_factors}, true);
    return p;
  }

  std::vector<Tensor> parameters() const { return {weight, psi_weight, psi_bias}; }
};

/// E_ije for every arc of the input graph (rows, in graph arc order) and every
/// factor e (columns).
struct FactorCoefficients {
  Tensor values;  // num_arcs × num_factors

  std::size_t num_arcs() const { return values.rows(); }
  std::size_t num_factors() const { return values.cols(); }

  /// Column e as a plain vector.
  std::vector<double> factor(std::size_t e) const {
    std::vector<double> out(num_arcs());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = values.at(k, e);
    return out;
  }

  /// Column e as a recorded tensor, for use in aggregation and the discriminator.
  Tensor factor_tensor(std::size_t e) const { return slice(values, 1, e, e + 1); }
};

/// h' = h·Wᵀ, one row per node.
inline Tensor transform(const Tensor& h, const Tensor& weight) {
  if (h.rank() != 2 || weight.rank() != 2 || h.dim(1) != weight.dim(1)) {
    throw ShapeError("transform: features " + shape_string(h.shape()) + " vs weight " +
                     shape_string(weight.shape()));
  }
  return linear(h, weight);
}

/// E_ije = sigmoid(a_e · [h'_i, h'_j] + b_e), computed without normalizing
/// over neighbours. The dot product splits into a source half and a target
/// half, so each node is scored once per factor and the halves gathered by arc.
inline FactorCoefficients disentangle(const Tensor& transformed, const Graph& graph,
                                      const DisentangleLayerParams& params) {
  const std::size_t f = params.out_per_factor;
  if (transformed.rank() != 2 || transformed.dim(1) != f || transformed.dim(0) != graph.num_nodes) {
    throw ShapeError("disentangle: transformed features have shape " +
                     shape_string(transformed.shape()));
  }
  const Tensor source_score = matmul(transformed, slice(params.psi_weight, 0, 0, f));
  const Tensor target_score = matmul(transformed, slice(params.psi_weight, 0, f, 2 * f));
  const Tensor scores = add(add(gather_rows(source_score, graph.src), gather_rows(target_score, graph.dst)),
                            params.psi_bias);
  return {sigmoid(scores)};
}

/// out_i = act( Σ_{j∈N_i} E_ije / sqrt(|N_i||N_j|) · h'_j ) for one factor.
inline Tensor aggregate(const Tensor& transformed, const Tensor& coefficients, const Graph& graph,
                        Activation act) {
  return apply(act, weighted_neighbor_sum(transformed, coefficients, graph.src, graph.dst, graph.norm));
}

/// Per-node concatenation of the factor blocks in factor order.
inline Tensor merge(std::span<const Tensor> per_factor) {
  for (const auto& t : per_factor) {
    if (t.rank() != 2 || t.shape() != per_factor.front().shape()) {
      throw ShapeError("merge: factor blocks must share one shape");
    }
  }
  return concat(per_factor, 1);
}

struct LayerOutput {
  Tensor features;     // num_nodes × (num_factors · out_per_factor)
  Tensor transformed;  // h', num_nodes × out_per_factor
  FactorCoefficients coefficients;
};

inline LayerOutput layer_forward(const Tensor& h, const Graph& graph,
                                 const DisentangleLayerParams& params, Activation act) {
  LayerOutput out;
  out.transformed = transform(h, params.weight);
  out.coefficients = disentangle(out.transformed, graph, params);
  std::vector<Tensor> blocks;
  blocks.reserve(params.num_factors);
  for (std::size_t e = 0; e < params.num_factors; ++e) {
    blocks.push_back(aggregate(out.transformed, out.coefficients.factor_tensor(e), graph, act));
  }
  out.features = merge(blocks);
  return out;
}

}  // namespace factorgcn
