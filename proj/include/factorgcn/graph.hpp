#pragma once

// Graph data model, the predefined-graph catalog, the synthetic multi-factor
// benchmark and its JSON file format.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "factorgcn/errors.hpp"
#include "factorgcn/rng.hpp"
#include "factorgcn/tensor.hpp"

namespace factorgcn {

/// Undirected edge stored with first < second.
using Edge = std::pair<std::size_t, std::size_t>;
using EdgeSet = std::vector<Edge>;

inline Edge make_edge(std::size_t a, std::size_t b) { return a < b ? Edge{a, b} : Edge{b, a}; }

inline void normalize_edges(EdgeSet& edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

/// Directed arcs of an undirected graph, sorted (src, dst), with the
/// precomputed symmetric normalization 1/sqrt(deg(src)·deg(dst)).
struct Graph {
  std::size_t num_nodes = 0;
  Tensor features;  // num_nodes × feature width
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  std::vector<std::size_t> degrees;
  std::vector<double> norm;

  std::size_t num_arcs() const { return src.size(); }
  std::size_t feature_dim() const { return features.cols(); }

  /// Undirected edges (i < j) in lexicographic order.
  EdgeSet edges() const {
    EdgeSet out;
    for (std::size_t k = 0; k < src.size(); ++k)
      if (src[k] < dst[k]) out.emplace_back(src[k], dst[k]);
    return out;
  }

  /// Position of arc (i, j) in the arc list, if present.
  std::optional<std::size_t> arc_index(std::size_t i, std::size_t j) const {
    std::size_t lo = 0, hi = src.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (std::pair{src[mid], dst[mid]} < std::pair{i, j}) lo = mid + 1; else hi = mid;
    }
    if (lo < src.size() && src[lo] == i && dst[lo] == j) return lo;
    return std::nullopt;
  }

  static Graph from_edges(std::size_t n, EdgeSet edges, Tensor features) {
    if (features.rank() != 2 || features.dim(0) != n) {
      throw ShapeError("graph features must have one row per node");
    }
    normalize_edges(edges);
    Graph g;
    g.num_nodes = n;
    g.features = std::move(features);
    g.degrees.assign(n, 0);
    std::vector<std::pair<std::size_t, std::size_t>> arcs;
    arcs.reserve(edges.size() * 2);
    for (auto [a, b] : edges) {
      if (a == b) throw InputError("self-loop on node " + std::to_string(a));
      if (b >= n) throw InputError("edge endpoint " + std::to_string(b) + " >= node count");
      arcs.emplace_back(a, b);
      arcs.emplace_back(b, a);
      ++g.degrees[a];
      ++g.degrees[b];
    }
    std::sort(arcs.begin(), arcs.end());
    for (auto [i, j] : arcs) {
      g.src.push_back(i);
      g.dst.push_back(j);
      g.norm.push_back(1.0 / std::sqrt(static_cast<double>(g.degrees[i] * g.degrees[j])));
    }
    return g;
  }

  /// Node features are the rows of the symmetric adjacency matrix.
  static Graph with_adjacency_features(std::size_t n, EdgeSet edges) {
    std::vector<double> adj(n * n, 0.0);
    for (auto [a, b] : edges) {
      if (a < n && b < n) adj[a * n + b] = adj[b * n + a] = 1.0;
    }
    return from_edges(n, std::move(edges), Tensor::from({n, n}, std::move(adj)));
  }
};

// ---------------------------------------------------------------------------
// Predefined graphs

inline constexpr std::size_t max_predefined_nodes = 15;

enum class GraphKind { turan, house_x, balanced_tree, wheel, circular_ladder, star };

/// Fixed order used by the synthetic benchmark; N_e factors use the first N_e.
inline constexpr std::array<GraphKind, 6> factor_catalog{
    GraphKind::turan,  GraphKind::house_x,         GraphKind::balanced_tree,
    GraphKind::wheel,  GraphKind::circular_ladder, GraphKind::star};

inline std::string_view kind_name(GraphKind kind) {
  switch (kind) {
    case GraphKind::turan: return "turan_7_3";
    case GraphKind::house_x: return "house_x";
    case GraphKind::balanced_tree: return "balanced_tree_2_3";
    case GraphKind::wheel: return "wheel_8";
    case GraphKind::circular_ladder: return "circular_ladder_5";
    case GraphKind::star: return "star_9";
  }
  return "?";
}

inline GraphKind kind_from_name(std::string_view name) {
  for (GraphKind k : factor_catalog)
    if (kind_name(k) == name) return k;
  throw InputError("unknown graph kind '" + std::string(name) + "'");
}

inline std::size_t catalog_index(GraphKind kind) {
  return static_cast<std::size_t>(std::find(factor_catalog.begin(), factor_catalog.end(), kind) -
                                  factor_catalog.begin());
}

struct FactorGroundTruth {
  GraphKind kind{};
  std::size_t num_nodes = 0;
  EdgeSet edges;

  friend bool operator==(const FactorGroundTruth&, const FactorGroundTruth&) = default;
};

namespace graphs {

inline void check_size(std::size_t n) {
  if (n > max_predefined_nodes) {
    throw InputError("predefined graph would have " + std::to_string(n) + " nodes, limit is " +
                     std::to_string(max_predefined_nodes));
  }
}

/// Complete r-partite graph on n nodes with parts as equal as possible, the
/// larger parts first.
inline EdgeSet turan(std::size_t n, std::size_t r) {
  check_size(n);
  if (r == 0 || r > n) throw InputError("turan graph needs 1 <= r <= n");
  std::vector<std::size_t> part(n);
  std::size_t node = 0;
  for (std::size_t p = 0; p < r; ++p) {
    const std::size_t len = n / r + (p < n % r ? 1 : 0);
    for (std::size_t i = 0; i < len; ++i) part[node++] = p;
  }
  EdgeSet e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (part[i] != part[j]) e.emplace_back(i, j);
  return e;
}

/// Square 0-1-3-2 with both diagonals and roof apex 4 over the 2-3 side.
inline EdgeSet house_x() {
  return {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}, {2, 4}, {3, 4}};
}

/// Breadth-first numbered tree where node i has children r·i+1 .. r·i+r.
inline EdgeSet balanced_tree(std::size_t branching, std::size_t depth) {
  std::size_t n = 1, level = 1;
  for (std::size_t d = 0; d < depth; ++d) n += (level *= branching);
  check_size(n);
  EdgeSet e;
  for (std::size_t child = 1; child < n; ++child) e.push_back(make_edge((child - 1) / branching, child));
  normalize_edges(e);
  return e;
}

/// Hub 0 joined to every node of the cycle 1..n-1.
inline EdgeSet wheel(std::size_t n) {
  check_size(n);
  if (n < 4) throw InputError("wheel graph needs at least 4 nodes");
  EdgeSet e;
  for (std::size_t i = 1; i < n; ++i) {
    e.emplace_back(0, i);
    e.push_back(make_edge(i, i + 1 < n ? i + 1 : 1));
  }
  normalize_edges(e);
  return e;
}

/// Two k-cycles 0..k-1 and k..2k-1 joined by rungs i – i+k.
inline EdgeSet circular_ladder(std::size_t k) {
  check_size(2 * k);
  if (k < 3) throw InputError("circular ladder needs k >= 3");
  EdgeSet e;
  for (std::size_t i = 0; i < k; ++i) {
    e.push_back(make_edge(i, (i + 1) % k));
    e.push_back(make_edge(k + i, k + (i + 1) % k));
    e.emplace_back(i, i + k);
  }
  normalize_edges(e);
  return e;
}

/// Hub 0 joined to leaves 1..leaves.
inline EdgeSet star(std::size_t leaves) {
  check_size(leaves + 1);
  EdgeSet e;
  for (std::size_t i = 1; i <= leaves; ++i) e.emplace_back(0, i);
  return e;
}

}  // namespace graphs

inline FactorGroundTruth predefined_graph(GraphKind kind) {
  switch (kind) {
    case GraphKind::turan: return {kind, 7, graphs::turan(7, 3)};
    case GraphKind::house_x: return {kind, 5, graphs::house_x()};
    case GraphKind::balanced_tree: return {kind, 15, graphs::balanced_tree(2, 3)};
    case GraphKind::wheel: return {kind, 8, graphs::wheel(8)};
    case GraphKind::circular_ladder: return {kind, 10, graphs::circular_ladder(5)};
    case GraphKind::star: return {kind, 10, graphs::star(9)};
  }
  throw InputError("unknown graph kind");
}

/// Adds isolated nodes so the graph has exactly n nodes.
inline FactorGroundTruth pad_to(FactorGroundTruth g, std::size_t n) {
  if (n < g.num_nodes) {
    throw InputError("cannot pad a " + std::to_string(g.num_nodes) + "-node graph to " +
                     std::to_string(n) + " nodes");
  }
  g.num_nodes = n;
  return g;
}

/// Renames node v to perm[v]; perm must be a permutation of 0..num_nodes-1.
inline FactorGroundTruth relabel(FactorGroundTruth g, std::span<const std::size_t> perm) {
  if (perm.size() != g.num_nodes) throw InputError("permutation size must equal the node count");
  for (auto& e : g.edges) e = make_edge(perm[e.first], perm[e.second]);
  normalize_edges(g.edges);
  return g;
}

/// Union of the factors' edge sets on their shared node indices.
inline Graph merge_factors(std::span<const FactorGroundTruth> chosen) {
  if (chosen.empty()) throw InputError("merge_factors needs at least one factor");
  const std::size_t n = chosen.front().num_nodes;
  EdgeSet all;
  for (const auto& f : chosen) {
    if (f.num_nodes != n) throw InputError("factors must be padded to the same node count");
    all.insert(all.end(), f.edges.begin(), f.edges.end());
  }
  return Graph::with_adjacency_features(n, std::move(all));
}

// ---------------------------------------------------------------------------
// Dataset

struct Sample {
  Graph graph;
  std::vector<int> label;  // one 0/1 entry per factor type
  std::vector<FactorGroundTruth> factors;
};

struct Splits {
  std::vector<std::size_t> train, val, test;
};

struct Dataset {
  static constexpr int format_version = 1;

  std::vector<Sample> samples;
  std::size_t n_factors = 0;
  std::size_t feature_dim = 0;
  std::uint64_t seed = 0;
  Splits splits;
};

inline constexpr std::size_t synthetic_nodes = 15;
inline constexpr std::size_t default_num_samples = 1000;

/// Factor types per sample: half of N_e, rounded up.
inline std::size_t factors_per_sample(std::size_t n_factors) { return (n_factors + 1) / 2; }

/// Shuffles 0..n-1 and cuts it 80/10/10; each part is stored sorted.
inline Splits make_splits(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  Splits s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

/// Each sample picks ceil(N_e/2) catalog types, places each one under a random
/// node relabeling of the shared 15-node set, and merges them.
inline Dataset generate_synthetic(std::size_t n_factors, std::size_t num_samples, std::uint64_t seed) {
  if (n_factors < 2 || n_factors > factor_catalog.size()) {
    throw InputError("factor count must be in [2, " + std::to_string(factor_catalog.size()) + "]");
  }
  if (num_samples == 0) throw InputError("num_samples must be positive");

  std::vector<FactorGroundTruth> padded;
  for (std::size_t e = 0; e < n_factors; ++e)
    padded.push_back(pad_to(predefined_graph(factor_catalog[e]), synthetic_nodes));

  Rng rng(seed);
  Dataset d;
  d.n_factors = n_factors;
  d.feature_dim = synthetic_nodes;
  d.seed = seed;
  const std::size_t k = factors_per_sample(n_factors);
  for (std::size_t s = 0; s < num_samples; ++s) {
    std::vector<std::size_t> types(n_factors);
    std::iota(types.begin(), types.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) std::swap(types[i], types[i + rng.below(n_factors - i)]);
    types.resize(k);
    std::sort(types.begin(), types.end());

    Sample sample;
    sample.label.assign(n_factors, 0);
    for (auto t : types) {
      sample.label[t] = 1;
      std::vector<std::size_t> perm(synthetic_nodes);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(perm));
      sample.factors.push_back(relabel(padded[t], perm));
    }
    sample.graph = merge_factors(sample.factors);
    d.samples.push_back(std::move(sample));
  }
  d.splits = make_splits(num_samples, rng);
  return d;
}

// ---------------------------------------------------------------------------
// File format

namespace detail {

inline nlohmann::json edges_to_json(const EdgeSet& edges) {
  auto arr = nlohmann::json::array();
  for (auto [a, b] : edges) arr.push_back({a, b});
  return arr;
}

inline const nlohmann::json& field(const nlohmann::json& obj, const char* name,
                                   const std::string& path) {
  if (!obj.is_object()) throw ParseError(path, "expected an object");
  auto it = obj.find(name);
  if (it == obj.end()) throw ParseError(path.empty() ? name : path + "." + name, "missing");
  return *it;
}

inline std::size_t as_count(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number_unsigned()) throw ParseError(path, "expected a non-negative integer");
  return v.get<std::size_t>();
}

inline EdgeSet edges_from_json(const nlohmann::json& v, std::size_t n, const std::string& path) {
  if (!v.is_array()) throw ParseError(path, "expected an array of [i, j] pairs");
  EdgeSet edges;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const auto& e = v[k];
    const std::string at = path + "[" + std::to_string(k) + "]";
    if (!e.is_array() || e.size() != 2) throw ParseError(at, "expected [i, j]");
    const std::size_t a = as_count(e[0], at), b = as_count(e[1], at);
    if (!(a < b) || b >= n) throw ParseError(at, "edge must satisfy i < j < n");
    edges.emplace_back(a, b);
  }
  const std::size_t before = edges.size();
  normalize_edges(edges);
  if (edges.size() != before) throw ParseError(path, "duplicate edges");
  return edges;
}

inline std::vector<std::size_t> indices_from_json(const nlohmann::json& v, std::size_t bound,
                                                  const std::string& path) {
  if (!v.is_array()) throw ParseError(path, "expected an array of indices");
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const std::size_t i = as_count(v[k], path + "[" + std::to_string(k) + "]");
    if (i >= bound) throw ParseError(path, "index " + std::to_string(i) + " out of range");
    out.push_back(i);
  }
  return out;
}

}  // namespace detail

inline nlohmann::json dataset_to_json(const Dataset& d) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : d.samples) {
    nlohmann::json factors = nlohmann::json::array();
    for (const auto& f : s.factors)
      factors.push_back({{"kind", kind_name(f.kind)}, {"edges", detail::edges_to_json(f.edges)}});
    samples.push_back({{"n", s.graph.num_nodes},
                       {"edges", detail::edges_to_json(s.graph.edges())},
                       {"label", s.label},
                       {"factors", std::move(factors)}});
  }
  return {{"version", Dataset::format_version},
          {"n_factors", d.n_factors},
          {"feature_dim", d.feature_dim},
          {"seed", d.seed},
          {"splits", {{"train", d.splits.train}, {"val", d.splits.val}, {"test", d.splits.test}}},
          {"samples", std::move(samples)}};
}

inline Dataset dataset_from_json(const nlohmann::json& doc) {
  using detail::as_count;
  using detail::field;
  Dataset d;
  const auto& version = field(doc, "version", "");
  if (!version.is_number_integer() || version.get<int>() != Dataset::format_version) {
    throw ParseError("version", "unsupported dataset version");
  }
  d.n_factors = as_count(field(doc, "n_factors", ""), "n_factors");
  d.feature_dim = as_count(field(doc, "feature_dim", ""), "feature_dim");
  const auto& seed = field(doc, "seed", "");
  if (!seed.is_number_unsigned()) throw ParseError("seed", "expected a non-negative integer");
  d.seed = seed.get<std::uint64_t>();

  const auto& samples = field(doc, "samples", "");
  if (!samples.is_array()) throw ParseError("samples", "expected an array");
  for (std::size_t si = 0; si < samples.size(); ++si) {
    const std::string path = "samples[" + std::to_string(si) + "]";
    const auto& js = samples[si];
    const std::size_t n = as_count(field(js, "n", path), path + ".n");
    if (n != d.feature_dim) throw ParseError(path + ".n", "node count must equal feature_dim");
    Sample s;
    EdgeSet edges = detail::edges_from_json(field(js, "edges", path), n, path + ".edges");

    const auto& label = field(js, "label", path);
    if (!label.is_array() || label.size() != d.n_factors) {
      throw ParseError(path + ".label", "expected " + std::to_string(d.n_factors) + " entries");
    }
    for (const auto& v : label) {
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
        throw ParseError(path + ".label", "entries must be 0 or 1");
      s.label.push_back(v.get<int>());
    }

    const auto& factors = field(js, "factors", path);
    if (!factors.is_array()) throw ParseError(path + ".factors", "expected an array");
    EdgeSet uni;
    for (std::size_t fi = 0; fi < factors.size(); ++fi) {
      const std::string fpath = path + ".factors[" + std::to_string(fi) + "]";
      const auto& kind = field(factors[fi], "kind", fpath);
      if (!kind.is_string()) throw ParseError(fpath + ".kind", "expected a string");
      FactorGroundTruth f;
      try {
        f.kind = kind_from_name(kind.get<std::string>());
      } catch (const InputError& e) {
        throw ParseError(fpath + ".kind", e.what());
      }
      f.num_nodes = n;
      f.edges = detail::edges_from_json(field(factors[fi], "edges", fpath), n, fpath + ".edges");
      const std::size_t idx = catalog_index(f.kind);
      if (idx >= d.n_factors || s.label[idx] != 1)
        throw ParseError(fpath + ".kind", "factor kind not set in label");
      uni.insert(uni.end(), f.edges.begin(), f.edges.end());
      s.factors.push_back(std::move(f));
    }
    const auto ones = static_cast<std::size_t>(std::count(s.label.begin(), s.label.end(), 1));
    if (ones != s.factors.size()) throw ParseError(path + ".factors", "count differs from label ones");
    normalize_edges(uni);
    if (uni != edges) throw ParseError(path + ".edges", "not the union of the factor edge sets");
    s.graph = Graph::with_adjacency_features(n, std::move(edges));
    d.samples.push_back(std::move(s));
  }

  const auto& splits = field(doc, "splits", "");
  const std::size_t count = d.samples.size();
  d.splits.train = detail::indices_from_json(field(splits, "train", "splits"), count, "splits.train");
  d.splits.val = detail::indices_from_json(field(splits, "val", "splits"), count, "splits.val");
  d.splits.test = detail::indices_from_json(field(splits, "test", "splits"), count, "splits.test");
  std::vector<std::size_t> all;
  for (const auto* part : {&d.splits.train, &d.splits.val, &d.splits.test})
    all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  bool partition = all.size() == count;
  for (std::size_t i = 0; partition && i < count; ++i) partition = all[i] == i;
  if (!partition) throw ParseError("splits", "splits must partition the sample indices");
  return d;
}

inline std::string dataset_to_string(const Dataset& d) { return dataset_to_json(d).dump() + "\n"; }

inline Dataset dataset_from_string(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("<document>", e.what());
  }
  return dataset_from_json(doc);
}

inline void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << dataset_to_string(d);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Dataset load_dataset(const std::string& path) { return dataset_from_string(read_file(path)); }

}  // namespace factorgcn
