#pragma once

// Task metrics and the two disentanglement metrics: edge-only graph edit
// distance under optimal factor/ground-truth matching, and the consistency of
// that matching across samples.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "factorgcn/errors.hpp"
#include "factorgcn/graph.hpp"

namespace factorgcn {

// ---------------------------------------------------------------------------
// Assignment

template <class Cost>
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Cost> values;  // row-major

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, Cost fill = Cost{}) : rows(r), cols(c), values(r * c, fill) {}

  Cost& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  const Cost& operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

inline constexpr std::size_t unassigned = std::numeric_limits<std::size_t>::max();

template <class Cost>
struct Assignment {
  std::vector<std::size_t> col_to_row;  // `unassigned` when a column got a padding row
  Cost total{};
};

/// Minimum-cost assignment of every column to a distinct row, O(n³) with
/// row/column potentials. Non-square inputs are padded with zero-cost dummy
/// rows or columns, which are stripped from the result.
template <class Cost>
  requires std::signed_integral<Cost> || std::floating_point<Cost>
Assignment<Cost> hungarian(const CostMatrix<Cost>& cost) {
  if (cost.rows == 0 || cost.cols == 0) throw InputError("hungarian: empty cost matrix");
  for (const Cost& c : cost.values) {
    if constexpr (std::floating_point<Cost>) {
      if (!std::isfinite(c)) throw InputError("hungarian: costs must be finite");
    }
    if (c < Cost{}) throw InputError("hungarian: costs must be non-negative");
  }

  const std::size_t n = std::max(cost.rows, cost.cols);
  // Columns of the padded matrix are the "workers" placed into rows.
  auto at = [&](std::size_t r, std::size_t c) -> Cost {
    return (r < cost.rows && c < cost.cols) ? cost(r, c) : Cost{};
  };
  const Cost inf = std::numeric_limits<Cost>::max() / 4;
  std::vector<Cost> u(n + 1, Cost{}), v(n + 1, Cost{});
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);  // match[row] = column (1-based)
  for (std::size_t c = 1; c <= n; ++c) {
    match[0] = c;
    std::size_t r0 = 0;
    std::vector<Cost> min_v(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[r0] = 1;
      const std::size_t c0 = match[r0];
      Cost delta = inf;
      std::size_t r1 = 0;
      for (std::size_t r = 1; r <= n; ++r) {
        if (used[r]) continue;
        const Cost reduced = at(r - 1, c0 - 1) - u[c0] - v[r];
        if (reduced < min_v[r]) {
          min_v[r] = reduced;
          way[r] = r0;
        }
        if (min_v[r] < delta) {
          delta = min_v[r];
          r1 = r;
        }
      }
      for (std::size_t r = 0; r <= n; ++r) {
        if (used[r]) {
          u[match[r]] += delta;
          v[r] -= delta;
        } else {
          min_v[r] -= delta;
        }
      }
      r0 = r1;
    } while (match[r0] != 0);
    do {
      const std::size_t r1 = way[r0];
      match[r0] = match[r1];
      r0 = r1;
    } while (r0 != 0);
  }

  Assignment<Cost> result;
  result.col_to_row.assign(cost.cols, unassigned);
  for (std::size_t r = 1; r <= n; ++r) {
    const std::size_t c = match[r] - 1;
    if (r - 1 < cost.rows && c < cost.cols) {
      result.col_to_row[c] = r - 1;
      result.total += cost(r - 1, c);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// GED_E

/// Symmetrizes arc coefficients ((E_ij + E_ji) / 2), ranks the undirected
/// edges by value descending with ties to the lexicographically smaller edge,
/// and keeps the top k.
inline EdgeSet binarize_to_count(const Graph& graph, std::span<const double> arc_values, std::size_t k) {
  if (arc_values.size() != graph.num_arcs()) {
    throw ShapeError("binarize_to_count: one value per arc required");
  }
  struct Scored {
    Edge edge;
    double value;
  };
  std::vector<Scored> candidates;
  for (std::size_t a = 0; a < graph.num_arcs(); ++a) {
    const std::size_t i = graph.src[a], j = graph.dst[a];
    if (i > j) continue;
    const auto back = graph.arc_index(j, i);
    const double v = back ? 0.5 * (arc_values[a] + arc_values[*back]) : arc_values[a];
    candidates.push_back({{i, j}, v});
  }
  if (k > candidates.size()) {
    throw InputError("binarize_to_count: k=" + std::to_string(k) + " exceeds " +
                     std::to_string(candidates.size()) + " candidate edges");
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Scored& a, const Scored& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.edge < b.edge;
  });
  EdgeSet out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(candidates[i].edge);
  normalize_edges(out);
  return out;
}

inline std::size_t symmetric_difference_size(EdgeSet a, EdgeSet b) {
  normalize_edges(a);
  normalize_edges(b);
  EdgeSet diff;
  std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(diff));
  return diff.size();
}

/// Edge additions plus removals turning the binarized factor into `truth`.
inline std::int64_t gede_pair(const Graph& graph, std::span<const double> arc_values,
                              const EdgeSet& truth) {
  return static_cast<std::int64_t>(
      symmetric_difference_size(binarize_to_count(graph, arc_values, truth.size()), truth));
}

struct FactorMatch {
  GraphKind kind{};
  std::size_t factor = unassigned;  // unassigned when there were fewer factors than truths
  std::int64_t cost = 0;
};

struct MatchResult {
  std::vector<FactorMatch> matches;  // one per ground-truth factor, in sample order
  CostMatrix<std::int64_t> costs;    // rows: generated factors, cols: ground truths
  std::int64_t total = 0;
};

/// Builds the factor × ground-truth GED_E matrix and matches it optimally. A
/// ground truth left without a factor costs its full edge count.
inline MatchResult gede_sample(const Graph& graph, std::span<const std::vector<double>> factor_values,
                               std::span<const FactorGroundTruth> truths) {
  if (truths.empty()) throw InputError("gede_sample: no ground-truth factors");
  if (factor_values.empty()) throw InputError("gede_sample: no generated factors");
  MatchResult r;
  r.costs = CostMatrix<std::int64_t>(factor_values.size(), truths.size());
  for (std::size_t e = 0; e < factor_values.size(); ++e)
    for (std::size_t t = 0; t < truths.size(); ++t)
      r.costs(e, t) = gede_pair(graph, factor_values[e], truths[t].edges);
  const auto assignment = hungarian(r.costs);
  for (std::size_t t = 0; t < truths.size(); ++t) {
    FactorMatch m{truths[t].kind, assignment.col_to_row[t], 0};
    m.cost = m.factor == unassigned ? static_cast<std::int64_t>(truths[t].edges.size())
                                    : r.costs(m.factor, t);
    r.total += m.cost;
    r.matches.push_back(m);
  }
  return r;
}

struct KindConsistency {
  std::vector<std::size_t> histogram;  // matched-factor counts
  std::size_t mode_factor = 0;
  double mode_frequency = 0;
};

/// Per ground-truth kind, how often it was matched to each factor index.
inline std::map<GraphKind, KindConsistency> match_histograms(std::span<const MatchResult> results,
                                                             std::size_t num_factors) {
  std::map<GraphKind, KindConsistency> out;
  for (const auto& r : results)
    for (const auto& m : r.matches) {
      auto& h = out[m.kind].histogram;
      if (h.empty()) h.assign(num_factors, 0);
      if (m.factor != unassigned && m.factor < num_factors) ++h[m.factor];
    }
  for (auto& [kind, kc] : out) {
    for (std::size_t f = 0; f < kc.histogram.size(); ++f)
      if (kc.histogram[f] > kc.histogram[kc.mode_factor]) kc.mode_factor = f;
    // Unmatched appearances count toward the denominator.
    std::size_t appearances = 0;
    for (const auto& r : results)
      for (const auto& m : r.matches) appearances += m.kind == kind ? 1 : 0;
    kc.mode_frequency = appearances ? static_cast<double>(kc.histogram[kc.mode_factor]) /
                                          static_cast<double>(appearances)
                                    : 0.0;
  }
  return out;
}

/// Mean over ground-truth kinds of the frequency of each kind's most common
/// matched factor.
inline double c_score(std::span<const MatchResult> results, std::size_t num_factors) {
  if (results.empty()) throw InputError("c_score: no match results");
  const auto hist = match_histograms(results, num_factors);
  if (hist.empty()) throw InputError("c_score: no ground-truth factors in the results");
  double s = 0;
  for (const auto& [kind, kc] : hist) s += kc.mode_frequency;
  return s / static_cast<double>(hist.size());
}

// ---------------------------------------------------------------------------
// Task metrics

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

/// Pooled F1 over every label of every sample. Predictions are thresholded
/// at 0.5; targets must be 0/1.
inline double micro_f1(std::span<const std::vector<double>> pred, std::span<const std::vector<double>> target) {
  if (pred.size() != target.size()) throw ShapeError("micro_f1: sample counts differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != target[i].size()) throw ShapeError("micro_f1: label widths differ");
    for (std::size_t j = 0; j < pred[i].size(); ++j) {
      const bool p = pred[i][j] >= 0.5, t = target[i][j] >= 0.5;
      c.tp += p && t;
      c.fp += p && !t;
      c.fn += !p && t;
    }
  }
  const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / denom;
}

inline double mae(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw ShapeError("mae: lengths differ");
  if (pred.empty()) return 0.0;
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

/// |Pearson correlation| between every pair of feature dimensions across
/// samples. A constant dimension correlates 0 with everything but itself.
inline std::vector<std::vector<double>> feature_correlation(std::span<const std::vector<double>> samples) {
  if (samples.size() < 2) throw InputError("feature_correlation needs at least 2 samples");
  const std::size_t d = samples.front().size();
  for (const auto& s : samples)
    if (s.size() != d) throw ShapeError("feature_correlation: ragged feature vectors");
  const double n = static_cast<double>(samples.size());
  std::vector<double> mu(d, 0.0);
  for (const auto& s : samples)
    for (std::size_t j = 0; j < d; ++j) mu[j] += s[j];
  for (double& m : mu) m /= n;
  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (const auto& s : samples)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) cov[a][b] += (s[a] - mu[a]) * (s[b] - mu[b]);
  std::vector<std::vector<double>> out(d, std::vector<double>(d, 0.0));
  for (std::size_t a = 0; a < d; ++a) {
    out[a][a] = 1.0;
    for (std::size_t b = a + 1; b < d; ++b) {
      const double denom = std::sqrt(cov[a][a] * cov[b][b]);
      const double r = denom > 0 ? std::min(1.0, std::abs(cov[a][b]) / denom) : 0.0;
      out[a][b] = out[b][a] = r;
    }
  }
  return out;
}

/// One row per dimension, six decimals, comma separated.
inline std::string correlation_csv(const std::vector<std::vector<double>>& matrix) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  for (const auto& row : matrix) {
    for (std::size_t j = 0; j < row.size(); ++j) os << (j ? "," : "") << row[j];
    os << '\n';
  }
  return os.str();
}

inline std::vector<std::vector<double>> parse_correlation_csv(const std::string& text) {
  std::vector<std::vector<double>> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    out.push_back(std::move(row));
  }
  return out;
}

/// Mean |correlation| inside each factor block versus between blocks, off the
/// diagonal.
struct BlockCorrelation {
  double within = 0;
  double across = 0;
};

inline BlockCorrelation block_correlation(const std::vector<std::vector<double>>& corr, std::size_t block) {
  if (block == 0) throw InputError("block_correlation: block width must be positive");
  BlockCorrelation r;
  std::size_t nw = 0, na = 0;
  for (std::size_t a = 0; a < corr.size(); ++a)
    for (std::size_t b = 0; b < corr.size(); ++b) {
      if (a == b) continue;
      if (a / block == b / block) {
        r.within += corr[a][b];
        ++nw;
      } else {
        r.across += corr[a][b];
        ++na;
      }
    }
  if (nw) r.within /= static_cast<double>(nw);
  if (na) r.across /= static_cast<double>(na);
  return r;
}

// ---------------------------------------------------------------------------
// Report

struct MeanStd {
  double mean = 0;
  double std = 0;
};

/// Population mean and standard deviation, summed in index order.
inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  for (double x : xs) r.std += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(r.std / static_cast<double>(xs.size()));
  return r;
}

struct MetricsReport {
  std::string model;
  std::size_t num_samples = 0;
  std::size_t num_factors = 0;  // generated factor graphs per sample
  std::optional<double> micro_f1;
  std::optional<MeanStd> ged_e;
  std::optional<double> c_score;
  std::map<GraphKind, KindConsistency> per_kind;
  std::vector<std::size_t> sample_indices;
  std::vector<MatchResult> matches;
  std::vector<std::vector<double>> correlation;
};

inline nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["num_samples"] = r.num_samples;
  j["num_factors"] = r.num_factors;
  j["micro_f1"] = r.micro_f1 ? nlohmann::json(*r.micro_f1) : nlohmann::json(nullptr);
  j["ged_e"] = r.ged_e ? nlohmann::json{{"mean", r.ged_e->mean}, {"std", r.ged_e->std}}
                       : nlohmann::json(nullptr);
  j["c_score"] = r.c_score ? nlohmann::json(*r.c_score) : nlohmann::json(nullptr);
  nlohmann::json kinds = nlohmann::json::object();
  for (const auto& [kind, kc] : r.per_kind) {
    kinds[std::string(kind_name(kind))] = {{"histogram", kc.histogram},
                                           {"mode_factor", kc.mode_factor},
                                           {"mode_frequency", kc.mode_frequency}};
  }
  j["per_kind"] = std::move(kinds);
  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < r.matches.size(); ++i) {
    nlohmann::json ms = nlohmann::json::array();
    for (const auto& m : r.matches[i].matches) {
      ms.push_back({{"kind", kind_name(m.kind)},
                    {"factor", m.factor == unassigned ? nlohmann::json(nullptr) : nlohmann::json(m.factor)},
                    {"cost", m.cost}});
    }
    samples.push_back({{"index", i < r.sample_indices.size() ? r.sample_indices[i] : i},
                       {"ged_e", r.matches[i].total},
                       {"matches", std::move(ms)}});
  }
  j["samples"] = std::move(samples);
  j["correlation"] = r.correlation;
  return j;
}

}  // namespace factorgcn
