#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "factorgcn/graph.hpp"

using namespace factorgcn;

namespace {

std::size_t count_edges_by_parts(const std::vector<std::size_t>& parts) {
  std::size_t total = 0;
  for (std::size_t a = 0; a < parts.size(); ++a)
    for (std::size_t b = a + 1; b < parts.size(); ++b) total += parts[a] * parts[b];
  return total;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("factorgcn_graph_" + name)).string();
}

void check_graph_invariants(const Graph& g) {
  for (std::size_t k = 0; k < g.num_arcs(); ++k) {
    EXPECT_LT(g.src[k], g.num_nodes);
    EXPECT_LT(g.dst[k], g.num_nodes);
    EXPECT_NE(g.src[k], g.dst[k]);
    if (k > 0) EXPECT_LT(std::pair(g.src[k - 1], g.dst[k - 1]), std::pair(g.src[k], g.dst[k]));
    EXPECT_TRUE(g.arc_index(g.dst[k], g.src[k]).has_value());
  }
}

}  // namespace

TEST(PredefinedGraph, CatalogSizes) {
  const auto hx = predefined_graph(GraphKind::house_x);
  EXPECT_EQ(hx.num_nodes, 5u);
  EXPECT_EQ(hx.edges.size(), 8u);
  const auto tree = predefined_graph(GraphKind::balanced_tree);
  EXPECT_EQ(tree.num_nodes, 15u);
  EXPECT_EQ(tree.edges.size(), 14u);
  const auto turan = predefined_graph(GraphKind::turan);
  EXPECT_EQ(turan.num_nodes, 7u);
  EXPECT_EQ(turan.edges.size(), count_edges_by_parts({3, 2, 2}));
  EXPECT_EQ(predefined_graph(GraphKind::wheel).edges.size(), 14u);
  EXPECT_EQ(predefined_graph(GraphKind::circular_ladder).edges.size(), 15u);
  EXPECT_EQ(predefined_graph(GraphKind::star).edges.size(), 9u);
}

TEST(PredefinedGraph, HouseXHasSquareWithDiagonalsAndRoof) {
  const auto hx = predefined_graph(GraphKind::house_x);
  std::vector<std::size_t> degree(5, 0);
  for (auto [a, b] : hx.edges) {
    ++degree[a];
    ++degree[b];
  }
  std::sort(degree.begin(), degree.end());
  EXPECT_EQ(degree, (std::vector<std::size_t>{2, 3, 3, 4, 4}));
}

TEST(PredefinedGraph, TuranIsCompleteMultipartite) {
  for (std::size_t n = 2; n <= 15; ++n)
    for (std::size_t r = 1; r <= n; ++r) {
      std::vector<std::size_t> parts;
      for (std::size_t p = 0; p < r; ++p) parts.push_back(n / r + (p < n % r ? 1 : 0));
      EXPECT_EQ(graphs::turan(n, r).size(), count_edges_by_parts(parts)) << n << "," << r;
    }
}

TEST(PredefinedGraph, OversizedOrUnknownThrows) {
  EXPECT_THROW(graphs::turan(16, 3), InputError);
  EXPECT_THROW(graphs::balanced_tree(2, 4), InputError);
  EXPECT_THROW(graphs::star(15), InputError);
  EXPECT_THROW(kind_from_name("petersen"), InputError);
  for (GraphKind k : factor_catalog) EXPECT_EQ(kind_from_name(kind_name(k)), k);
}

TEST(PadTo, KeepsEdgesAndAddsIsolatedNodes) {
  const auto hx = predefined_graph(GraphKind::house_x);
  const auto padded = pad_to(hx, 15);
  EXPECT_EQ(padded.num_nodes, 15u);
  EXPECT_EQ(padded.edges, hx.edges);
  EXPECT_EQ(pad_to(hx, 5), hx);
  const auto merged = merge_factors(std::vector{padded});
  for (std::size_t v = 5; v < 15; ++v) EXPECT_EQ(merged.degrees[v], 0u);
  EXPECT_THROW(pad_to(hx, 4), InputError);
}

TEST(MergeFactors, SingleAndDisjointFactors) {
  const auto hx = pad_to(predefined_graph(GraphKind::house_x), 15);
  EXPECT_EQ(merge_factors(std::vector{hx}).edges(), hx.edges);

  std::vector<std::size_t> shift(15);
  for (std::size_t v = 0; v < 15; ++v) shift[v] = (v + 5) % 15;
  const auto moved = relabel(hx, shift);
  EXPECT_EQ(merge_factors(std::vector{hx, moved}).edges().size(), 16u);
  EXPECT_THROW(merge_factors(std::vector<FactorGroundTruth>{}), InputError);
}

TEST(MergeFactors, MatchesSetUnionOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<FactorGroundTruth> chosen;
    std::set<Edge> oracle;
    const std::size_t count = 1 + rng.below(3);
    for (std::size_t c = 0; c < count; ++c) {
      auto f = pad_to(predefined_graph(factor_catalog[rng.below(6)]), 15);
      std::vector<std::size_t> perm(15);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(perm));
      f = relabel(f, perm);
      oracle.insert(f.edges.begin(), f.edges.end());
      chosen.push_back(f);
    }
    const auto g = merge_factors(chosen);
    check_graph_invariants(g);
    EXPECT_EQ(g.edges(), EdgeSet(oracle.begin(), oracle.end()));
    EXPECT_EQ(g.num_arcs(), 2 * oracle.size());
  }
}

TEST(MergeFactors, FeaturesAreAdjacencyRows) {
  const auto g = merge_factors(std::vector{pad_to(predefined_graph(GraphKind::wheel), 15)});
  const auto edges = g.edges();
  for (std::size_t i = 0; i < 15; ++i)
    for (std::size_t j = 0; j < 15; ++j) {
      const bool edge = std::binary_search(edges.begin(), edges.end(), make_edge(i, j)) && i != j;
      EXPECT_EQ(g.features.at(i, j), edge ? 1.0 : 0.0);
    }
}

TEST(Relabel, IsAGraphIsomorphism) {
  const auto tree = predefined_graph(GraphKind::balanced_tree);
  std::vector<std::size_t> reverse(15);
  for (std::size_t v = 0; v < 15; ++v) reverse[v] = 14 - v;
  const auto r = relabel(tree, reverse);
  EXPECT_EQ(r.edges.size(), tree.edges.size());
  EXPECT_EQ(relabel(r, reverse), tree);
  EXPECT_THROW(relabel(tree, std::vector<std::size_t>(3)), InputError);
}

TEST(Generator, SampleInvariants) {
  for (std::size_t nf = 2; nf <= 6; ++nf) {
    const auto d = generate_synthetic(nf, 60, nf);
    const std::size_t k = factors_per_sample(nf);
    EXPECT_EQ(d.feature_dim, 15u);
    for (const auto& s : d.samples) {
      EXPECT_EQ(s.graph.num_nodes, 15u);
      EXPECT_EQ(s.graph.feature_dim(), 15u);
      ASSERT_EQ(s.label.size(), nf);
      EXPECT_EQ(static_cast<std::size_t>(std::count(s.label.begin(), s.label.end(), 1)), k);
      ASSERT_EQ(s.factors.size(), k);
      std::set<Edge> uni;
      for (const auto& f : s.factors) {
        EXPECT_EQ(s.label[catalog_index(f.kind)], 1);
        EXPECT_EQ(f.num_nodes, 15u);
        EXPECT_EQ(f.edges.size(), pad_to(predefined_graph(f.kind), 15).edges.size());
        uni.insert(f.edges.begin(), f.edges.end());
      }
      EXPECT_EQ(s.graph.edges(), EdgeSet(uni.begin(), uni.end()));
      check_graph_invariants(s.graph);
    }
  }
}

TEST(Generator, FourFactorLabelsHaveTwoOnes) {
  const auto d = generate_synthetic(4, 20, 1);
  for (const auto& s : d.samples) EXPECT_EQ(std::count(s.label.begin(), s.label.end(), 1), 2);
}

TEST(Generator, LabelMarginalsNearHalf) {
  const std::size_t n = 4000;
  const auto d = generate_synthetic(4, n, 5);
  std::vector<double> freq(4, 0);
  for (const auto& s : d.samples)
    for (std::size_t e = 0; e < 4; ++e) freq[e] += s.label[e];
  const double sd = std::sqrt(0.25 / static_cast<double>(n));
  for (double f : freq) EXPECT_NEAR(f / static_cast<double>(n), 0.5, 5 * sd);
}

TEST(Generator, SplitsPartitionIndices) {
  const auto d = generate_synthetic(3, 101, 9);
  EXPECT_EQ(d.splits.train.size(), 80u);
  EXPECT_EQ(d.splits.val.size(), 10u);
  EXPECT_EQ(d.splits.test.size(), 11u);
  std::vector<std::size_t> all;
  for (const auto* part : {&d.splits.train, &d.splits.val, &d.splits.test}) {
    EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));
    all.insert(all.end(), part->begin(), part->end());
  }
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
}

TEST(Generator, SameSeedGivesIdenticalFile) {
  EXPECT_EQ(dataset_to_string(generate_synthetic(4, 50, 3)), dataset_to_string(generate_synthetic(4, 50, 3)));
  EXPECT_NE(dataset_to_string(generate_synthetic(4, 50, 3)), dataset_to_string(generate_synthetic(4, 50, 4)));
}

TEST(Generator, RejectsBadArguments) {
  EXPECT_THROW(generate_synthetic(1, 10, 0), InputError);
  EXPECT_THROW(generate_synthetic(7, 10, 0), InputError);
  EXPECT_THROW(generate_synthetic(4, 0, 0), InputError);
}

TEST(DatasetFile, RoundTrip) {
  const auto d = generate_synthetic(4, 30, 8);
  const auto path = temp_path("roundtrip.json");
  save_dataset(d, path);
  const auto back = load_dataset(path);
  EXPECT_EQ(dataset_to_string(back), dataset_to_string(d));
  EXPECT_EQ(back.splits.test, d.splits.test);
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].factors, d.samples[i].factors);
    const auto a = back.samples[i].graph.features.data(), b = d.samples[i].graph.features.data();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  std::filesystem::remove(path);
}

TEST(DatasetFile, MissingFieldNamesIt) {
  auto doc = dataset_to_json(generate_synthetic(2, 10, 1));
  doc.erase("n_factors");
  try {
    dataset_from_json(doc);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "n_factors");
  }
}

TEST(DatasetFile, CorruptedFieldsAreParseErrors) {
  const auto base = dataset_to_json(generate_synthetic(2, 10, 1));
  auto bad_edge = base;
  bad_edge["samples"][0]["edges"][0] = {3, 99};
  EXPECT_THROW(dataset_from_json(bad_edge), ParseError);
  auto bad_label = base;
  bad_label["samples"][0]["label"] = {1, 1};
  EXPECT_THROW(dataset_from_json(bad_label), ParseError);
  auto bad_splits = base;
  bad_splits["splits"]["test"] = nlohmann::json::array();
  EXPECT_THROW(dataset_from_json(bad_splits), ParseError);
  auto bad_version = base;
  bad_version["version"] = 7;
  EXPECT_THROW(dataset_from_json(bad_version), ParseError);
}

TEST(DatasetFile, TruncatedFileIsParseError) {
  const auto text = dataset_to_string(generate_synthetic(2, 10, 1));
  for (std::size_t cut : {std::size_t{0}, std::size_t{1}, text.size() / 3, text.size() - 3}) {
    EXPECT_THROW(dataset_from_string(text.substr(0, cut)), ParseError) << "cut " << cut;
  }
}
