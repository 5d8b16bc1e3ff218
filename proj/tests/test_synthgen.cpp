#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "hei/stats.hpp"
#include "hei/synthgen.hpp"

using Catch::Approx;
using hei::Graph;
using hei::IndexSet;
using hei::NodeId;
using hei::SynthConfig;

namespace {

SynthConfig small_cfg(std::uint64_t seed = 0, std::size_t n = 600) {
  SynthConfig c;
  c.num_nodes = n;
  c.num_classes = 3;
  c.mean_degree = 6.0;
  c.seed = seed;
  return c;
}

double mean_realized_hom(const Graph& g, const IndexSet& idx) {
  std::vector<double> vals;
  for (NodeId v : idx)
    if (auto h = hei::node_homophily(g, v)) vals.push_back(*h);
  REQUIRE_FALSE(vals.empty());
  return hei::stats::mean(vals);
}

/// Nearest-class-mean probe on a feature column block, means fit on `fit`.
double probe_accuracy(const Graph& g, const IndexSet& fit, const IndexSet& eval,
                      std::size_t col_begin, std::size_t col_end) {
  const auto C = static_cast<std::size_t>(g.num_classes);
  std::vector<std::vector<double>> mu(C, std::vector<double>(col_end - col_begin, 0.0));
  std::vector<std::size_t> cnt(C, 0);
  for (NodeId v : fit) {
    auto c = static_cast<std::size_t>(g.labels[static_cast<std::size_t>(v)]);
    ++cnt[c];
    for (std::size_t j = col_begin; j < col_end; ++j)
      mu[c][j - col_begin] += g.features(static_cast<std::size_t>(v), j);
  }
  for (std::size_t c = 0; c < C; ++c) {
    REQUIRE(cnt[c] > 0);
    for (auto& x : mu[c]) x /= static_cast<double>(cnt[c]);
  }
  std::size_t correct = 0;
  for (NodeId v : eval) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < C; ++c) {
      double d2 = 0;
      for (std::size_t j = col_begin; j < col_end; ++j) {
        double diff = g.features(static_cast<std::size_t>(v), j) - mu[c][j - col_begin];
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        arg = c;
      }
    }
    if (static_cast<std::int32_t>(arg) == g.labels[static_cast<std::size_t>(v)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(eval.size());
}

}  // namespace

TEST_CASE("generator config validation", "[synthgen]") {
  REQUIRE_NOTHROW(small_cfg().validate());

  SynthConfig c = small_cfg();
  c.num_classes = 1;
  REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);

  c = small_cfg();
  c.d_inv = 2;  // below num_classes
  REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);

  c = small_cfg();
  c.train_frac = 0.8;
  c.val_frac = 0.3;
  REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);

  c = small_cfg();
  c.spurious_corr_train = 1.2;
  REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);

  c = small_cfg();
  c.noise_sigma = 0.0;
  REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);

  // Degree demands more partners than the smallest region/class cell has.
  c = small_cfg(0, 48);
  c.mean_degree = 12.0;
  REQUIRE_THROWS_WITH(hei::generate(c),
                      Catch::Matchers::ContainsSubstring("degree >= class size"));
}

TEST_CASE("generation is bit-identical for a fixed seed", "[synthgen]") {
  auto a = hei::generate(small_cfg(42));
  auto b = hei::generate(small_cfg(42));
  REQUIRE(a.graph.offsets == b.graph.offsets);
  REQUIRE(a.graph.targets == b.graph.targets);
  REQUIRE(a.graph.features.data == b.graph.features.data);
  REQUIRE(a.graph.labels == b.graph.labels);
  REQUIRE(a.split.train == b.split.train);
  REQUIRE(a.split.val == b.split.val);
  REQUIRE(a.split.test == b.split.test);
  REQUIRE(a.truth.target_homophily == b.truth.target_homophily);
  REQUIRE(a.truth.true_env == b.truth.true_env);
  REQUIRE(a.truth.spurious_class == b.truth.spurious_class);

  auto c = hei::generate(small_cfg(43));
  REQUIRE(a.graph.targets != c.graph.targets);
}

TEST_CASE("split respects fractions, covers all nodes, and validates", "[synthgen]") {
  auto out = hei::generate(small_cfg(7));
  const auto& g = out.graph;
  REQUIRE(out.split.train.size() == 300);
  REQUIRE(out.split.val.size() == 150);
  REQUIRE(out.split.test.size() == 150);
  REQUIRE_NOTHROW(hei::validate_split(g, out.split));

  std::vector<std::uint8_t> seen(g.num_nodes, 0);
  for (const IndexSet* part : {&out.split.train, &out.split.val, &out.split.test})
    for (NodeId v : *part) seen[static_cast<std::size_t>(v)] = 1;
  REQUIRE(std::count(seen.begin(), seen.end(), 1) == static_cast<long>(g.num_nodes));
}

TEST_CASE("point-mass homophily targets pin realized homophily", "[synthgen]") {
  SynthConfig hi = small_cfg(3);
  hi.train_hom_beta = {1e10, 1.0};
  hi.test_hom_beta = {1e10, 1.0};
  auto out_hi = hei::generate(hi);
  for (std::size_t v = 0; v < out_hi.graph.num_nodes; ++v) {
    auto h = hei::node_homophily(out_hi.graph, static_cast<NodeId>(v));
    if (h) REQUIRE(*h == 1.0);
  }

  SynthConfig lo = small_cfg(3);
  lo.train_hom_beta = {1.0, 1e10};
  lo.test_hom_beta = {1.0, 1e10};
  auto out_lo = hei::generate(lo);
  for (std::size_t v = 0; v < out_lo.graph.num_nodes; ++v) {
    auto h = hei::node_homophily(out_lo.graph, static_cast<NodeId>(v));
    if (h) REQUIRE(*h == 0.0);
  }
}

TEST_CASE("realized region means track the beta means", "[synthgen]") {
  for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
    auto out = hei::generate(small_cfg(seed, 1500));
    IndexSet train_region = out.split.train;
    train_region.insert(train_region.end(), out.split.val.begin(), out.split.val.end());
    double m_tr = mean_realized_hom(out.graph, train_region);
    double m_te = mean_realized_hom(out.graph, out.split.test);
    REQUIRE(std::abs(m_tr - 5.0 / 7.0) <= 0.05);
    REQUIRE(std::abs(m_te - 2.0 / 7.0) <= 0.05);
  }
}

TEST_CASE("realized homophily correlates strongly with the target", "[synthgen]") {
  auto out = hei::generate(small_cfg(11, 1500));
  auto rep = hei::shift_report(out.graph, out.split, out.truth);
  REQUIRE(rep.pearson_target_realized > 0.8);
}

TEST_CASE("true environments are quartile buckets", "[synthgen]") {
  auto out = hei::generate(small_cfg(13));
  const std::size_t n = out.graph.num_nodes;
  std::vector<std::size_t> counts(4, 0);
  for (std::size_t v = 0; v < n; ++v) {
    REQUIRE(out.truth.true_env[v] >= 0);
    REQUIRE(out.truth.true_env[v] < 4);
    ++counts[static_cast<std::size_t>(out.truth.true_env[v])];
  }
  for (std::size_t b = 0; b < 4; ++b) REQUIRE(counts[b] >= n / 8);

  // Buckets are ordered by target homophily.
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t u = 0; u < n; ++u)
      if (out.truth.true_env[v] < out.truth.true_env[u])
        REQUIRE(out.truth.target_homophily[v] <
                out.truth.target_homophily[u] + 1e-12);
}

TEST_CASE("invariant block is stable across regions, spurious block flips", "[synthgen]") {
  auto cfg = small_cfg(17, 1500);
  auto out = hei::generate(cfg);
  IndexSet train_region = out.split.train;
  train_region.insert(train_region.end(), out.split.val.begin(), out.split.val.end());

  double inv_train = probe_accuracy(out.graph, train_region, train_region, 0, cfg.d_inv);
  double inv_test = probe_accuracy(out.graph, train_region, out.split.test, 0, cfg.d_inv);
  REQUIRE(inv_train > 0.6);
  REQUIRE(std::abs(inv_train - inv_test) < 0.05);

  double sp_train = probe_accuracy(out.graph, train_region, train_region, cfg.d_inv,
                                   cfg.d_inv + cfg.d_sp);
  double sp_test = probe_accuracy(out.graph, train_region, out.split.test, cfg.d_inv,
                                  cfg.d_inv + cfg.d_sp);
  REQUIRE(sp_train > 0.6);                // shortcut is predictive in-region
  REQUIRE(sp_test < sp_train - 0.2);      // and collapses out-of-region

  auto rep = hei::shift_report(out.graph, out.split, out.truth);
  REQUIRE(rep.spurious_match_train > rep.spurious_match_test + 0.1);
}

TEST_CASE("structural spurious mode concentrates degree on class hubs", "[synthgen]") {
  SynthConfig cfg = small_cfg(19);
  cfg.structural_spurious = true;
  auto out = hei::generate(cfg);
  auto plain = hei::generate(small_cfg(19));
  REQUIRE(out.graph.num_edges() > plain.graph.num_edges() + out.graph.num_nodes / 4);

  // The first node of each class is its hub and should tower over the mean.
  std::vector<bool> seen(cfg.num_classes, false);
  double mean_deg = 2.0 * static_cast<double>(out.graph.num_edges()) /
                    static_cast<double>(out.graph.num_nodes);
  for (std::size_t v = 0; v < out.graph.num_nodes; ++v) {
    auto c = static_cast<std::size_t>(out.graph.labels[v]);
    if (seen[c]) continue;
    seen[c] = true;
    REQUIRE(static_cast<double>(out.graph.degree(static_cast<NodeId>(v))) > 5.0 * mean_deg);
  }
}

TEST_CASE("shift report separates shifted regions and not identical ones", "[synthgen]") {
  auto shifted = hei::generate(small_cfg(23, 1200));
  auto rep = hei::shift_report(shifted.graph, shifted.split, shifted.truth);
  REQUIRE(rep.train_mean_hom > rep.test_mean_hom + 0.3);
  REQUIRE(rep.hist_l1 > 0.5);
  REQUIRE(rep.train_hist.size() == 10);
  REQUIRE(rep.test_hist.size() == 10);

  SynthConfig same = small_cfg(23, 1200);
  same.test_hom_beta = same.train_hom_beta;
  same.spurious_corr_test = same.spurious_corr_train;
  auto flat = hei::generate(same);
  auto rep2 = hei::shift_report(flat.graph, flat.split, flat.truth);
  REQUIRE(std::abs(rep2.train_mean_hom - rep2.test_mean_hom) < 0.05);
  REQUIRE(rep2.hist_l1 < 0.15);
}
