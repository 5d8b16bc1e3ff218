#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "hei/similarity.hpp"
#include "hei/stats.hpp"
#include "hei/synthgen.hpp"
#include "test_util.hpp"

using Catch::Approx;
using hei::Graph;
using hei::Metric;
using hei::SimilarityConfig;
using testutil::make_tensor;

namespace {

SimilarityConfig cfg_for(Metric m, double c = 0.6) {
  SimilarityConfig cfg;
  cfg.metric = m;
  cfg.decay_c = c;
  return cfg;
}

}  // namespace

TEST_CASE("cosine similarity fixtures", "[similarity]") {
  std::vector<double> ex{1, 0}, ey{0, 1}, diag{1, 1}, neg{-1, 0}, zero{0, 0};
  REQUIRE(hei::cosine_sim(ex, ex) == Approx(1.0));
  REQUIRE(hei::cosine_sim(ex, ey) == Approx(0.0));
  REQUIRE(hei::cosine_sim(ex, neg) == Approx(-1.0));
  REQUIRE(hei::cosine_sim(ex, diag) == Approx(1.0 / std::sqrt(2.0)));
  REQUIRE(hei::cosine_sim(ex, zero) == 0.0);
  REQUIRE(hei::cosine_sim(zero, zero) == 0.0);
}

TEST_CASE("mean aggregation: neighbor average, isolated keeps own row", "[similarity]") {
  Graph g = hei::build_graph({{0, 1}, {1, 2}}, make_tensor(4, 2, {1, 0, 0, 1, 1, 1, 5, 5}),
                             {0, 0, 0, 0});
  hei::Tensor agg = hei::row_norm_aggregate(g, g.features);
  REQUIRE(agg(0, 0) == Approx(0.0));  // row 1
  REQUIRE(agg(0, 1) == Approx(1.0));
  REQUIRE(agg(1, 0) == Approx(1.0));  // (row0 + row2) / 2
  REQUIRE(agg(1, 1) == Approx(0.5));
  REQUIRE(agg(3, 0) == Approx(5.0));  // degree 0: unchanged
  REQUIRE(agg(3, 1) == Approx(5.0));
}

TEST_CASE("local and aggregate pattern fixtures", "[similarity]") {
  // Path 0-1-2 with axis features: cosines are 0 or 1.
  Graph g = hei::build_graph({{0, 1}, {1, 2}}, make_tensor(3, 2, {1, 0, 0, 1, 1, 0}),
                             {0, 0, 0});

  auto local = hei::estimate_patterns(g, cfg_for(Metric::LocalSim));
  REQUIRE(local.values[0] == Approx(0.0));  // cos(e_x, e_y)
  REQUIRE(local.values[1] == Approx(0.0));  // mean of cos(e_y,e_x), cos(e_y,e_x)
  REQUIRE(local.values[2] == Approx(0.0));

  // Aggregated rows: node0 -> e_y, node1 -> e_x, node2 -> e_y.
  auto agg = hei::estimate_patterns(g, cfg_for(Metric::AggSim));
  REQUIRE(agg.values[0] == Approx(0.0));  // cos(agg0, agg1) = cos(e_y, e_x)
  REQUIRE(agg.values[1] == Approx(0.0));
  REQUIRE(agg.values[2] == Approx(0.0));

  // Same path but with identical features everywhere: everything is 1.
  Graph same = hei::build_graph({{0, 1}, {1, 2}}, make_tensor(3, 2, {2, 1, 2, 1, 2, 1}),
                                {0, 0, 0});
  auto local1 = hei::estimate_patterns(same, cfg_for(Metric::LocalSim));
  for (std::size_t v = 0; v < 3; ++v) REQUIRE(local1.values[v] == Approx(1.0));
}

TEST_CASE("feature-seeded neighbor-pair similarity on a path", "[similarity]") {
  // Path 0-1-2-3; all pairwise feature cosines are simple surds.
  const double c = 0.6;
  Graph g = hei::build_graph({{0, 1}, {1, 2}, {2, 3}},
                             make_tensor(4, 2, {1, 0, 1, 1, 0, 1, 1, 0}), {0, 0, 0, 0});
  const double r2 = std::sqrt(2.0);

  SimilarityConfig cfg = cfg_for(Metric::SimRank, c);
  // s(0,1) = c/(1*2) * [cos(f1,f0) + cos(f1,f2)] = c/sqrt(2)
  REQUIRE(hei::pair_similarity(g, 0, 1, cfg) == Approx(c / r2));
  // s(1,2) = c/(2*2) * [cos(f0,f1)+cos(f0,f3)+cos(f2,f1)+cos(f2,f3)] = c(1+sqrt2)/4
  REQUIRE(hei::pair_similarity(g, 1, 2, cfg) == Approx(c * (1 + r2) / 4.0));
  REQUIRE(hei::pair_similarity(g, 2, 1, cfg) == Approx(c * (1 + r2) / 4.0));

  auto z = hei::estimate_patterns(g, cfg);
  REQUIRE(z.values[0] == Approx(c / r2));
  REQUIRE(z.values[1] == Approx((c / r2 + c * (1 + r2) / 4.0) / 2.0));
  REQUIRE(z.values[3] == Approx(c / (2.0 * r2)));

  auto fast = hei::estimate_patterns_fast_simrank(g, g.features, cfg);
  for (std::size_t v = 0; v < 4; ++v)
    REQUIRE(fast.values[v] == Approx(z.values[v]).epsilon(0).margin(1e-12));
}

TEST_CASE("fast path matches the quadruple-loop reference on random graphs", "[similarity]") {
  hei::Rng rng(101);
  for (int rep = 0; rep < 30; ++rep) {
    Graph g = testutil::random_graph(rng, 5 + rng.uniform_int(20), 0.15, 3);
    SimilarityConfig cfg = cfg_for(Metric::SimRank, 0.3 + 0.5 * rng.uniform());
    auto slow = hei::estimate_patterns(g, cfg);
    auto fast = hei::estimate_patterns_fast_simrank(g, g.features, cfg);
    REQUIRE(slow.values.size() == fast.values.size());
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      REQUIRE(std::abs(slow.values[v] - fast.values[v]) <= 1e-9);
      REQUIRE(std::abs(fast.values[v]) <= cfg.decay_c + 1e-12);
    }
  }
}

TEST_CASE("pair similarity is symmetric and zero around isolated nodes", "[similarity]") {
  hei::Rng rng(55);
  Graph g = testutil::random_graph(rng, 18, 0.2, 3);
  SimilarityConfig cfg = cfg_for(Metric::SimRank);
  for (hei::NodeId u = 0; u < 18; ++u)
    for (hei::NodeId v = 0; v < 18; ++v)
      REQUIRE(hei::pair_similarity(g, u, v, cfg) ==
              Approx(hei::pair_similarity(g, v, u, cfg)).epsilon(0).margin(1e-12));

  Graph iso = hei::build_graph({{0, 1}}, hei::Tensor::full(3, 2, 1.0), {0, 0, 0});
  REQUIRE(hei::pair_similarity(iso, 0, 2, cfg) == 0.0);
  REQUIRE(hei::pair_similarity(iso, 2, 2, cfg) == 0.0);
}

TEST_CASE("isolated-node pattern policy", "[similarity]") {
  Graph g = hei::build_graph({{0, 1}, {1, 2}}, make_tensor(4, 2, {2, 1, 2, 1, 2, 1, 2, 1}),
                             {0, 0, 0, 0});
  SimilarityConfig zero = cfg_for(Metric::LocalSim);
  auto z0 = hei::estimate_patterns(g, zero);
  REQUIRE(z0.values[3] == 0.0);

  SimilarityConfig gm = cfg_for(Metric::LocalSim);
  gm.isolated = hei::IsolatedNodePolicy::GlobalMeanPattern;
  auto zg = hei::estimate_patterns(g, gm);
  double mean_defined = (z0.values[0] + z0.values[1] + z0.values[2]) / 3.0;
  REQUIRE(zg.values[3] == Approx(mean_defined));
}

TEST_CASE("pattern matrix stacks metrics in column order", "[similarity]") {
  hei::Rng rng(7);
  Graph g = testutil::random_graph(rng, 15, 0.25, 3);
  std::vector<Metric> metrics{Metric::LocalSim, Metric::AggSim, Metric::SimRank};
  hei::Tensor z = hei::build_pattern_matrix(g, metrics, 0.6);
  REQUIRE(z.rows == g.num_nodes);
  REQUIRE(z.cols == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    auto single = (metrics[j] == Metric::SimRank)
                      ? hei::estimate_patterns_fast_simrank(g, g.features, cfg_for(metrics[j]))
                      : hei::estimate_patterns(g, cfg_for(metrics[j]));
    for (std::size_t v = 0; v < g.num_nodes; ++v)
      REQUIRE(z(v, j) == Approx(single.values[v]).epsilon(0).margin(1e-12));
  }
}

TEST_CASE("similarity config validation and metric names", "[similarity]") {
  SimilarityConfig bad = cfg_for(Metric::SimRank, 1.0);
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.decay_c = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

  REQUIRE(hei::parse_metric("simrank") == Metric::SimRank);
  REQUIRE(hei::parse_metric("local_sim") == Metric::LocalSim);
  REQUIRE(hei::parse_metric("agg_sim") == Metric::AggSim);
  REQUIRE_THROWS_AS(hei::parse_metric("cosine"), std::invalid_argument);
  for (Metric m : {Metric::LocalSim, Metric::AggSim, Metric::SimRank})
    REQUIRE(hei::parse_metric(to_string(m)) == m);
}

TEST_CASE("pattern summary quartiles", "[similarity]") {
  hei::NeighborPattern p;
  p.values = {0.1, 0.2, 0.3, 0.4, 0.5};
  auto s = hei::pattern_summary(p, {0, 1, 2, 3, 4});
  REQUIRE(s.mean == Approx(0.3));
  REQUIRE(s.median == Approx(0.3));
  REQUIRE(s.q25 == Approx(0.2));
  REQUIRE(s.q75 == Approx(0.4));
  REQUIRE_THROWS_AS(hei::pattern_summary(p, {}), std::invalid_argument);
}

TEST_CASE("neighbor patterns track homophily on generated data", "[similarity]") {
  hei::SynthConfig sc;
  sc.num_nodes = 400;
  sc.num_classes = 3;
  sc.mean_degree = 6.0;
  sc.seed = 5;
  auto out = hei::generate(sc);

  hei::Tensor z = hei::build_pattern_matrix(out.graph, {Metric::SimRank}, 0.6);
  std::vector<double> zs, hs;
  for (std::size_t v = 0; v < out.graph.num_nodes; ++v) {
    auto h = hei::node_homophily(out.graph, static_cast<hei::NodeId>(v));
    if (!h) continue;
    zs.push_back(z(v, 0));
    hs.push_back(*h);
  }
  REQUIRE(zs.size() > 300);
  REQUIRE(hei::stats::spearman(zs, hs) > 0.1);
}
