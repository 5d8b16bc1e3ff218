#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hei/graph.hpp"
#include "hei/random.hpp"
#include "hei/stats.hpp"
#include "hei/tensor.hpp"

namespace hei {

struct BetaParams {
  double alpha = 1.0;
  double beta = 1.0;

  /// Mean consistent with Rng::beta's point-mass clamps.
  double mean() const {
    constexpr double kTiny = 1e-9, kHuge = 1e9;
    if (beta < kTiny || alpha > kHuge) return 1.0;
    if (alpha < kTiny || beta > kHuge) return 0.0;
    return alpha / (alpha + beta);
  }
};

struct SynthConfig {
  std::size_t num_nodes = 2000;
  std::size_t num_classes = 3;
  double mean_degree = 8.0;
  std::size_t d_inv = 6;
  std::size_t d_sp = 6;
  BetaParams train_hom_beta{5.0, 2.0};
  BetaParams test_hom_beta{2.0, 5.0};
  double spurious_corr_train = 0.95;
  double spurious_corr_test = 0.05;
  double noise_sigma = 0.5;
  double train_frac = 0.5;
  double val_frac = 0.25;
  std::uint64_t seed = 0;
  bool structural_spurious = false;  // extra edges to a per-spurious-class hub

  void validate() const {
    detail::require(num_classes >= 2, "synthgen: need at least 2 classes");
    detail::require(num_nodes >= 4 * num_classes, "synthgen: too few nodes for class coverage");
    detail::require(mean_degree >= 1.0, "synthgen: mean_degree must be >= 1");
    detail::require(d_inv >= num_classes && d_sp >= num_classes,
                    "synthgen: feature dims must be >= num_classes");
    detail::require(train_hom_beta.alpha > 0 && train_hom_beta.beta > 0 &&
                        test_hom_beta.alpha > 0 && test_hom_beta.beta > 0,
                    "synthgen: Beta parameters must be > 0");
    detail::require(spurious_corr_train >= 0 && spurious_corr_train <= 1 &&
                        spurious_corr_test >= 0 && spurious_corr_test <= 1,
                    "synthgen: spurious correlations must be in [0,1]");
    detail::require(noise_sigma > 0, "synthgen: noise_sigma must be > 0");
    detail::require(train_frac > 0 && train_frac < 1 && val_frac > 0 && val_frac < 1 &&
                        train_frac + val_frac < 1,
                    "synthgen: fractions must be in (0,1) and sum below 1");
  }
};

struct SynthTruth {
  std::vector<double> target_homophily;
  std::vector<std::int32_t> true_env;       // quartile bucket of target homophily
  std::vector<std::int32_t> spurious_class;
};

struct SynthOutput {
  Graph graph;
  NodeSplit split;
  SynthTruth truth;
};

namespace detail {

/// Candidate list with cumulative weights for one (wiring pool, class) cell.
struct WeightedPool {
  std::vector<NodeId> ids;
  std::vector<double> cum;  // cumulative weights, parallel to ids
  double total = 0;

  void build(const std::vector<double>& weight_of) {
    cum.resize(ids.size());
    double acc = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      acc += weight_of[static_cast<std::size_t>(ids[i])];
      cum[i] = acc;
    }
    total = acc;
  }

  /// Weighted draw excluding `self`; falls back to uniform when the weight
  /// mass is degenerate or concentrated on `self`.
  NodeId sample(Rng& rng, NodeId self) const {
    if (total > 0) {
      for (int attempt = 0; attempt < 64; ++attempt) {
        double r = rng.uniform() * total;
        auto it = std::lower_bound(cum.begin(), cum.end(), r);
        if (it == cum.end()) it = cum.end() - 1;
        NodeId pick = ids[static_cast<std::size_t>(it - cum.begin())];
        if (pick != self) return pick;
      }
    }
    // Uniform over candidates, skipping self's slot when present.
    auto self_it = std::find(ids.begin(), ids.end(), self);
    std::size_t n = ids.size() - (self_it != ids.end() ? 1 : 0);
    require(n >= 1, "synthgen: no wiring candidate available");
    std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(n)));
    if (self_it != ids.end() && j >= static_cast<std::size_t>(self_it - ids.begin())) ++j;
    return ids[j];
  }
};

}  // namespace detail

/// Draws a heterophily-shifted node-classification problem. Regions come
/// first (train+val vs test), each node's target homophily h_v from its
/// region's Beta; edges are wired region-locally with a same-label quota of
/// h_v per node, biased toward like-minded partners so realized homophily
/// tracks h_v. Labels drive the invariant features; the spurious class
/// follows the label with probability p(h_v) = clamp(a + b h_v), calibrated
/// so the region means of p match the configured spurious correlations.
inline SynthOutput generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t n = cfg.num_nodes;
  const auto C = static_cast<std::int32_t>(cfg.num_classes);

  // Labels, uniform over classes.
  std::vector<std::int32_t> labels(n);
  for (auto& y : labels) y = static_cast<std::int32_t>(rng.uniform_int(C));
  {
    std::vector<std::size_t> counts(cfg.num_classes, 0);
    for (auto y : labels) ++counts[static_cast<std::size_t>(y)];
    for (std::size_t c = 0; c < cfg.num_classes; ++c)
      if (counts[c] == 0)
        throw std::invalid_argument("synthgen: class with zero nodes (class " +
                                    std::to_string(c) + ")");
  }

  // Region assignment: 0 = train, 1 = val, 2 = test.
  std::vector<NodeId> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<NodeId>(i);
  rng.shuffle(order);
  const std::size_t n_train = static_cast<std::size_t>(cfg.train_frac * static_cast<double>(n));
  const std::size_t n_val = static_cast<std::size_t>(cfg.val_frac * static_cast<double>(n));
  std::vector<std::int8_t> region(n, 2);
  for (std::size_t i = 0; i < n_train; ++i) region[static_cast<std::size_t>(order[i])] = 0;
  for (std::size_t i = n_train; i < n_train + n_val; ++i)
    region[static_cast<std::size_t>(order[i])] = 1;

  // Target homophily per node from the region's Beta.
  std::vector<double> h(n);
  for (std::size_t v = 0; v < n; ++v) {
    const BetaParams& bp = (region[v] == 2) ? cfg.test_hom_beta : cfg.train_hom_beta;
    h[v] = rng.beta(bp.alpha, bp.beta);
  }

  // Wiring pools: train+val nodes only connect among themselves, test nodes
  // likewise, so each region's realized homophily is governed by its own Beta.
  // pool index = pool_id * C + class.
  auto pool_of = [&region](std::size_t v) { return region[v] == 2 ? 1 : 0; };
  std::vector<detail::WeightedPool> same_pools(2 * cfg.num_classes);
  std::vector<detail::WeightedPool> diff_pools(2 * cfg.num_classes);
  for (std::size_t v = 0; v < n; ++v) {
    std::size_t base = static_cast<std::size_t>(pool_of(v)) * cfg.num_classes;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
      if (static_cast<std::int32_t>(c) == labels[v])
        same_pools[base + c].ids.push_back(static_cast<NodeId>(v));
      else
        diff_pools[base + c].ids.push_back(static_cast<NodeId>(v));
    }
  }
  std::vector<double> w_same(n), w_diff(n);
  for (std::size_t v = 0; v < n; ++v) {
    w_same[v] = h[v];        // high-homophily nodes attract same-label edges
    w_diff[v] = 1.0 - h[v];  // low-homophily nodes attract cross-label edges
  }
  for (std::size_t p = 0; p < same_pools.size(); ++p) {
    detail::require(same_pools[p].ids.size() >= 2,
                    "synthgen: a region is missing same-class wiring candidates");
    detail::require(static_cast<double>(same_pools[p].ids.size()) > cfg.mean_degree,
                    "synthgen: requested degree >= class size");
    same_pools[p].build(w_same);
    diff_pools[p].build(w_diff);
  }

  // Quota wiring: each node issues ~mean_degree/2 stubs, floor(s*h_v) of them
  // (plus a Bernoulli remainder) to same-label partners.
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(static_cast<std::size_t>(static_cast<double>(n) * cfg.mean_degree / 2.0) + n);
  const double stub_target = cfg.mean_degree / 2.0;
  for (std::size_t v = 0; v < n; ++v) {
    std::size_t stubs = static_cast<std::size_t>(stub_target);
    if (rng.bernoulli(stub_target - std::floor(stub_target))) ++stubs;
    double same_exact = static_cast<double>(stubs) * h[v];
    std::size_t n_same = static_cast<std::size_t>(same_exact);
    if (rng.bernoulli(same_exact - std::floor(same_exact))) ++n_same;
    if (n_same > stubs) n_same = stubs;
    std::size_t base = static_cast<std::size_t>(pool_of(v)) * cfg.num_classes;
    std::size_t cell = base + static_cast<std::size_t>(labels[v]);
    for (std::size_t s = 0; s < stubs; ++s) {
      const auto& pool = (s < n_same) ? same_pools[cell] : diff_pools[cell];
      NodeId u = pool.sample(rng, static_cast<NodeId>(v));
      edges.emplace_back(static_cast<NodeId>(v), u);
    }
  }

  // True environments: global quartile buckets of target homophily.
  SynthTruth truth;
  truth.target_homophily = h;
  truth.true_env.resize(n);
  {
    std::vector<double> sorted_h = h;
    double q1 = stats::quantile(sorted_h, 0.25);
    double q2 = stats::quantile(sorted_h, 0.50);
    double q3 = stats::quantile(sorted_h, 0.75);
    for (std::size_t v = 0; v < n; ++v)
      truth.true_env[v] = h[v] < q1 ? 0 : h[v] < q2 ? 1 : h[v] < q3 ? 2 : 3;
  }

  // Spurious class: follows the label with probability p(h_v) = a + b h_v,
  // solved so E[p | region] hits the configured correlation at each region's
  // Beta mean (clamping to [0,1] makes extreme targets approximate). When the
  // two region means coincide the line degenerates to per-region constants.
  const double mean_train = cfg.train_hom_beta.mean();
  const double mean_test = cfg.test_hom_beta.mean();
  truth.spurious_class.resize(n);
  {
    bool degenerate = std::abs(mean_train - mean_test) < 1e-6;
    double b = degenerate ? 0.0
                          : (cfg.spurious_corr_train - cfg.spurious_corr_test) /
                                (mean_train - mean_test);
    double a = cfg.spurious_corr_train - b * mean_train;
    for (std::size_t v = 0; v < n; ++v) {
      double p = degenerate
                     ? (region[v] == 2 ? cfg.spurious_corr_test : cfg.spurious_corr_train)
                     : std::clamp(a + b * h[v], 0.0, 1.0);
      truth.spurious_class[v] =
          rng.bernoulli(p) ? labels[v] : static_cast<std::int32_t>(rng.uniform_int(C));
    }
  }

  if (cfg.structural_spurious) {
    // One hub per class; nodes wire to the hub of their spurious class, which
    // plants the shortcut in the adjacency instead of the features.
    std::vector<NodeId> hub(cfg.num_classes, -1);
    for (std::size_t v = 0; v < n && std::find(hub.begin(), hub.end(), -1) != hub.end(); ++v)
      if (hub[static_cast<std::size_t>(labels[v])] < 0)
        hub[static_cast<std::size_t>(labels[v])] = static_cast<NodeId>(v);
    for (std::size_t v = 0; v < n; ++v) {
      NodeId target = hub[static_cast<std::size_t>(truth.spurious_class[v])];
      if (target != static_cast<NodeId>(v) && rng.bernoulli(0.5))
        edges.emplace_back(static_cast<NodeId>(v), target);
    }
  }

  // Features: invariant block keyed by the label, spurious block keyed by the
  // spurious class; class means are scaled standard-basis directions.
  const std::size_t d = cfg.d_inv + cfg.d_sp;
  Tensor feats(n, d);
  for (std::size_t v = 0; v < n; ++v) {
    auto row = feats.row(v);
    for (std::size_t j = 0; j < cfg.d_inv; ++j)
      row[j] = (j == static_cast<std::size_t>(labels[v]) ? 1.0 : 0.0) +
               rng.normal(0.0, cfg.noise_sigma);
    for (std::size_t j = 0; j < cfg.d_sp; ++j)
      row[cfg.d_inv + j] =
          (j == static_cast<std::size_t>(truth.spurious_class[v]) ? 1.0 : 0.0) +
          rng.normal(0.0, cfg.noise_sigma);
  }

  SynthOutput out;
  out.graph = build_graph(std::move(edges), std::move(feats), labels,
                          static_cast<std::int32_t>(cfg.num_classes));
  out.truth = std::move(truth);
  for (std::size_t v = 0; v < n; ++v) {
    auto id = static_cast<NodeId>(v);
    if (region[v] == 0) out.split.train.push_back(id);
    else if (region[v] == 1) out.split.val.push_back(id);
    else out.split.test.push_back(id);
  }
  return out;
}

struct ShiftReport {
  std::vector<std::size_t> train_hist, test_hist;  // realized homophily, 10 bins
  double train_mean_hom = 0, test_mean_hom = 0;
  double hist_l1 = 0;  // L1 distance between normalized histograms
  double spurious_match_train = 0, spurious_match_test = 0;
  double pearson_target_realized = 0;  // wiring fidelity diagnostic
};

inline ShiftReport shift_report(const Graph& g, const NodeSplit& split,
                                const SynthTruth& truth) {
  ShiftReport r;
  std::vector<double> bin_edges;
  for (int i = 0; i <= 10; ++i) bin_edges.push_back(static_cast<double>(i) / 10.0);

  IndexSet train_region = split.train;
  train_region.insert(train_region.end(), split.val.begin(), split.val.end());
  std::sort(train_region.begin(), train_region.end());
  r.train_hist = homophily_histogram(g, train_region, bin_edges);
  r.test_hist = homophily_histogram(g, split.test, bin_edges);

  auto region_stats = [&g](const IndexSet& idx, double& mean_out) {
    std::vector<double> vals;
    for (NodeId v : idx)
      if (auto h = node_homophily(g, v)) vals.push_back(*h);
    mean_out = vals.empty() ? 0.0 : stats::mean(vals);
    return vals.size();
  };
  auto n_tr = region_stats(train_region, r.train_mean_hom);
  auto n_te = region_stats(split.test, r.test_mean_hom);

  if (n_tr > 0 && n_te > 0) {
    double l1 = 0;
    for (std::size_t b = 0; b < r.train_hist.size(); ++b)
      l1 += std::abs(static_cast<double>(r.train_hist[b]) / static_cast<double>(n_tr) -
                     static_cast<double>(r.test_hist[b]) / static_cast<double>(n_te));
    r.hist_l1 = l1;
  }

  auto match_rate = [&g, &truth](const IndexSet& idx) {
    if (idx.empty()) return 0.0;
    std::size_t m = 0;
    for (NodeId v : idx)
      if (truth.spurious_class[static_cast<std::size_t>(v)] ==
          g.labels[static_cast<std::size_t>(v)])
        ++m;
    return static_cast<double>(m) / static_cast<double>(idx.size());
  };
  r.spurious_match_train = match_rate(train_region);
  r.spurious_match_test = match_rate(split.test);

  std::vector<double> target, realized;
  for (std::size_t v = 0; v < g.num_nodes; ++v)
    if (auto h = node_homophily(g, static_cast<NodeId>(v))) {
      target.push_back(truth.target_homophily[v]);
      realized.push_back(*h);
    }
  if (target.size() >= 2) r.pearson_target_realized = stats::pearson(target, realized);
  return r;
}

}  // namespace hei
