#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hei/graph.hpp"
#include "hei/stats.hpp"
#include "hei/tensor.hpp"

namespace hei {

enum class Metric { LocalSim, AggSim, SimRank };

inline const char* to_string(Metric m) {
  switch (m) {
    case Metric::LocalSim: return "local_sim";
    case Metric::AggSim: return "agg_sim";
    case Metric::SimRank: return "simrank";
  }
  return "?";
}

inline Metric parse_metric(const std::string& s) {
  if (s == "local_sim") return Metric::LocalSim;
  if (s == "agg_sim") return Metric::AggSim;
  if (s == "simrank") return Metric::SimRank;
  throw std::invalid_argument("unknown similarity metric: " + s);
}

enum class IsolatedNodePolicy { ZeroPattern, GlobalMeanPattern };

/// Base similarity is cosine throughout; the SimRank acceleration depends on it.
struct SimilarityConfig {
  Metric metric = Metric::SimRank;
  double decay_c = 0.6;
  IsolatedNodePolicy isolated = IsolatedNodePolicy::ZeroPattern;

  void validate() const {
    detail::require(decay_c > 0.0 && decay_c < 1.0, "similarity: decay_c must be in (0,1)");
  }
};

/// Per-node neighbor-pattern estimates z_v.
struct NeighborPattern {
  std::vector<double> values;
  SimilarityConfig config;
};

inline double cosine_sim(std::span<const double> x, std::span<const double> y) {
  detail::require(x.size() == y.size(), "cosine_sim: dimension mismatch");
  double dot = 0, nx = 0, ny = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx == 0.0 || ny == 0.0) return 0.0;
  return dot / (std::sqrt(nx) * std::sqrt(ny));
}

/// Mean-aggregation D^-1 A; degree-0 rows pass through unchanged.
inline Tensor row_norm_aggregate(const Graph& g, const Tensor& feats) {
  detail::require(feats.rows == g.num_nodes, "row_norm_aggregate: row count != num_nodes");
  Tensor out = Tensor::zeros(feats.rows, feats.cols);
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    auto nbrs = g.neighbors(static_cast<NodeId>(v));
    auto dst = out.row(v);
    if (nbrs.empty()) {
      auto src = feats.row(v);
      std::copy(src.begin(), src.end(), dst.begin());
      continue;
    }
    for (NodeId u : nbrs) {
      auto src = feats.row(static_cast<std::size_t>(u));
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    const double inv = 1.0 / static_cast<double>(nbrs.size());
    for (double& x : dst) x *= inv;
  }
  return out;
}

namespace detail {

inline void check_node(const Graph& g, NodeId v, const char* who) {
  if (v < 0 || static_cast<std::size_t>(v) >= g.num_nodes)
    throw std::invalid_argument(std::string(who) + ": node id out of range");
}

inline std::vector<double> aggregate_row(const Graph& g, const Tensor& feats, NodeId v) {
  auto nbrs = g.neighbors(v);
  std::vector<double> out(feats.cols, 0.0);
  if (nbrs.empty()) {
    auto src = feats.row(static_cast<std::size_t>(v));
    std::copy(src.begin(), src.end(), out.begin());
    return out;
  }
  for (NodeId u : nbrs) {
    auto src = feats.row(static_cast<std::size_t>(u));
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += src[j];
  }
  const double inv = 1.0 / static_cast<double>(nbrs.size());
  for (double& x : out) x *= inv;
  return out;
}

}  // namespace detail

/// Single-pair similarity. SimRank here is the single-level feature-seeded
/// form: c/(|N(u)||N(v)|) times the sum of cosines over all neighbor pairs,
/// 0 when either endpoint is isolated. Not the classical recursive SimRank.
inline double pair_similarity(const Graph& g, NodeId u, NodeId v, const SimilarityConfig& cfg) {
  cfg.validate();
  detail::check_node(g, u, "pair_similarity");
  detail::check_node(g, v, "pair_similarity");
  switch (cfg.metric) {
    case Metric::LocalSim:
      return cosine_sim(g.features.row(static_cast<std::size_t>(u)),
                        g.features.row(static_cast<std::size_t>(v)));
    case Metric::AggSim: {
      auto au = detail::aggregate_row(g, g.features, u);
      auto av = detail::aggregate_row(g, g.features, v);
      return cosine_sim(au, av);
    }
    case Metric::SimRank: {
      auto nu = g.neighbors(u);
      auto nv = g.neighbors(v);
      if (nu.empty() || nv.empty()) return 0.0;
      double sum = 0.0;
      for (NodeId a : nu)
        for (NodeId b : nv)
          sum += cosine_sim(g.features.row(static_cast<std::size_t>(a)),
                            g.features.row(static_cast<std::size_t>(b)));
      return cfg.decay_c * sum /
             (static_cast<double>(nu.size()) * static_cast<double>(nv.size()));
    }
  }
  throw std::logic_error("pair_similarity: unreachable");
}

namespace detail {

inline void apply_isolated_policy(const Graph& g, const SimilarityConfig& cfg,
                                  std::vector<double>& z) {
  if (cfg.isolated == IsolatedNodePolicy::ZeroPattern) return;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t v = 0; v < g.num_nodes; ++v)
    if (g.degree(static_cast<NodeId>(v)) > 0) {
      sum += z[v];
      ++n;
    }
  const double fill = n ? sum / static_cast<double>(n) : 0.0;
  for (std::size_t v = 0; v < g.num_nodes; ++v)
    if (g.degree(static_cast<NodeId>(v)) == 0) z[v] = fill;
}

}  // namespace detail

/// Direct per-definition evaluation: z_v = mean over neighbors of
/// pair_similarity(u, v). For SimRank this is the quadruple-loop reference.
inline NeighborPattern estimate_patterns(const Graph& g, const SimilarityConfig& cfg) {
  cfg.validate();
  NeighborPattern p;
  p.config = cfg;
  p.values.assign(g.num_nodes, 0.0);
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    auto nbrs = g.neighbors(static_cast<NodeId>(v));
    if (nbrs.empty()) continue;
    double sum = 0.0;
    for (NodeId u : nbrs) sum += pair_similarity(g, u, static_cast<NodeId>(v), cfg);
    p.values[v] = sum / static_cast<double>(nbrs.size());
  }
  detail::apply_isolated_policy(g, cfg, p.values);
  return p;
}

/// O(nnz * D) SimRank patterns. With unit-normalized rows X̂ and M_v the mean
/// of neighbor X̂ rows, SimRank(u,v) = c * (M_u . M_v) exactly. Isolated nodes
/// keep a zero M row (not their own features) so pairs touching them come out
/// 0, matching the naive path's policy.
inline NeighborPattern estimate_patterns_fast_simrank(const Graph& g, const Tensor& feats,
                                                      SimilarityConfig cfg = {}) {
  cfg.metric = Metric::SimRank;
  cfg.validate();
  detail::require(feats.rows == g.num_nodes, "fast_simrank: row count != num_nodes");
  const std::size_t n = g.num_nodes, d = feats.cols;

  Tensor xhat = Tensor::zeros(n, d);
  for (std::size_t v = 0; v < n; ++v) {
    auto src = feats.row(v);
    double norm2 = 0.0;
    for (double x : src) norm2 += x * x;
    if (norm2 == 0.0) continue;
    const double inv = 1.0 / std::sqrt(norm2);
    auto dst = xhat.row(v);
    for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] * inv;
  }

  Tensor m = Tensor::zeros(n, d);
  for (std::size_t v = 0; v < n; ++v) {
    auto nbrs = g.neighbors(static_cast<NodeId>(v));
    if (nbrs.empty()) continue;
    auto dst = m.row(v);
    for (NodeId u : nbrs) {
      auto src = xhat.row(static_cast<std::size_t>(u));
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
    const double inv = 1.0 / static_cast<double>(nbrs.size());
    for (double& x : dst) x *= inv;
  }

  NeighborPattern p;
  p.config = cfg;
  p.values.assign(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    auto nbrs = g.neighbors(static_cast<NodeId>(v));
    if (nbrs.empty()) continue;
    auto mv = m.row(v);
    double sum = 0.0;
    for (NodeId u : nbrs) {
      auto mu = m.row(static_cast<std::size_t>(u));
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += mu[j] * mv[j];
      sum += dot;
    }
    p.values[v] = cfg.decay_c * sum / static_cast<double>(nbrs.size());
  }
  detail::apply_isolated_policy(g, cfg, p.values);
  return p;
}

struct PatternSummary {
  double mean = 0, std_dev = 0, q25 = 0, median = 0, q75 = 0;
};

inline PatternSummary pattern_summary(const NeighborPattern& p, const IndexSet& idx) {
  detail::require(!idx.empty(), "pattern_summary: empty index set");
  std::vector<double> vals;
  vals.reserve(idx.size());
  for (NodeId v : idx) {
    detail::require(v >= 0 && static_cast<std::size_t>(v) < p.values.size(),
                    "pattern_summary: node id out of range");
    vals.push_back(p.values[static_cast<std::size_t>(v)]);
  }
  PatternSummary s;
  s.mean = stats::mean(vals);
  s.std_dev = stats::sample_std(vals);
  s.q25 = stats::quantile(vals, 0.25);
  s.median = stats::quantile(vals, 0.5);
  s.q75 = stats::quantile(vals, 0.75);
  return s;
}

/// N x |metrics| matrix of z values, one column per metric, in list order.
/// SimRank uses the accelerated path; the two cosine metrics are linear-time
/// already.
inline Tensor build_pattern_matrix(const Graph& g, const std::vector<Metric>& metrics,
                                   double decay_c = 0.6,
                                   IsolatedNodePolicy isolated = IsolatedNodePolicy::ZeroPattern) {
  detail::require(!metrics.empty(), "build_pattern_matrix: no metrics");
  Tensor z = Tensor::zeros(g.num_nodes, metrics.size());
  for (std::size_t c = 0; c < metrics.size(); ++c) {
    SimilarityConfig cfg{metrics[c], decay_c, isolated};
    NeighborPattern p = (metrics[c] == Metric::SimRank)
                            ? estimate_patterns_fast_simrank(g, g.features, cfg)
                            : estimate_patterns(g, cfg);
    for (std::size_t v = 0; v < g.num_nodes; ++v) z(v, c) = p.values[v];
  }
  return z;
}

}  // namespace hei
