#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hei/tensor.hpp"

namespace hei {

using NodeId = std::int32_t;
using IndexSet = std::vector<NodeId>;

struct GraphBuildStats {
  std::size_t self_loops_dropped = 0;
  std::size_t duplicate_edges_dropped = 0;
};

/// Undirected simple graph in CSR form. Immutable after construction;
/// adjacency is stored in both directions with sorted neighbor lists.
struct Graph {
  std::size_t num_nodes = 0;
  std::int32_t num_classes = 0;
  std::vector<std::int64_t> offsets;  // length num_nodes+1, nondecreasing
  std::vector<NodeId> targets;        // length 2*num_edges
  Tensor features;                    // num_nodes x D
  std::vector<std::int32_t> labels;   // -1 = unlabeled

  std::span<const NodeId> neighbors(NodeId v) const {
    return {targets.data() + offsets[static_cast<std::size_t>(v)],
            targets.data() + offsets[static_cast<std::size_t>(v) + 1]};
  }
  std::size_t degree(NodeId v) const {
    return static_cast<std::size_t>(offsets[static_cast<std::size_t>(v) + 1] -
                                    offsets[static_cast<std::size_t>(v)]);
  }
  std::size_t num_edges() const { return targets.size() / 2; }
  std::size_t feature_dim() const { return features.cols; }

  bool labeled(NodeId v) const { return labels[static_cast<std::size_t>(v)] >= 0; }

  /// Each undirected edge once, u < v, sorted.
  std::vector<std::pair<NodeId, NodeId>> undirected_edges() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    out.reserve(num_edges());
    for (std::size_t v = 0; v < num_nodes; ++v)
      for (NodeId u : neighbors(static_cast<NodeId>(v)))
        if (static_cast<NodeId>(v) < u) out.emplace_back(static_cast<NodeId>(v), u);
    return out;
  }
};

/// Builds the symmetric CSR from an arbitrary edge list: self-loops dropped,
/// duplicates (in either direction) collapsed, ids validated against the
/// feature row count.
inline Graph build_graph(std::vector<std::pair<NodeId, NodeId>> edges, Tensor features,
                         std::vector<std::int32_t> labels, std::int32_t num_classes = 0,
                         GraphBuildStats* stats = nullptr) {
  const std::size_t n = features.rows;
  detail::require(labels.size() == n, "build_graph: feature-row/label-count mismatch");
  GraphBuildStats local;
  GraphBuildStats& st = stats ? *stats : local;

  for (auto& [u, v] : edges) {
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n)
      throw std::invalid_argument("build_graph: dangling node id " +
                                  std::to_string(std::max(u, v)));
    if (u > v) std::swap(u, v);
  }
  std::erase_if(edges, [&st](const auto& e) {
    if (e.first == e.second) {
      ++st.self_loops_dropped;
      return true;
    }
    return false;
  });
  std::sort(edges.begin(), edges.end());
  auto last = std::unique(edges.begin(), edges.end());
  st.duplicate_edges_dropped = static_cast<std::size_t>(edges.end() - last);
  edges.erase(last, edges.end());

  for (std::int32_t y : labels)
    if (y < -1) throw std::invalid_argument("build_graph: label below -1");
  std::int32_t max_label = -1;
  for (std::int32_t y : labels) max_label = std::max(max_label, y);
  if (num_classes == 0) num_classes = max_label + 1;
  detail::require(max_label < num_classes, "build_graph: label id >= num_classes");

  Graph g;
  g.num_nodes = n;
  g.num_classes = num_classes;
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.offsets.assign(n + 1, 0);
  for (const auto& [u, v] : edges) {
    ++g.offsets[static_cast<std::size_t>(u) + 1];
    ++g.offsets[static_cast<std::size_t>(v) + 1];
  }
  for (std::size_t i = 0; i < n; ++i) g.offsets[i + 1] += g.offsets[i];
  g.targets.resize(static_cast<std::size_t>(g.offsets[n]));
  std::vector<std::int64_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
  for (const auto& [u, v] : edges) {
    g.targets[static_cast<std::size_t>(cursor[static_cast<std::size_t>(u)]++)] = v;
    g.targets[static_cast<std::size_t>(cursor[static_cast<std::size_t>(v)]++)] = u;
  }
  for (std::size_t v = 0; v < n; ++v) {
    auto* b = g.targets.data() + g.offsets[v];
    auto* e = g.targets.data() + g.offsets[v + 1];
    std::sort(b, e);
  }
  return g;
}

/// Fraction of v's neighbors sharing v's label; nullopt when degree is 0.
inline std::optional<double> node_homophily(const Graph& g, NodeId v) {
  if (v < 0 || static_cast<std::size_t>(v) >= g.num_nodes)
    throw std::invalid_argument("node_homophily: node id out of range");
  if (!g.labeled(v)) throw std::invalid_argument("node_homophily: labels required");
  auto nbrs = g.neighbors(v);
  if (nbrs.empty()) return std::nullopt;
  std::size_t same = 0;
  for (NodeId u : nbrs) {
    if (!g.labeled(u)) throw std::invalid_argument("node_homophily: labels required");
    if (g.labels[static_cast<std::size_t>(u)] == g.labels[static_cast<std::size_t>(v)]) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(nbrs.size());
}

/// Bin counts over [edges[i], edges[i+1]); last bin right-closed. Nodes with
/// undefined homophily (degree 0) are skipped.
inline std::vector<std::size_t> homophily_histogram(const Graph& g, const IndexSet& idx,
                                                    const std::vector<double>& bin_edges) {
  detail::require(bin_edges.size() >= 2, "homophily_histogram: need at least 2 bin edges");
  detail::require(std::is_sorted(bin_edges.begin(), bin_edges.end()),
                  "homophily_histogram: bin edges must be sorted");
  std::vector<std::size_t> counts(bin_edges.size() - 1, 0);
  for (NodeId v : idx) {
    auto h = node_homophily(g, v);
    if (!h) continue;
    double x = *h;
    if (x < bin_edges.front() || x > bin_edges.back()) continue;
    auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), x);
    std::size_t bin = static_cast<std::size_t>(it - bin_edges.begin());
    bin = (bin == 0) ? 0 : bin - 1;
    if (bin >= counts.size()) bin = counts.size() - 1;  // right-closed last bin
    ++counts[bin];
  }
  return counts;
}

struct NodeSplit {
  IndexSet train, val, test;
};

inline void validate_split(const Graph& g, const NodeSplit& split) {
  std::vector<std::uint8_t> seen(g.num_nodes, 0);
  for (const IndexSet* part : {&split.train, &split.val, &split.test}) {
    for (NodeId v : *part) {
      if (v < 0 || static_cast<std::size_t>(v) >= g.num_nodes)
        throw std::invalid_argument("split: node id out of range");
      if (seen[static_cast<std::size_t>(v)]++)
        throw std::invalid_argument("split: sets not disjoint");
    }
  }
  for (NodeId v : split.train)
    if (!g.labeled(v)) throw std::invalid_argument("split: unlabeled train node");
}

enum class SettingKind { Standard, SimulationLowToHigh, SimulationHighToLow };

inline const char* to_string(SettingKind k) {
  switch (k) {
    case SettingKind::Standard: return "standard";
    case SettingKind::SimulationLowToHigh: return "simulation_low_to_high";
    case SettingKind::SimulationHighToLow: return "simulation_high_to_low";
  }
  return "?";
}

struct EvalSetting {
  SettingKind kind = SettingKind::Standard;
  IndexSet train_idx;
  IndexSet full_test;
  IndexSet high_hom_test;
  IndexSet low_hom_test;
};

namespace detail {

/// Drops nodes whose homophily is undefined (degree 0); unlabeled nodes raise.
inline IndexSet usable_for_homophily(const Graph& g, const IndexSet& idx,
                                     std::size_t* dropped = nullptr) {
  IndexSet out;
  out.reserve(idx.size());
  std::size_t skipped = 0;
  for (NodeId v : idx) {
    if (node_homophily(g, v)) out.push_back(v);
    else ++skipped;
  }
  if (dropped) *dropped = skipped;
  return out;
}

/// Median split: sorted by (homophily, id), the first ceil(n/2) nodes form the
/// low half. Everything strictly above the median lands high, everything
/// strictly below lands low, and median ties are broken by id, which is what
/// keeps the halves within one of each other.
inline std::pair<IndexSet, IndexSet> median_split(const Graph& g, const IndexSet& idx) {
  std::vector<std::pair<double, NodeId>> order;
  order.reserve(idx.size());
  for (NodeId v : idx) order.emplace_back(*node_homophily(g, v), v);
  std::sort(order.begin(), order.end());
  const std::size_t n = order.size();
  const std::size_t low_n = (n + 1) / 2;
  IndexSet low, high;
  low.reserve(low_n);
  high.reserve(n - low_n);
  for (std::size_t i = 0; i < n; ++i)
    (i < low_n ? low : high).push_back(order[i].second);
  std::sort(low.begin(), low.end());
  std::sort(high.begin(), high.end());
  return {std::move(low), std::move(high)};
}

}  // namespace detail

/// Standard setting: full train, test partitioned at the homophily median.
inline EvalSetting build_standard_setting(const Graph& g, const NodeSplit& split,
                                          std::size_t* test_nodes_dropped = nullptr) {
  IndexSet usable = detail::usable_for_homophily(g, split.test, test_nodes_dropped);
  if (usable.size() < 2)
    throw std::invalid_argument("build_standard_setting: fewer than 2 usable test nodes");
  auto [low, high] = detail::median_split(g, usable);
  EvalSetting s;
  s.kind = SettingKind::Standard;
  s.train_idx = split.train;
  s.full_test = usable;
  std::sort(s.full_test.begin(), s.full_test.end());
  s.low_hom_test = std::move(low);
  s.high_hom_test = std::move(high);
  return s;
}

/// Simulation settings: train on one homophily half, test on the opposite
/// test half. Each setting's high/low columns re-split its own test set at
/// that set's median so the EvalSetting partition invariants hold per setting.
inline std::pair<EvalSetting, EvalSetting> build_simulation_settings(const Graph& g,
                                                                     const NodeSplit& split) {
  IndexSet train_usable = detail::usable_for_homophily(g, split.train);
  IndexSet test_usable = detail::usable_for_homophily(g, split.test);
  if (train_usable.size() < 2)
    throw std::invalid_argument("build_simulation_settings: fewer than 2 usable train nodes");
  if (test_usable.size() < 2)
    throw std::invalid_argument("build_simulation_settings: fewer than 2 usable test nodes");
  auto [train_low, train_high] = detail::median_split(g, train_usable);
  auto [test_low, test_high] = detail::median_split(g, test_usable);

  auto make = [&g](SettingKind kind, IndexSet train, IndexSet test) {
    if (test.size() < 2)
      throw std::invalid_argument("build_simulation_settings: test half too small to sub-split");
    EvalSetting s;
    s.kind = kind;
    s.train_idx = std::move(train);
    auto [lo, hi] = detail::median_split(g, test);
    s.full_test = std::move(test);
    std::sort(s.full_test.begin(), s.full_test.end());
    s.low_hom_test = std::move(lo);
    s.high_hom_test = std::move(hi);
    return s;
  };
  return {make(SettingKind::SimulationLowToHigh, std::move(train_low), std::move(test_high)),
          make(SettingKind::SimulationHighToLow, std::move(train_high), std::move(test_low))};
}

}  // namespace hei
