#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hei/autodiff.hpp"
#include "hei/graph.hpp"
#include "hei/nn.hpp"
#include "hei/random.hpp"
#include "hei/similarity.hpp"
#include "hei/tensor.hpp"

namespace hei {

struct EncoderSpec {
  enum class Kind { LinkxLite, SgcLite };
  Kind kind = Kind::LinkxLite;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 2;
  std::size_t sgc_hops = 2;

  void validate() const {
    detail::require(hidden_dim >= 1, "encoder: hidden_dim must be >= 1");
    detail::require(num_layers >= 1, "encoder: num_layers must be >= 1");
  }
};

inline const char* to_string(EncoderSpec::Kind k) {
  return k == EncoderSpec::Kind::LinkxLite ? "linkx_lite" : "sgc_lite";
}

inline EncoderSpec::Kind parse_encoder_kind(const std::string& s) {
  if (s == "linkx_lite") return EncoderSpec::Kind::LinkxLite;
  if (s == "sgc_lite") return EncoderSpec::Kind::SgcLite;
  throw std::invalid_argument("unknown encoder kind: " + s);
}

inline Tensor gather_rows(const Tensor& m, const IndexSet& idx) {
  Tensor out(idx.size(), m.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    detail::require(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < m.rows,
                    "gather_rows: index out of range");
    auto src = m.row(static_cast<std::size_t>(idx[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

namespace detail {

/// CSR slice of the batch nodes' neighbor lists, shaped for indexed_row_sums.
struct BatchGroups {
  std::shared_ptr<std::vector<std::int64_t>> offsets;
  std::shared_ptr<std::vector<std::int32_t>> indices;
};

inline BatchGroups make_batch_groups(const Graph& g, const IndexSet& batch) {
  auto offsets = std::make_shared<std::vector<std::int64_t>>();
  auto indices = std::make_shared<std::vector<std::int32_t>>();
  offsets->reserve(batch.size() + 1);
  offsets->push_back(0);
  for (NodeId v : batch) {
    require(v >= 0 && static_cast<std::size_t>(v) < g.num_nodes,
            "encode: batch node id out of range");
    auto nbrs = g.neighbors(v);
    indices->insert(indices->end(), nbrs.begin(), nbrs.end());
    offsets->push_back(static_cast<std::int64_t>(indices->size()));
  }
  return {std::move(offsets), std::move(indices)};
}

}  // namespace detail

/// Encoder f_Phi. LinkxLite: h = MLP_f(ReLU(W [h_A || h_X] + h_A + h_X))
/// where h_A comes from a sparse N->H layer over the node's adjacency row
/// (O(deg) per node) and h_X from a linear map of the raw features.
/// SgcLite: MLP over hop-aggregated features, precomputed once per graph.
class Encoder {
 public:
  /// Per-graph precomputation, so trainers can encode against augmented
  /// graphs without rebuilding the encoder.
  struct Prepared {
    const Graph* graph = nullptr;
    Tensor sgc_feats;  // SgcLite only
  };

  Encoder() = default;

  Encoder(const EncoderSpec& spec, const Graph& g, Rng& rng) : spec_(spec) {
    spec_.validate();
    const std::size_t n = g.num_nodes, d = g.feature_dim(), h = spec_.hidden_dim;
    if (spec_.kind == EncoderSpec::Kind::LinkxLite) {
      adj_weight_ = ad::Parameter("enc.adj.W", nn::glorot(n, h, rng));
      adj_bias_ = ad::Parameter("enc.adj.b", Tensor::zeros(1, h));
      feat_layer_ = nn::DenseLayer("enc.feat", d, h, rng);
      combine_ = nn::DenseLayer("enc.combine", 2 * h, h, rng);
      mlp_ = nn::Mlp("enc.f", h, h, h, spec_.num_layers, rng);
    } else {
      mlp_ = nn::Mlp("enc.mlp", d, h, h, spec_.num_layers, rng);
    }
  }

  const EncoderSpec& spec() const { return spec_; }
  std::size_t out_dim() const { return spec_.hidden_dim; }

  Prepared prepare(const Graph& g) const {
    Prepared p;
    p.graph = &g;
    if (spec_.kind == EncoderSpec::Kind::SgcLite) {
      Tensor feats = g.features;
      for (std::size_t hop = 0; hop < spec_.sgc_hops; ++hop)
        feats = row_norm_aggregate(g, feats);
      p.sgc_feats = std::move(feats);
    }
    return p;
  }

  ad::Var<double> encode(const Prepared& prep, const IndexSet& batch) const {
    detail::require(prep.graph != nullptr, "encode: prepare() the graph first");
    if (spec_.kind == EncoderSpec::Kind::SgcLite) {
      auto x = ad::constant(gather_rows(prep.sgc_feats, batch));
      return mlp_.forward(x);
    }
    auto groups = detail::make_batch_groups(*prep.graph, batch);
    auto h_a = ad::add_rowvec(
        ad::indexed_row_sums<double>(groups.offsets, groups.indices, adj_weight_.node),
        adj_bias_.node);
    auto x = ad::constant(gather_rows(prep.graph->features, batch));
    auto h_x = feat_layer_.forward(x);
    auto combined = combine_.forward(ad::concat_cols(h_a, h_x));
    auto pre = ad::relu(ad::add(ad::add(combined, h_a), h_x));
    return mlp_.forward(pre);
  }

  std::vector<ad::Parameter> params() const {
    std::vector<ad::Parameter> out;
    if (spec_.kind == EncoderSpec::Kind::LinkxLite) {
      out.push_back(adj_weight_);
      out.push_back(adj_bias_);
      feat_layer_.collect(out);
      combine_.collect(out);
    }
    mlp_.collect(out);
    return out;
  }

 private:
  EncoderSpec spec_;
  ad::Parameter adj_weight_, adj_bias_;  // LinkxLite sparse first layer
  nn::DenseLayer feat_layer_, combine_;  // LinkxLite
  nn::Mlp mlp_;                          // LinkxLite final MLP / SgcLite whole stack
};

/// Classifier head f_omega: a single affine map hidden -> num_classes.
using ClassifierHead = nn::DenseLayer;

inline ClassifierHead make_classifier(std::size_t hidden, std::size_t num_classes, Rng& rng,
                                      const std::string& id = "head") {
  return ClassifierHead(id, hidden, num_classes, rng);
}

inline ad::Var<double> classify(const ClassifierHead& head, const ad::Var<double>& reps) {
  return head.forward(reps);
}

}  // namespace hei
