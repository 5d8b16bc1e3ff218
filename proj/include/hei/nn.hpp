#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hei/autodiff.hpp"
#include "hei/random.hpp"
#include "hei/tensor.hpp"

namespace hei::nn {

using ad::Parameter;
using ad::Var;

/// Glorot-uniform weight matrix; draw order is row-major and fixed.
inline Tensor glorot(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w(in, out);
  for (auto& x : w.data) x = rng.uniform(-limit, limit);
  return w;
}

struct DenseLayer {
  Parameter weight, bias;

  DenseLayer() = default;
  DenseLayer(const std::string& prefix, std::size_t in, std::size_t out, Rng& rng)
      : weight(prefix + ".W", glorot(in, out, rng)),
        bias(prefix + ".b", Tensor::zeros(1, out)) {}

  Var<double> forward(const Var<double>& x) const {
    return ad::add_rowvec(ad::matmul(x, weight.node), bias.node);
  }

  std::size_t in_dim() const { return weight.value().rows; }
  std::size_t out_dim() const { return weight.value().cols; }

  void collect(std::vector<Parameter>& out) const {
    out.push_back(weight);
    out.push_back(bias);
  }

  std::vector<Parameter> params_vector() const { return {weight, bias}; }
};

/// Plain MLP: num_layers linear layers with ReLU between, none after the last.
/// num_layers == 1 degenerates to a single linear map in -> out.
struct Mlp {
  std::vector<DenseLayer> layers;

  Mlp() = default;
  Mlp(const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
      std::size_t num_layers, Rng& rng) {
    hei::detail::require(num_layers >= 1, "mlp: num_layers must be >= 1");
    for (std::size_t i = 0; i < num_layers; ++i) {
      std::size_t li = (i == 0) ? in : hidden;
      std::size_t lo = (i + 1 == num_layers) ? out : hidden;
      layers.emplace_back(prefix + "." + std::to_string(i), li, lo, rng);
    }
  }

  Var<double> forward(Var<double> x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i].forward(x);
      if (i + 1 < layers.size()) x = ad::relu(x);
    }
    return x;
  }

  void collect(std::vector<Parameter>& out) const {
    for (const auto& l : layers) l.collect(out);
  }

  std::vector<Parameter> params() const {
    std::vector<Parameter> out;
    collect(out);
    return out;
  }
};

/// Copies values between parameter lists with matching shapes and order.
inline void copy_parameter_values(const std::vector<Parameter>& src,
                                  std::vector<Parameter>& dst) {
  hei::detail::require(src.size() == dst.size(), "copy_parameter_values: count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    hei::detail::require(src[i].value().same_shape(dst[i].value()),
                         "copy_parameter_values: shape mismatch");
    dst[i].node->value = src[i].value();
  }
}

}  // namespace hei::nn
