#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "hei/autodiff.hpp"
#include "hei/tensor.hpp"

namespace hei {

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: applied to the value, not the gradient
};

/// Adam keyed by parameter id so the same optimizer can survive graph rebuilds.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }

  void step(std::span<ad::Parameter> params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& p : params) {
      auto& value = p.value();
      auto& grad = p.node->grad;
      if (!grad.same_shape(value)) p.node->zero_grad();
      auto& slot = slots_[p.id];
      if (!slot.m.same_shape(value)) {
        slot.m = Tensor::zeros(value.rows, value.cols);
        slot.v = Tensor::zeros(value.rows, value.cols);
      }
      for (std::size_t i = 0; i < value.size(); ++i) {
        double g = grad.data[i];
        if (!std::isfinite(g)) throw std::runtime_error("adam: non-finite gradient");
        slot.m.data[i] = cfg_.beta1 * slot.m.data[i] + (1.0 - cfg_.beta1) * g;
        slot.v.data[i] = cfg_.beta2 * slot.v.data[i] + (1.0 - cfg_.beta2) * g * g;
        double mhat = slot.m.data[i] / bc1;
        double vhat = slot.v.data[i] / bc2;
        value.data[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                    cfg_.weight_decay * value.data[i]);
      }
    }
  }

  void reset() {
    t_ = 0;
    slots_.clear();
  }

 private:
  struct Slot {
    Tensor m, v;
  };
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::unordered_map<std::string, Slot> slots_;
};

}  // namespace hei
