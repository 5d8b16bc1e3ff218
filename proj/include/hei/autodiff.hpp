#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "hei/tensor.hpp"

namespace hei::ad {

#ifndef NDEBUG
inline constexpr bool kCheckFinite = true;
#else
inline constexpr bool kCheckFinite = false;
#endif

template <typename S>
struct Node {
  BasicTensor<S> value;
  BasicTensor<S> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.rows != value.rows || grad.cols != value.cols)
      grad = BasicTensor<S>::zeros(value.rows, value.cols);
  }
  void zero_grad() {
    grad = BasicTensor<S>::zeros(value.rows, value.cols);
  }
};

template <typename S>
using Var = std::shared_ptr<Node<S>>;

template <typename S>
Var<S> constant(BasicTensor<S> v) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(v);
  return n;
}

template <typename S>
Var<S> leaf(BasicTensor<S> v) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(v);
  n->requires_grad = true;
  n->zero_grad();
  return n;
}

namespace detail {

template <typename S>
Var<S> make_op(BasicTensor<S> value, std::vector<Var<S>> parents,
               std::function<void(Node<S>&)> backprop) {
  if constexpr (kCheckFinite) {
    if (!value.all_finite()) throw std::runtime_error("autodiff: non-finite value produced");
  }
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

}  // namespace detail

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  auto value = hei::matmul(a->value, b->value);
  return detail::make_op<S>(std::move(value), {a, b}, [a, b](Node<S>& n) {
    if (a->requires_grad) {
      auto da = matmul_a_bt(n.grad, b->value);
      a->ensure_grad();
      for (std::size_t i = 0; i < da.size(); ++i) a->grad.data[i] += da.data[i];
    }
    if (b->requires_grad) {
      auto db = matmul_at_b(a->value, n.grad);
      b->ensure_grad();
      for (std::size_t i = 0; i < db.size(); ++i) b->grad.data[i] += db.data[i];
    }
  });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  hei::detail::require(a->value.same_shape(b->value), "add: shape mismatch");
  auto value = a->value;
  for (std::size_t i = 0; i < value.size(); ++i) value.data[i] += b->value.data[i];
  return detail::make_op<S>(std::move(value), {a, b}, [a, b](Node<S>& n) {
    for (auto& p : {a, b}) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad.data[i] += n.grad.data[i];
    }
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  hei::detail::require(a->value.same_shape(b->value), "sub: shape mismatch");
  auto value = a->value;
  for (std::size_t i = 0; i < value.size(); ++i) value.data[i] -= b->value.data[i];
  return detail::make_op<S>(std::move(value), {a, b}, [a, b](Node<S>& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad.data[i] += n.grad.data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) b->grad.data[i] -= n.grad.data[i];
    }
  });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  hei::detail::require(a->value.same_shape(b->value), "mul: shape mismatch");
  auto value = a->value;
  for (std::size_t i = 0; i < value.size(); ++i) value.data[i] *= b->value.data[i];
  return detail::make_op<S>(std::move(value), {a, b}, [a, b](Node<S>& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        a->grad.data[i] += n.grad.data[i] * b->value.data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        b->grad.data[i] += n.grad.data[i] * a->value.data[i];
    }
  });
}

template <typename S>
Var<S> scale(Var<S> a, S s) {
  auto value = a->value;
  for (auto& v : value.data) v *= s;
  return detail::make_op<S>(std::move(value), {a}, [a, s](Node<S>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad.data[i] += s * n.grad.data[i];
  });
}

// Broadcast a 1xO row vector over every row of x.
template <typename S>
Var<S> add_rowvec(Var<S> x, Var<S> b) {
  hei::detail::require(b->value.rows == 1 && b->value.cols == x->value.cols,
                       "add_rowvec: bias must be 1 x cols(x)");
  auto value = x->value;
  for (std::size_t i = 0; i < value.rows; ++i)
    for (std::size_t j = 0; j < value.cols; ++j) value(i, j) += b->value(0, j);
  return detail::make_op<S>(std::move(value), {x, b}, [x, b](Node<S>& n) {
    if (x->requires_grad) {
      x->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) x->grad.data[i] += n.grad.data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.grad.rows; ++i)
        for (std::size_t j = 0; j < n.grad.cols; ++j) b->grad(0, j) += n.grad(i, j);
    }
  });
}

template <typename S>
Var<S> relu(Var<S> a) {
  auto value = a->value;
  for (auto& v : value.data)
    if (v < S{0}) v = S{0};
  return detail::make_op<S>(std::move(value), {a}, [a](Node<S>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (a->value.data[i] > S{0}) a->grad.data[i] += n.grad.data[i];
  });
}

template <typename S>
Var<S> concat_cols(Var<S> a, Var<S> b) {
  hei::detail::require(a->value.rows == b->value.rows, "concat_cols: row counts differ");
  BasicTensor<S> value(a->value.rows, a->value.cols + b->value.cols);
  for (std::size_t i = 0; i < value.rows; ++i) {
    auto ra = a->value.row(i);
    auto rb = b->value.row(i);
    std::copy(ra.begin(), ra.end(), value.row(i).begin());
    std::copy(rb.begin(), rb.end(), value.row(i).begin() + a->value.cols);
  }
  std::size_t ca = a->value.cols;
  return detail::make_op<S>(std::move(value), {a, b}, [a, b, ca](Node<S>& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.grad.rows; ++i)
        for (std::size_t j = 0; j < ca; ++j) a->grad(i, j) += n.grad(i, j);
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.grad.rows; ++i)
        for (std::size_t j = 0; j < n.grad.cols - ca; ++j) b->grad(i, j) += n.grad(i, j + ca);
    }
  });
}

// Column j of a, as a rows x 1 tensor.
template <typename S>
Var<S> slice_col(Var<S> a, std::size_t j) {
  hei::detail::require(j < a->value.cols, "slice_col: column out of range");
  BasicTensor<S> value(a->value.rows, 1);
  for (std::size_t i = 0; i < value.rows; ++i) value(i, 0) = a->value(i, j);
  return detail::make_op<S>(std::move(value), {a}, [a, j](Node<S>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.grad.rows; ++i) a->grad(i, j) += n.grad(i, 0);
  });
}

// Row-wise softmax with max subtraction.
template <typename S>
Var<S> softmax_rows(Var<S> a) {
  auto value = a->value;
  for (std::size_t i = 0; i < value.rows; ++i) {
    auto row = value.row(i);
    S mx = *std::max_element(row.begin(), row.end());
    S sum{0};
    for (auto& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (auto& v : row) v /= sum;
  }
  return detail::make_op<S>(std::move(value), {a}, [a](Node<S>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.value.rows; ++i) {
      S dot{0};
      for (std::size_t j = 0; j < n.value.cols; ++j) dot += n.grad(i, j) * n.value(i, j);
      for (std::size_t j = 0; j < n.value.cols; ++j)
        a->grad(i, j) += n.value(i, j) * (n.grad(i, j) - dot);
    }
  });
}

// Sum of all entries, as a 1x1 tensor.
template <typename S>
Var<S> sum_all(Var<S> a) {
  S total{0};
  for (S v : a->value.data) total += v;
  BasicTensor<S> value(1, 1);
  value(0, 0) = total;
  return detail::make_op<S>(std::move(value), {a}, [a](Node<S>& n) {
    a->ensure_grad();
    S g = n.grad(0, 0);
    for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad.data[i] += g;
  });
}

/// Weighted cross-entropy: (1/denom) * sum_i weights[i] * CE(logits_i, labels[i]).
/// Gradients flow into both the logits and the weights when required.
template <typename S>
Var<S> weighted_ce(Var<S> logits, std::span<const std::int32_t> labels, Var<S> weights,
                   double denom) {
  const auto& lv = logits->value;
  hei::detail::require(labels.size() == lv.rows, "weighted_ce: label count != batch size");
  hei::detail::require(weights->value.rows == lv.rows && weights->value.cols == 1,
                       "weighted_ce: weights must be batch x 1");
  hei::detail::require(denom > 0, "weighted_ce: denom must be positive");
  const std::size_t b = lv.rows, c = lv.cols;
  for (std::size_t i = 0; i < b; ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
      throw std::invalid_argument("weighted_ce: label out of range");

  // Per-row CE via stable log-sum-exp; keep softmax rows for the backward pass.
  auto probs = std::make_shared<BasicTensor<S>>(b, c);
  auto ce = std::make_shared<std::vector<S>>(b);
  S total{0};
  for (std::size_t i = 0; i < b; ++i) {
    auto row = lv.row(i);
    S mx = *std::max_element(row.begin(), row.end());
    S sum{0};
    for (std::size_t j = 0; j < c; ++j) {
      S e = std::exp(row[j] - mx);
      (*probs)(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < c; ++j) (*probs)(i, j) /= sum;
    S lse = mx + std::log(sum);
    (*ce)[i] = lse - row[labels[i]];
    total += weights->value(i, 0) * (*ce)[i];
  }
  BasicTensor<S> value(1, 1);
  value(0, 0) = total / static_cast<S>(denom);

  std::vector<std::int32_t> labels_copy(labels.begin(), labels.end());
  return detail::make_op<S>(
      std::move(value), {logits, weights},
      [logits, weights, probs, ce, labels_copy, denom](Node<S>& n) {
        S g = n.grad(0, 0) / static_cast<S>(denom);
        const std::size_t b = probs->rows, c = probs->cols;
        if (logits->requires_grad) {
          logits->ensure_grad();
          for (std::size_t i = 0; i < b; ++i) {
            S w = weights->value(i, 0);
            for (std::size_t j = 0; j < c; ++j) {
              S p = (*probs)(i, j);
              S onehot = (static_cast<std::int32_t>(j) == labels_copy[i]) ? S{1} : S{0};
              logits->grad(i, j) += g * w * (p - onehot);
            }
          }
        }
        if (weights->requires_grad) {
          weights->ensure_grad();
          for (std::size_t i = 0; i < b; ++i) weights->grad(i, 0) += g * (*ce)[i];
        }
      });
}

/// out[i,:] = sum of rows w[u,:] over u in the i-th index group. Groups are a
/// CSR-style (offsets, indices) pair; this is the sparse first layer used for
/// adjacency-row inputs, exact against a dense 0/1 row matmul.
template <typename S>
Var<S> indexed_row_sums(std::shared_ptr<const std::vector<std::int64_t>> offsets,
                        std::shared_ptr<const std::vector<std::int32_t>> indices, Var<S> w) {
  const std::size_t groups = offsets->size() - 1;
  BasicTensor<S> value(groups, w->value.cols);
  for (std::size_t i = 0; i < groups; ++i) {
    auto out = value.row(i);
    for (std::int64_t e = (*offsets)[i]; e < (*offsets)[i + 1]; ++e) {
      auto src = w->value.row(static_cast<std::size_t>((*indices)[e]));
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += src[j];
    }
  }
  return detail::make_op<S>(std::move(value), {w}, [offsets, indices, w](Node<S>& n) {
    w->ensure_grad();
    const std::size_t groups = offsets->size() - 1;
    for (std::size_t i = 0; i < groups; ++i) {
      auto gr = n.grad.row(i);
      for (std::int64_t e = (*offsets)[i]; e < (*offsets)[i + 1]; ++e) {
        auto dst = w->grad.row(static_cast<std::size_t>((*indices)[e]));
        for (std::size_t j = 0; j < gr.size(); ++j) dst[j] += gr[j];
      }
    }
  });
}

template <typename S>
Var<S> sum_scalars(const std::vector<Var<S>>& xs) {
  hei::detail::require(!xs.empty(), "sum_scalars: empty input");
  Var<S> acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

/// Population variance of 1x1 scalars, built from differentiable primitives.
/// The mean is computed shifted by xs[0] so that identical inputs give a
/// variance of exactly zero at any count.
template <typename S>
Var<S> variance_pop(const std::vector<Var<S>>& xs) {
  hei::detail::require(!xs.empty(), "variance_pop: empty input");
  const S inv_n = S{1} / static_cast<S>(xs.size());
  std::vector<Var<S>> shifted;
  shifted.reserve(xs.size());
  for (const auto& x : xs) shifted.push_back(sub(x, xs[0]));
  Var<S> m = add(xs[0], scale(sum_scalars(shifted), inv_n));
  std::vector<Var<S>> sq;
  sq.reserve(xs.size());
  for (const auto& x : xs) {
    auto d = sub(x, m);
    sq.push_back(mul(d, d));
  }
  return scale(sum_scalars(sq), inv_n);
}

/// Reverse pass from a scalar loss. Accumulates into the grads of every
/// reachable node with requires_grad; leaf grads must be zeroed by the caller
/// at step start.
template <typename S>
void backward(const Var<S>& loss) {
  hei::detail::require(loss->value.rows == 1 && loss->value.cols == 1,
                       "backward: loss must be a 1x1 scalar");
  if (!std::isfinite(static_cast<double>(loss->value(0, 0))))
    throw std::runtime_error("backward: non-finite loss");
  if (!loss->requires_grad) return;

  // Iterative post-order topological sort over requires_grad nodes.
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> visited;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<S>* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<S>* n : order)
    if (!n->parents.empty()) n->zero_grad();
  loss->ensure_grad();
  loss->grad(0, 0) = S{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backprop) n->backprop(*n);
  }
  if constexpr (kCheckFinite) {
    for (Node<S>* n : order)
      if (!n->grad.all_finite()) throw std::runtime_error("backward: non-finite gradient");
  }
}

/// Trainable tensor with a stable identifier.
template <typename S>
struct BasicParameter {
  std::string id;
  Var<S> node;

  BasicParameter() = default;
  BasicParameter(std::string name, BasicTensor<S> init)
      : id(std::move(name)), node(leaf(std::move(init))) {}

  BasicTensor<S>& value() { return node->value; }
  const BasicTensor<S>& value() const { return node->value; }
  BasicTensor<S>& grad() { return node->grad; }
};

using Parameter = BasicParameter<double>;

template <typename S>
void zero_grads(std::span<BasicParameter<S>> params) {
  for (auto& p : params) p.node->zero_grad();
}

/// Max relative error between reverse-mode gradients and central finite
/// differences, with an absolute floor of 1 in the denominator.
template <typename S>
double grad_check(const std::function<Var<S>()>& make_loss,
                  std::span<BasicParameter<S>> params, double eps = 1e-5) {
  for (auto& p : params) p.node->zero_grad();
  auto loss = make_loss();
  backward(loss);

  double max_rel = 0.0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value().size(); ++i) {
      S saved = p.value().data[i];
      p.value().data[i] = saved + static_cast<S>(eps);
      double lp = static_cast<double>(make_loss()->value(0, 0));
      p.value().data[i] = saved - static_cast<S>(eps);
      double lm = static_cast<double>(make_loss()->value(0, 0));
      p.value().data[i] = saved;
      double fd = (lp - lm) / (2.0 * eps);
      double g = static_cast<double>(p.node->grad.data[i]);
      double rel = std::abs(g - fd) / std::max({1.0, std::abs(g), std::abs(fd)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace hei::ad
