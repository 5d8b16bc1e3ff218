#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "hei/autodiff.hpp"
#include "hei/optim.hpp"
#include "hei/random.hpp"
#include "hei/tensor.hpp"

using Catch::Approx;
using hei::Tensor;
namespace ad = hei::ad;

namespace {

Tensor make(std::size_t r, std::size_t c, std::vector<double> v) {
  Tensor t = Tensor::zeros(r, c);
  REQUIRE(v.size() == r * c);
  t.data = std::move(v);
  return t;
}

}  // namespace

TEST_CASE("tensor constructors and indexing", "[tensor]") {
  Tensor z = Tensor::zeros(2, 3);
  REQUIRE(z.rows == 2);
  REQUIRE(z.cols == 3);
  for (double x : z.data) REQUIRE(x == 0.0);

  Tensor f = Tensor::full(2, 2, 1.5);
  REQUIRE(f(1, 1) == 1.5);

  Tensor id = Tensor::identity(3);
  REQUIRE(id(0, 0) == 1.0);
  REQUIRE(id(0, 1) == 0.0);
  REQUIRE(id(2, 2) == 1.0);

  f(0, 1) = -2.0;
  REQUIRE(f.row(0)[1] == -2.0);
  REQUIRE(f.all_finite());
  f(0, 0) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_FALSE(f.all_finite());
}

TEST_CASE("matmul matches hand-computed product", "[tensor]") {
  Tensor a = make(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor b = make(3, 2, {7, 8, 9, 10, 11, 12});
  Tensor c = hei::matmul(a, b);
  REQUIRE(c.rows == 2);
  REQUIRE(c.cols == 2);
  REQUIRE(c(0, 0) == Approx(58.0));
  REQUIRE(c(0, 1) == Approx(64.0));
  REQUIRE(c(1, 0) == Approx(139.0));
  REQUIRE(c(1, 1) == Approx(154.0));

  Tensor atb = hei::matmul_at_b(a, c);          // (3x2)
  Tensor ref1 = hei::matmul(hei::transpose(a), c);
  for (std::size_t i = 0; i < atb.size(); ++i) REQUIRE(atb.data[i] == Approx(ref1.data[i]));

  Tensor abt = hei::matmul_a_bt(a, hei::transpose(b));  // a * b again
  for (std::size_t i = 0; i < abt.size(); ++i) REQUIRE(abt.data[i] == Approx(c.data[i]));

  REQUIRE_THROWS_AS(hei::matmul(a, a), std::invalid_argument);
}

TEST_CASE("autodiff elementwise ops forward values", "[autodiff]") {
  auto a = ad::leaf(make(1, 3, {1, -2, 3}));
  auto b = ad::leaf(make(1, 3, {4, 5, -6}));

  auto s = ad::add(a, b);
  REQUIRE(s->value(0, 1) == Approx(3.0));
  auto d = ad::sub(a, b);
  REQUIRE(d->value(0, 2) == Approx(9.0));
  auto m = ad::mul(a, b);
  REQUIRE(m->value(0, 0) == Approx(4.0));
  auto r = ad::relu(a);
  REQUIRE(r->value(0, 1) == 0.0);
  REQUIRE(r->value(0, 2) == Approx(3.0));
  auto sc = ad::scale(a, -2.0);
  REQUIRE(sc->value(0, 0) == Approx(-2.0));

  auto cat = ad::concat_cols(a, b);
  REQUIRE(cat->value.cols == 6);
  REQUIRE(cat->value(0, 4) == Approx(5.0));

  auto col = ad::slice_col(cat, 5);
  REQUIRE(col->value.rows == 1);
  REQUIRE(col->value.cols == 1);
  REQUIRE(col->value(0, 0) == Approx(-6.0));

  auto x = ad::leaf(make(2, 2, {1, 2, 3, 4}));
  auto bias = ad::leaf(make(1, 2, {10, 20}));
  auto shifted = ad::add_rowvec(x, bias);
  REQUIRE(shifted->value(1, 0) == Approx(13.0));
  REQUIRE(shifted->value(0, 1) == Approx(22.0));

  auto total = ad::sum_all(shifted);
  REQUIRE(total->value(0, 0) == Approx(1 + 2 + 3 + 4 + 30 + 30));
}

TEST_CASE("softmax rows sum to one and match closed form", "[autodiff]") {
  auto x = ad::leaf(make(2, 3, {0, 0, 0, 1, 2, 3}));
  auto p = ad::softmax_rows(x);
  for (std::size_t i = 0; i < 2; ++i) {
    double row_sum = 0;
    for (std::size_t j = 0; j < 3; ++j) row_sum += p->value(i, j);
    REQUIRE(row_sum == Approx(1.0).epsilon(0).margin(1e-12));
  }
  REQUIRE(p->value(0, 0) == Approx(1.0 / 3.0));
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  REQUIRE(p->value(1, 2) == Approx(std::exp(3.0) / z));

  // Shift invariance: softmax(x + c) == softmax(x), even for large offsets.
  auto shifted = ad::softmax_rows(ad::leaf(make(1, 3, {1001, 1002, 1003})));
  REQUIRE(shifted->value(0, 2) == Approx(p->value(1, 2)));
}

TEST_CASE("weighted cross-entropy forward fixture", "[autodiff]") {
  auto logits = ad::leaf(Tensor::zeros(2, 2));
  std::vector<std::int32_t> labels{0, 1};
  auto w = ad::constant(Tensor::full(2, 1, 1.0));
  auto loss = ad::weighted_ce(logits, std::span<const std::int32_t>(labels), w, 2.0);
  REQUIRE(loss->value(0, 0) == Approx(std::log(2.0)));

  // Zero weight on one node halves the sum.
  auto w2 = ad::constant(make(2, 1, {1, 0}));
  auto loss2 = ad::weighted_ce(logits, std::span<const std::int32_t>(labels), w2, 2.0);
  REQUIRE(loss2->value(0, 0) == Approx(std::log(2.0) / 2.0));

  std::vector<std::int32_t> bad{0, 2};
  REQUIRE_THROWS_AS(ad::weighted_ce(logits, std::span<const std::int32_t>(bad), w, 2.0),
                    std::invalid_argument);
}

TEST_CASE("indexed row sums forward fixture", "[autodiff]") {
  // Groups: {0,2}, {}, {1}.
  auto offsets = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{0, 2, 2, 3});
  auto indices = std::make_shared<std::vector<std::int32_t>>(std::vector<std::int32_t>{0, 2, 1});
  auto w = ad::leaf(make(3, 2, {1, 2, 10, 20, 100, 200}));
  auto out = ad::indexed_row_sums(offsets, indices, w);
  REQUIRE(out->value.rows == 3);
  REQUIRE(out->value(0, 0) == Approx(101.0));
  REQUIRE(out->value(0, 1) == Approx(202.0));
  REQUIRE(out->value(1, 0) == 0.0);
  REQUIRE(out->value(2, 1) == Approx(20.0));
}

TEST_CASE("quadratic gradient is exact", "[autodiff]") {
  ad::Parameter w("w", make(1, 3, {0.5, -1.25, 2.0}));
  auto loss = ad::sum_all(ad::mul(w.node, w.node));
  ad::backward(loss);
  for (std::size_t j = 0; j < 3; ++j)
    REQUIRE(w.grad()(0, j) == Approx(2.0 * w.value()(0, j)).epsilon(0).margin(1e-14));
}

TEST_CASE("finite differences agree with backprop across all ops", "[autodiff]") {
  hei::Rng rng(7);
  auto rand_tensor = [&](std::size_t r, std::size_t c) {
    Tensor t = Tensor::zeros(r, c);
    for (auto& x : t.data) x = rng.uniform(-1.0, 1.0);
    return t;
  };

  std::vector<ad::Parameter> params;
  params.emplace_back("W1", rand_tensor(3, 4));
  params.emplace_back("b1", rand_tensor(1, 4));
  params.emplace_back("W2", rand_tensor(8, 3));
  params.emplace_back("wts", Tensor::full(5, 1, 0.4));

  Tensor x = rand_tensor(5, 3);
  std::vector<std::int32_t> labels{0, 1, 2, 0, 1};
  auto offsets = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{0, 2, 3, 5, 5, 6});
  auto indices = std::make_shared<std::vector<std::int32_t>>(std::vector<std::int32_t>{0, 1, 2, 3, 4, 0});

  auto make_loss = [&]() {
    auto h = ad::add_rowvec(ad::matmul(ad::constant(x), params[0].node), params[1].node);
    // Keep activations away from the ReLU kink so finite differences stay clean.
    auto a = ad::relu(ad::add(h, ad::constant(Tensor::full(5, 4, 0.05))));
    auto agg = ad::indexed_row_sums(offsets, indices, a);
    auto cat = ad::concat_cols(a, agg);
    auto logits = ad::matmul(cat, params[2].node);
    auto p = ad::softmax_rows(logits);
    auto wcol = ad::mul(ad::slice_col(p, 0), ad::slice_col(p, 0));
    auto ce = ad::weighted_ce(logits, std::span<const std::int32_t>(labels), params[3].node, 5.0);
    std::vector<ad::Var<double>> pieces{ce, ad::sum_all(wcol), ad::sum_all(ad::sub(ce, ce))};
    auto var = ad::variance_pop(pieces);
    return ad::add(ad::scale(ce, 1.5), ad::add(var, ad::sum_all(ad::scale(wcol, 0.25))));
  };

  double rel = ad::grad_check(std::function<ad::Var<double>()>(make_loss),
                              std::span<ad::Parameter>(params));
  REQUIRE(rel < 1e-6);
}

TEST_CASE("population variance of scalar nodes", "[autodiff]") {
  std::vector<ad::Var<double>> xs{ad::leaf(Tensor::full(1, 1, 0.5)),
                                  ad::leaf(Tensor::full(1, 1, 1.5))};
  auto v = ad::variance_pop(xs);
  REQUIRE(v->value(0, 0) == Approx(0.25));

  auto s = ad::sum_scalars(xs);
  REQUIRE(s->value(0, 0) == Approx(2.0));
}

TEST_CASE("backward rejects non-scalar and non-finite losses", "[autodiff]") {
  auto mat = ad::leaf(Tensor::zeros(2, 2));
  REQUIRE_THROWS_AS(ad::backward(mat), std::invalid_argument);

  auto bad = ad::leaf(Tensor::full(1, 1, std::numeric_limits<double>::quiet_NaN()));
  REQUIRE_THROWS_AS(ad::backward(bad), std::runtime_error);
}

TEST_CASE("adam drives a quadratic toward zero", "[autodiff]") {
  std::vector<ad::Parameter> params;
  params.emplace_back("w", Tensor::full(1, 1, 1.0));
  hei::AdamConfig cfg;
  cfg.lr = 1e-2;
  hei::Adam opt(cfg);

  double prev = 1.0;
  for (int step = 0; step < 100; ++step) {
    ad::zero_grads(std::span<ad::Parameter>(params));
    auto loss = ad::mul(params[0].node, params[0].node);
    ad::backward(loss);
    opt.step(std::span<ad::Parameter>(params));
    double cur = std::abs(params[0].value()(0, 0));
    REQUIRE(cur < prev);
    prev = cur;
  }
  REQUIRE(prev < 0.5);
}

TEST_CASE("adam state survives graph rebuilds and rejects bad gradients", "[autodiff]") {
  // Two parameter lists sharing ids: momentum built on the first keeps acting
  // on the second, which is how per-epoch graph rebuilds behave in training.
  std::vector<ad::Parameter> params;
  params.emplace_back("w", Tensor::full(1, 1, 2.0));
  hei::Adam opt({1e-2, 0.9, 0.999, 1e-8, 0.0});
  for (int step = 0; step < 3; ++step) {
    ad::zero_grads(std::span<ad::Parameter>(params));
    auto loss = ad::mul(params[0].node, params[0].node);
    ad::backward(loss);
    opt.step(std::span<ad::Parameter>(params));
  }

  params[0].grad()(0, 0) = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(opt.step(std::span<ad::Parameter>(params)), std::runtime_error);
}

TEST_CASE("decoupled weight decay shrinks weights without touching gradients", "[autodiff]") {
  std::vector<ad::Parameter> params;
  params.emplace_back("w", Tensor::full(1, 1, 1.0));
  hei::Adam opt({1e-2, 0.9, 0.999, 1e-8, 0.1});
  ad::zero_grads(std::span<ad::Parameter>(params));
  auto loss = ad::scale(params[0].node, 0.0);  // zero gradient
  ad::backward(loss);
  opt.step(std::span<ad::Parameter>(params));
  // Pure decay step: w -= lr * wd * w.
  REQUIRE(params[0].value()(0, 0) == Approx(1.0 - 1e-2 * 0.1 * 1.0));
}

TEST_CASE("rng streams are deterministic and derive produces independent streams", "[autodiff]") {
  hei::Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());

  hei::Rng base(42);
  auto d1 = base.derive(1);
  auto d2 = base.derive(2);
  REQUIRE(d1.uniform() != d2.uniform());

  hei::Rng g(3);
  for (int i = 0; i < 1000; ++i) {
    double u = g.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    double bta = g.beta(5.0, 2.0);
    REQUIRE(bta >= 0.0);
    REQUIRE(bta <= 1.0);
  }
  REQUIRE_FALSE(g.bernoulli(0.0));
  REQUIRE(g.bernoulli(1.0));
}
