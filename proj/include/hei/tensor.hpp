#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hei {

/// Dense row-major matrix. Scalar is double by default; float is available
/// as a reduced-precision mode.
template <typename S>
struct BasicTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<S> data;

  BasicTensor() = default;
  BasicTensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, S{0}) {}
  BasicTensor(std::size_t r, std::size_t c, std::vector<S> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols) throw std::invalid_argument("tensor: data length != rows*cols");
  }

  static BasicTensor zeros(std::size_t r, std::size_t c) { return BasicTensor(r, c); }
  static BasicTensor full(std::size_t r, std::size_t c, S v) {
    BasicTensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static BasicTensor identity(std::size_t n) {
    BasicTensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = S{1};
    return t;
  }

  S& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  S operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<S> row(std::size_t r) { return std::span<S>(data.data() + r * cols, cols); }
  std::span<const S> row(std::size_t r) const {
    return std::span<const S>(data.data() + r * cols, cols);
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const BasicTensor& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

using Tensor = BasicTensor<double>;

namespace detail {
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}
}  // namespace detail

// C = A * B with a cache-friendly ikj loop; fixed iteration order keeps
// results deterministic.
template <typename S>
BasicTensor<S> matmul(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  detail::require(a.cols == b.rows, "matmul: inner dimensions differ");
  BasicTensor<S> c(a.rows, b.cols);
  const std::size_t n = a.rows, k = a.cols, m = b.cols;
  for (std::size_t i = 0; i < n; ++i) {
    const S* arow = a.data.data() + i * k;
    S* crow = c.data.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      S av = arow[p];
      if (av == S{0}) continue;
      const S* brow = b.data.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// C = A^T * B without materializing the transpose.
template <typename S>
BasicTensor<S> matmul_at_b(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  detail::require(a.rows == b.rows, "matmul_at_b: row counts differ");
  BasicTensor<S> c(a.cols, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const S* arow = a.data.data() + i * a.cols;
    const S* brow = b.data.data() + i * b.cols;
    for (std::size_t p = 0; p < a.cols; ++p) {
      S av = arow[p];
      if (av == S{0}) continue;
      S* crow = c.data.data() + p * c.cols;
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// C = A * B^T.
template <typename S>
BasicTensor<S> matmul_a_bt(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  detail::require(a.cols == b.cols, "matmul_a_bt: col counts differ");
  BasicTensor<S> c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const S* arow = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const S* brow = b.data.data() + j * b.cols;
      S acc{0};
      for (std::size_t p = 0; p < a.cols; ++p) acc += arow[p] * brow[p];
      c(i, j) = acc;
    }
  }
  return c;
}

template <typename S>
BasicTensor<S> transpose(const BasicTensor<S>& a) {
  BasicTensor<S> t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

template <typename S, typename F>
BasicTensor<S> map(const BasicTensor<S>& a, F f) {
  BasicTensor<S> out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i]);
  return out;
}

}  // namespace hei
