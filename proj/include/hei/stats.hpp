#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

namespace hei::stats {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean: empty input");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Sample standard deviation (n-1 denominator); 0 for a single value.
inline double sample_std(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("sample_std: empty input");
  if (xs.size() == 1) return 0.0;
  double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

/// Population variance (n denominator), matching the variance term of the
/// risk-extrapolation objective.
inline double population_variance(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("population_variance: empty input");
  double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size());
}

// Linear-interpolation quantile on a copy of the data.
inline double quantile(std::span<const double> xs, double q) {
  if (xs.empty()) throw std::invalid_argument("quantile: empty input");
  std::vector<double> s(xs.begin(), xs.end());
  std::sort(s.begin(), s.end());
  if (q <= 0.0) return s.front();
  if (q >= 1.0) return s.back();
  double pos = q * static_cast<double>(s.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= s.size()) return s.back();
  return s[lo] * (1.0 - frac) + s[lo + 1] * frac;
}

inline double median(std::span<const double> xs) { return quantile(xs, 0.5); }

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: size mismatch");
  if (xs.size() < 2) throw std::invalid_argument("pearson: need at least 2 points");
  double mx = mean(xs), my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Ranks with ties assigned the average rank.
inline std::vector<double> ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> r(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman(std::span<const double> xs, std::span<const double> ys) {
  auto rx = ranks(xs);
  auto ry = ranks(ys);
  return pearson(rx, ry);
}

struct PairedTTest {
  double t_stat = 0.0;
  double p_one_sided = 1.0;  // P(mean diff <= 0), small when a > b
  double mean_diff = 0.0;
};

/// One-sided paired t-test for mean(a) > mean(b).
inline PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: size mismatch");
  std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double md = mean(d);
  double sd = sample_std(d);
  PairedTTest out;
  out.mean_diff = md;
  if (sd == 0.0) {
    out.t_stat = md > 0 ? std::numeric_limits<double>::infinity()
                        : (md < 0 ? -std::numeric_limits<double>::infinity() : 0.0);
    out.p_one_sided = md > 0 ? 0.0 : 1.0;
    return out;
  }
  out.t_stat = md / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(n - 1));
  out.p_one_sided = boost::math::cdf(boost::math::complement(dist, out.t_stat));
  return out;
}

}  // namespace hei::stats
