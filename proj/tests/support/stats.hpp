#pragma once

// Independent statistical oracles used by the metrics and estimator tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace hetcal::testing {

// Standard-normal CDF via the all-positive-terms series
//   Phi(x) = 1/2 + phi(x) * sum_{n>=0} x^(2n+1) / (2n+1)!!
// evaluated in long double; accurate to ~1e-17 for |x| <= 12.
inline double normal_cdf_series(double x) {
  const long double lx = x;
  long double term = lx;
  long double sum = lx;
  for (int n = 1; n < 2000; ++n) {
    term *= lx * lx / static_cast<long double>(2 * n + 1);
    sum += term;
    if (std::abs(static_cast<double>(term)) < 1e-22 * std::abs(static_cast<double>(sum))) break;
  }
  const long double phi = std::exp(-lx * lx / 2.0L) / std::sqrt(2.0L * 3.14159265358979323846L);
  return static_cast<double>(0.5L + phi * sum);
}

// Inverts the series CDF by bisection; ~1e-13 absolute.
inline double inverse_normal_bisect(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("p outside (0,1)");
  double lo = -12.0, hi = 12.0;
  for (int i = 0; i < 120; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf_series(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Golden-section minimizer for a unimodal function on [lo, hi].
inline double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                                 int iters = 200) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const std::vector<double> ra = average_ranks(a), rb = average_ranks(b);
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

// Empirical tau-quantile of a sample: the ceil(tau*n)-th order statistic.
inline double empirical_quantile(std::vector<double> v, double tau) {
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::ceil(tau * static_cast<double>(v.size())));
  return v[std::max<std::size_t>(k, 1) - 1];
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double percentile(std::vector<double> v, double pct) {
  return empirical_quantile(std::move(v), pct / 100.0);
}

}  // namespace hetcal::testing
