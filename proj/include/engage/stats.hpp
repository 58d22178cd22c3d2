#pragma once

// Small numeric helpers shared by the metrics, cluster and profiles modules.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "engage/error.hpp"

namespace engage::stats {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw DataError("mean of empty sample");
  // Two-pass compensated mean keeps results stable for long columns.
  double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double corr = 0.0;
  for (double x : xs) corr += x - m;
  return m + corr / static_cast<double>(xs.size());
}

/// Standard deviation; `ddof` 0 gives the population form, 1 the sample form.
inline double sd(std::span<const double> xs, int ddof = 0) {
  if (xs.size() <= static_cast<std::size_t>(ddof)) {
    throw DataError("standard deviation needs more than ddof observations");
  }
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - static_cast<std::size_t>(ddof)));
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw DataError("median of empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Kolmogorov survival function Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2).
/// The alternating series is cut off once terms become negligible; when it
/// fails to converge (lambda near 0) the probability is 1.
inline double kolmogorov_q(double lambda) {
  const double a2 = -2.0 * lambda * lambda;
  double fac = 2.0;
  double sum = 0.0;
  double prev = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = fac * std::exp(a2 * j * j);
    sum += term;
    if (std::fabs(term) <= 1e-3 * prev || std::fabs(term) <= 1e-8 * sum) {
      return std::clamp(sum, 0.0, 1.0);
    }
    fac = -fac;
    prev = std::fabs(term);
  }
  return 1.0;
}

/// Average ranks (1-based), ties receive the mean of the positions they span.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return xs[l] < xs[r]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && xs[order[j]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = avg;
    i = j;
  }
  return ranks;
}

}  // namespace engage::stats
