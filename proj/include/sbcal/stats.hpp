#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace sbcal {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw InvalidArgument("mean of empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Population convention: divides by n.
inline double population_sd(std::span<const double> xs, double m) {
  if (xs.empty()) throw InvalidArgument("sd of empty sample");
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

inline double population_sd(std::span<const double> xs) { return population_sd(xs, mean(xs)); }

/// Order-statistic quantile with linear interpolation between neighbours.
/// `sorted` must be ascending.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of empty sample");
  if (sorted.size() == 1) return sorted.front();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::span<const double> xs, double p) {
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted(sorted, p);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace sbcal
