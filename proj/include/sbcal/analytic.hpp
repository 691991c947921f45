#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "rng.hpp"
#include "stats.hpp"

// Closed-form results for the one-parameter Gaussian models:
//   conjugate:     theta ~ N(0, 1), y_i | theta ~ N(theta, 1), i = 1..N
//   normal-normal: theta ~ N(0, 1), y | theta ~ N(theta, sigma)
namespace sbcal::analytic {

struct GaussianLaw {
  double mean = 0.0;
  double sd = 1.0;
};

namespace detail {
inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvalidArgument(std::string("non-finite ") + what);
}
inline void require_sigma(double sigma) {
  require_finite(sigma, "sigma");
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive");
}
}  // namespace detail

inline GaussianLaw conjugate_posterior(std::span<const double> y) {
  if (y.empty()) throw InvalidArgument("conjugate posterior needs at least one observation");
  double sum = 0.0;
  for (double v : y) {
    detail::require_finite(v, "observation");
    sum += v;
  }
  const double n1 = static_cast<double>(y.size()) + 1.0;
  return {sum / n1, 1.0 / std::sqrt(n1)};
}

inline GaussianLaw normal_normal_posterior(double y, double sigma) {
  detail::require_finite(y, "y");
  detail::require_sigma(sigma);
  const double v = 1.0 + sigma * sigma;
  return {y / v, sigma / std::sqrt(v)};
}

/// z-scores of prior draws within exact posteriors are standard normal.
inline GaussianLaw prior_mode_z_law() { return {0.0, 1.0}; }

/// Law of z = (theta^l - mu_post^l) / sigma_post when theta^l is drawn from the
/// posterior given y instead of from the prior.
inline GaussianLaw posterior_mode_z_law(double y, double sigma) {
  detail::require_finite(y, "y");
  detail::require_sigma(sigma);
  const double v = 1.0 + sigma * sigma;
  const double s2 = sigma * sigma;
  return {sigma * y / std::pow(v, 1.5), std::sqrt(s2 * s2 + s2 + 1.0) / v};
}

/// Exact posterior after location-scale recalibration in posterior mode, in the
/// limit of many replications and draws: shift by zbar * sd_post, scale by s_z.
inline GaussianLaw posterior_recalibration_limit(double y, double sigma) {
  const auto post = normal_normal_posterior(y, sigma);
  const auto z = posterior_mode_z_law(y, sigma);
  return {post.mean + z.mean * post.sd, z.sd * post.sd};
}

struct ZDerivationCheck {
  GaussianLaw empirical;
  GaussianLaw analytic;
  double discrepancy = 0.0;  // max |difference| over the two moments
};

/// Simulates the three-step construction (theta^l from the posterior given y,
/// y^l from the likelihood, z^l from the exact posterior given y^l) directly
/// from two independent standard normals per draw.
inline ZDerivationCheck verify_z_derivation(double sigma, double y, std::size_t n_mc, Rng& rng) {
  detail::require_sigma(sigma);
  detail::require_finite(y, "y");
  if (n_mc < 1000) throw InvalidArgument("verify_z_derivation needs n_mc >= 1000");
  const auto post = normal_normal_posterior(y, sigma);
  const double v = 1.0 + sigma * sigma;
  std::vector<double> z(n_mc);
  for (auto& zl : z) {
    const double theta = post.mean + post.sd * rng.normal();
    const double y_rep = theta + sigma * rng.normal();
    zl = (theta - y_rep / v) / post.sd;
  }
  ZDerivationCheck out;
  out.empirical.mean = sbcal::mean(z);
  out.empirical.sd = population_sd(z, out.empirical.mean);
  out.analytic = posterior_mode_z_law(y, sigma);
  out.discrepancy = std::max(std::abs(out.empirical.mean - out.analytic.mean),
                             std::abs(out.empirical.sd - out.analytic.sd));
  return out;
}

}  // namespace sbcal::analytic
