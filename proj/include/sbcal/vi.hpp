#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "model.hpp"
#include "rng.hpp"

namespace sbcal {

struct MeanFieldViSettings {
  std::size_t iterations = 2000;
  std::size_t mc_gradient_samples = 10;
  double base_step_size = 1.0;
  // Each nonfinite ELBO estimate halves the step size and restarts the optimization.
  std::size_t max_restarts = 5;

  void validate() const {
    if (iterations == 0) throw InvalidArgument("vi: iterations must be positive");
    if (mc_gradient_samples == 0) throw InvalidArgument("vi: mc_gradient_samples must be positive");
    if (!(base_step_size > 0.0) || !std::isfinite(base_step_size))
      throw InvalidArgument("vi: base_step_size must be positive and finite");
  }
};

/// Fully factorized Gaussian over the unconstrained coordinates.
struct MeanFieldFit {
  std::vector<double> mean;
  std::vector<double> log_sd;
  double elbo = 0.0;  // last stochastic estimate, up to an additive constant
  double step_size = 0.0;
  std::size_t restarts = 0;
};

namespace detail {

inline bool optimize_meanfield(const Target& target, const MeanFieldViSettings& settings, double eta,
                               Rng& rng, MeanFieldFit& fit) {
  const std::size_t d = target.dimension();
  fit.mean.assign(d, 0.0);
  fit.log_sd.assign(d, 0.0);
  std::vector<double> accum(d * 2, 0.0);
  std::vector<double> eps(d), zeta(d), grad(d), g_mean(d), g_log_sd(d);
  const auto n_mc = static_cast<double>(settings.mc_gradient_samples);

  for (std::size_t k = 1; k <= settings.iterations; ++k) {
    std::fill(g_mean.begin(), g_mean.end(), 0.0);
    std::fill(g_log_sd.begin(), g_log_sd.end(), 0.0);
    double elbo = 0.0;
    for (std::size_t m = 0; m < settings.mc_gradient_samples; ++m) {
      for (std::size_t i = 0; i < d; ++i) {
        eps[i] = rng.normal();
        zeta[i] = fit.mean[i] + std::exp(fit.log_sd[i]) * eps[i];
      }
      elbo += target.log_density(zeta, grad);
      for (std::size_t i = 0; i < d; ++i) {
        g_mean[i] += grad[i];
        g_log_sd[i] += grad[i] * eps[i] * std::exp(fit.log_sd[i]);
      }
    }
    elbo /= n_mc;
    for (std::size_t i = 0; i < d; ++i) {
      elbo += fit.log_sd[i];  // entropy
      g_mean[i] /= n_mc;
      g_log_sd[i] = g_log_sd[i] / n_mc + 1.0;
    }
    if (!std::isfinite(elbo)) return false;

    // Per-coordinate step: eta * k^(-1/2) / (1 + sqrt(running mean of squared gradients)).
    const double decay = eta * std::pow(static_cast<double>(k), -0.5 + 1e-16);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t c = 0; c < 2; ++c) {
        const double g = c == 0 ? g_mean[i] : g_log_sd[i];
        if (!std::isfinite(g)) return false;
        double& s = accum[2 * i + c];
        s = k == 1 ? g * g : 0.1 * g * g + 0.9 * s;
        const double step = decay / (1.0 + std::sqrt(s)) * g;
        (c == 0 ? fit.mean[i] : fit.log_sd[i]) += step;
      }
    }
    fit.elbo = elbo;
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (!std::isfinite(fit.mean[i]) || !std::isfinite(fit.log_sd[i])) return false;
  }
  return true;
}

}  // namespace detail

/// Maximizes the ELBO with reparameterized stochastic gradients.
inline MeanFieldFit fit_meanfield(const Target& target, const MeanFieldViSettings& settings,
                                  Rng& rng) {
  settings.validate();
  MeanFieldFit fit;
  double eta = settings.base_step_size;
  for (std::size_t attempt = 0; attempt <= settings.max_restarts; ++attempt, eta *= 0.5) {
    fit.restarts = attempt;
    fit.step_size = eta;
    if (detail::optimize_meanfield(target, settings, eta, rng, fit)) return fit;
  }
  throw Error("vi: ELBO estimate stayed non-finite after " +
              std::to_string(settings.max_restarts) + " step-size halvings");
}

/// S x d constrained draws from the fitted approximation, row-major.
inline std::vector<double> sample_meanfield(const Target& target, const MeanFieldFit& fit,
                                            std::size_t n_draws, Rng& rng) {
  const std::size_t d = fit.mean.size();
  std::vector<double> out;
  out.reserve(n_draws * d);
  std::vector<double> u(d);
  for (std::size_t s = 0; s < n_draws; ++s) {
    for (std::size_t i = 0; i < d; ++i) u[i] = fit.mean[i] + std::exp(fit.log_sd[i]) * rng.normal();
    const auto theta = target.constrain(u);
    out.insert(out.end(), theta.begin(), theta.end());
  }
  return out;
}

}  // namespace sbcal
