#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "model.hpp"
#include "rng.hpp"

namespace sbcal {

struct HmcSettings {
  std::size_t leapfrog_steps = 16;
  double step_size = 0.1;  // initial value; adapted during warmup
  std::size_t warmup_iterations = 500;
  double target_accept = 0.8;
  // Fraction of divergent post-warmup transitions above which the fit is flagged.
  double max_divergent_fraction = 0.05;

  void validate() const {
    if (leapfrog_steps == 0) throw InvalidArgument("hmc: leapfrog_steps must be positive");
    if (!(step_size > 0.0) || !std::isfinite(step_size))
      throw InvalidArgument("hmc: step_size must be positive and finite");
    if (!(target_accept > 0.0 && target_accept < 1.0))
      throw InvalidArgument("hmc: target_accept must lie in (0, 1)");
    if (!(max_divergent_fraction >= 0.0 && max_divergent_fraction <= 1.0))
      throw InvalidArgument("hmc: max_divergent_fraction must lie in [0, 1]");
  }
};

struct HmcResult {
  std::vector<double> draws;  // S x d, constrained parameter vectors, row-major
  std::size_t dimension = 0;
  double acceptance_rate = 0.0;
  std::size_t divergences = 0;
  bool divergence_flag = false;
  double step_size = 0.0;
};

namespace detail {

// Energy error beyond which a trajectory is counted as divergent.
inline constexpr double kDivergenceThreshold = 1000.0;

// Step-size adaptation by dual averaging toward a target acceptance rate.
class DualAveraging {
 public:
  DualAveraging(double initial_step, double target)
      : mu_(std::log(10.0 * initial_step)), target_(target) {}

  double update(double accept_prob) {
    ++m_;
    const double m = static_cast<double>(m_);
    h_bar_ = (1.0 - 1.0 / (m + kT0)) * h_bar_ + (target_ - accept_prob) / (m + kT0);
    const double log_eps = mu_ - std::sqrt(m) / kGamma * h_bar_;
    const double eta = std::pow(m, -kKappa);
    log_eps_bar_ = eta * log_eps + (1.0 - eta) * log_eps_bar_;
    return std::exp(log_eps);
  }

  double final_step() const { return std::exp(log_eps_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double mu_;
  double target_;
  double h_bar_ = 0.0;
  double log_eps_bar_ = 0.0;
  std::size_t m_ = 0;
};

}  // namespace detail

/// Static-trajectory HMC with unit mass matrix. Warmup draws are discarded;
/// the step size is tuned during warmup and frozen afterwards.
inline HmcResult run_hmc(const Target& target, std::size_t n_draws, const HmcSettings& settings,
                         Rng& rng) {
  settings.validate();
  if (n_draws == 0) throw InvalidArgument("hmc: number of draws must be positive");
  const std::size_t d = target.dimension();

  std::vector<double> q(d), grad(d), q_new(d), grad_new(d), p(d);
  double lp = -INFINITY;
  for (int attempt = 0; attempt < 100 && !std::isfinite(lp); ++attempt) {
    for (auto& v : q) v = rng.uniform(-2.0, 2.0);
    lp = target.log_density(q, grad);
  }
  if (!std::isfinite(lp)) throw Error("hmc: could not find a finite initial point");

  double eps = settings.step_size;
  detail::DualAveraging adapt(eps, settings.target_accept);

  HmcResult out;
  out.dimension = d;
  out.draws.reserve(n_draws * d);
  double accept_sum = 0.0;

  const std::size_t total = settings.warmup_iterations + n_draws;
  for (std::size_t it = 0; it < total; ++it) {
    const bool warmup = it < settings.warmup_iterations;
    for (auto& v : p) v = rng.normal();
    double kinetic0 = 0.0;
    for (double v : p) kinetic0 += 0.5 * v * v;

    q_new = q;
    grad_new = grad;
    double lp_new = lp;
    for (std::size_t step = 0; step < settings.leapfrog_steps && std::isfinite(lp_new); ++step) {
      for (std::size_t i = 0; i < d; ++i) p[i] += 0.5 * eps * grad_new[i];
      for (std::size_t i = 0; i < d; ++i) q_new[i] += eps * p[i];
      lp_new = target.log_density(q_new, grad_new);
      for (std::size_t i = 0; i < d; ++i) p[i] += 0.5 * eps * grad_new[i];
    }
    double kinetic1 = 0.0;
    for (double v : p) kinetic1 += 0.5 * v * v;

    const double energy_error = (-lp_new + kinetic1) - (-lp + kinetic0);
    const bool divergent = !std::isfinite(energy_error) || energy_error > detail::kDivergenceThreshold;
    const double accept_prob = divergent ? 0.0 : std::min(1.0, std::exp(-energy_error));

    if (!divergent && rng.uniform() < accept_prob) {
      q.swap(q_new);
      grad.swap(grad_new);
      lp = lp_new;
    }

    if (warmup) {
      eps = adapt.update(accept_prob);
      if (it + 1 == settings.warmup_iterations) eps = adapt.final_step();
    } else {
      accept_sum += accept_prob;
      if (divergent) ++out.divergences;
      const auto theta = target.constrain(q);
      out.draws.insert(out.draws.end(), theta.begin(), theta.end());
    }
  }

  out.acceptance_rate = accept_sum / static_cast<double>(n_draws);
  out.step_size = eps;
  out.divergence_flag = static_cast<double>(out.divergences) >
                        settings.max_divergent_fraction * static_cast<double>(n_draws);
  return out;
}

}  // namespace sbcal
