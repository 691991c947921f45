#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "analytic.hpp"
#include "hmc.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "vi.hpp"

namespace sbcal {

/// S posterior draws of the full parameter vector, row-major S x dimension.
struct FitResult {
  std::vector<double> draws;
  std::size_t dimension = 0;
  double acceptance_rate = std::numeric_limits<double>::quiet_NaN();
  std::size_t divergences = 0;
  bool divergence_flag = false;

  std::size_t size() const { return dimension == 0 ? 0 : draws.size() / dimension; }
  std::span<const double> draw(std::size_t s) const {
    return {draws.data() + s * dimension, dimension};
  }
  std::vector<double> column(std::size_t index) const {
    std::vector<double> out(size());
    for (std::size_t s = 0; s < out.size(); ++s) out[s] = draws[s * dimension + index];
    return out;
  }
};

class PosteriorSampler {
 public:
  virtual ~PosteriorSampler() = default;
  virtual std::string name() const = 0;
  virtual FitResult fit(const Dataset& y, std::size_t n_draws, Rng& rng) const = 0;
  virtual KeyValues config() const = 0;
};

namespace detail {
inline void require_draws(std::size_t n_draws, const std::string& who) {
  if (n_draws == 0) throw InvalidArgument(who + ": number of draws must be positive");
}
}  // namespace detail

/// I.i.d. draws from the closed-form posterior of the conjugate model.
class ExactConjugateSampler final : public PosteriorSampler {
 public:
  explicit ExactConjugateSampler(std::shared_ptr<const ConjugateNormalModel> model)
      : model_(std::move(model)) {}

  std::string name() const override { return "exact"; }

  FitResult fit(const Dataset& y, std::size_t n_draws, Rng& rng) const override {
    detail::require_draws(n_draws, name());
    if (y.size() == 0) throw InvalidArgument("exact: empty dataset");
    model_->check_dataset(y);
    const auto post = analytic::conjugate_posterior(y.values);
    FitResult out;
    out.dimension = 1;
    out.draws.resize(n_draws);
    for (auto& d : out.draws) d = rng.normal(post.mean, post.sd);
    return out;
  }

  KeyValues config() const override { return {{"sampler", name()}}; }

 private:
  std::shared_ptr<const ConjugateNormalModel> model_;
};

/// I.i.d. draws from the closed-form normal-normal posterior.
class NormalNormalExactSampler final : public PosteriorSampler {
 public:
  explicit NormalNormalExactSampler(std::shared_ptr<const NormalNormalModel> model)
      : model_(std::move(model)) {}

  std::string name() const override { return "exact"; }

  FitResult fit(const Dataset& y, std::size_t n_draws, Rng& rng) const override {
    detail::require_draws(n_draws, name());
    model_->check_dataset(y);
    const auto post = analytic::normal_normal_posterior(y.values[0], model_->sigma());
    FitResult out;
    out.dimension = 1;
    out.draws.resize(n_draws);
    for (auto& d : out.draws) d = rng.normal(post.mean, post.sd);
    return out;
  }

  KeyValues config() const override { return {{"sampler", name()}}; }

 private:
  std::shared_ptr<const NormalNormalModel> model_;
};

/// Shrinks each coordinate of the inner sampler's draws toward its draw mean:
/// d -> mean + (d - mean) / factor. Mean is kept, sd is divided by factor.
class NarrowedSampler final : public PosteriorSampler {
 public:
  NarrowedSampler(std::shared_ptr<const PosteriorSampler> inner, double factor)
      : inner_(std::move(inner)), factor_(factor) {
    if (!(factor > 0.0) || !std::isfinite(factor))
      throw InvalidArgument("narrow: factor must be positive and finite");
  }

  double factor() const { return factor_; }

  std::string name() const override { return "narrowed"; }

  FitResult fit(const Dataset& y, std::size_t n_draws, Rng& rng) const override {
    auto out = inner_->fit(y, n_draws, rng);
    narrow_in_place(out, factor_);
    return out;
  }

  static void narrow_in_place(FitResult& fit, double factor) {
    if (factor == 1.0) return;
    const std::size_t n = fit.size();
    for (std::size_t i = 0; i < fit.dimension; ++i) {
      double m = 0.0;
      for (std::size_t s = 0; s < n; ++s) m += fit.draws[s * fit.dimension + i];
      m /= static_cast<double>(n);
      for (std::size_t s = 0; s < n; ++s) {
        double& d = fit.draws[s * fit.dimension + i];
        d = m + (d - m) / factor;
      }
    }
  }

  KeyValues config() const override {
    KeyValues kv{{"sampler", name()}, {"narrow_factor", format_real(factor_)}};
    for (auto [k, v] : inner_->config()) kv.emplace_back("inner_" + k, v);
    return kv;
  }

 private:
  std::shared_ptr<const PosteriorSampler> inner_;
  double factor_;
};

inline std::shared_ptr<const PosteriorSampler> narrow(std::shared_ptr<const PosteriorSampler> inner,
                                                      double factor) {
  return std::make_shared<NarrowedSampler>(std::move(inner), factor);
}

class HmcSampler final : public PosteriorSampler {
 public:
  HmcSampler(std::shared_ptr<const GenerativeModel> model, HmcSettings settings,
             Parameterization parameterization = Parameterization::non_centered)
      : model_(std::move(model)), settings_(settings), parameterization_(parameterization) {
    settings_.validate();
  }

  const HmcSettings& settings() const { return settings_; }

  std::string name() const override { return "hmc"; }

  FitResult fit(const Dataset& y, std::size_t n_draws, Rng& rng) const override {
    const auto target = model_->make_target(y, parameterization_);
    auto res = run_hmc(*target, n_draws, settings_, rng);
    FitResult out;
    out.draws = std::move(res.draws);
    out.dimension = res.dimension;
    out.acceptance_rate = res.acceptance_rate;
    out.divergences = res.divergences;
    out.divergence_flag = res.divergence_flag;
    return out;
  }

  KeyValues config() const override {
    return {{"sampler", name()},
            {"parameterization", parameterization_ == Parameterization::centered ? "centered"
                                                                                 : "non_centered"},
            {"hmc.leapfrog_steps", std::to_string(settings_.leapfrog_steps)},
            {"hmc.step_size", format_real(settings_.step_size)},
            {"hmc.warmup_iterations", std::to_string(settings_.warmup_iterations)},
            {"hmc.target_accept", format_real(settings_.target_accept)}};
  }

 private:
  std::shared_ptr<const GenerativeModel> model_;
  HmcSettings settings_;
  Parameterization parameterization_;
};

class MeanFieldViSampler final : public PosteriorSampler {
 public:
  MeanFieldViSampler(std::shared_ptr<const GenerativeModel> model, MeanFieldViSettings settings,
                     Parameterization parameterization = Parameterization::centered)
      : model_(std::move(model)), settings_(settings), parameterization_(parameterization) {
    settings_.validate();
  }

  const MeanFieldViSettings& settings() const { return settings_; }

  std::string name() const override { return "vi"; }

  MeanFieldFit fit_approximation(const Dataset& y, Rng& rng) const {
    const auto target = model_->make_target(y, parameterization_);
    return fit_meanfield(*target, settings_, rng);
  }

  FitResult fit(const Dataset& y, std::size_t n_draws, Rng& rng) const override {
    detail::require_draws(n_draws, name());
    const auto target = model_->make_target(y, parameterization_);
    const auto approx = fit_meanfield(*target, settings_, rng);
    FitResult out;
    out.dimension = model_->parameter_dimension();
    out.draws = sample_meanfield(*target, approx, n_draws, rng);
    return out;
  }

  KeyValues config() const override {
    return {{"sampler", name()},
            {"parameterization", parameterization_ == Parameterization::centered ? "centered"
                                                                                 : "non_centered"},
            {"vi.iterations", std::to_string(settings_.iterations)},
            {"vi.mc_gradient_samples", std::to_string(settings_.mc_gradient_samples)},
            {"vi.base_step_size", format_real(settings_.base_step_size)}};
  }

 private:
  std::shared_ptr<const GenerativeModel> model_;
  MeanFieldViSettings settings_;
  Parameterization parameterization_;
};

}  // namespace sbcal
