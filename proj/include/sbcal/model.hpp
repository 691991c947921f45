#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "stats.hpp"

namespace sbcal {

/// Flat vector of observations plus a shape descriptor.
struct Dataset {
  std::vector<double> values;
  std::vector<std::size_t> shape;

  Dataset() = default;
  Dataset(std::vector<double> v) : values(std::move(v)), shape{values.size()} {}

  std::size_t size() const { return values.size(); }
  bool operator==(const Dataset&) const = default;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

enum class Parameterization { centered, non_centered };

/// Log posterior density on the unconstrained space, with gradient.
class Target {
 public:
  virtual ~Target() = default;
  virtual std::size_t dimension() const = 0;
  // Writes the gradient into `grad` (size dimension()) and returns log p(u | y) up to a constant.
  virtual double log_density(std::span<const double> u, std::span<double> grad) const = 0;
  // Maps an unconstrained point back to the model's parameter vector.
  virtual std::vector<double> constrain(std::span<const double> u) const = 0;
};

class GenerativeModel {
 public:
  virtual ~GenerativeModel() = default;

  virtual std::string name() const = 0;
  virtual std::vector<std::string> parameter_labels() const = 0;
  virtual std::vector<double> prior_sample(Rng& rng) const = 0;
  virtual Dataset simulate_data(std::span<const double> theta, Rng& rng) const = 0;
  virtual std::unique_ptr<Target> make_target(const Dataset& y, Parameterization p) const = 0;
  virtual KeyValues config() const = 0;
  // Rejects datasets whose shape does not match the model.
  virtual void check_dataset(const Dataset& y) const = 0;

  std::size_t parameter_dimension() const { return parameter_labels().size(); }
  const std::string& scalar_label() const { return scalar_label_; }
  std::size_t scalar_index() const { return scalar_index_; }

  std::size_t index_of(const std::string& label) const {
    const auto labels = parameter_labels();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == label) return i;
    }
    throw InvalidArgument("model " + name() + " has no parameter '" + label + "'");
  }

  double extract_scalar(std::span<const double> theta) const {
    return extract_scalar(theta, scalar_index_);
  }
  double extract_scalar(std::span<const double> theta, std::size_t index) const {
    if (theta.size() != parameter_dimension())
      throw InvalidArgument(name() + ": parameter vector has wrong length");
    return theta[index];
  }

 protected:
  void set_scalar_label(const std::string& label) {
    scalar_index_ = index_of(label);
    scalar_label_ = label;
  }

  void check_theta(std::span<const double> theta) const {
    if (theta.size() != parameter_dimension())
      throw InvalidArgument(name() + ": expected " + std::to_string(parameter_dimension()) +
                            " parameters, got " + std::to_string(theta.size()));
    for (double v : theta) {
      if (!std::isfinite(v)) throw InvalidArgument(name() + ": non-finite parameter");
    }
  }

 private:
  std::string scalar_label_;
  std::size_t scalar_index_ = 0;
};

inline std::string format_list(std::span<const double> xs) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", xs[i]);
    if (i) out += ',';
    out += buf;
  }
  return out;
}

inline std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// theta ~ normal(0, 1); y_i | theta ~ normal(theta, 1), i = 1..N.
class ConjugateNormalModel final : public GenerativeModel {
 public:
  explicit ConjugateNormalModel(std::size_t n_obs) : n_obs_(n_obs) {
    if (n_obs == 0) throw InvalidArgument("conjugate_normal: n_obs must be positive");
    set_scalar_label("theta");
  }

  std::size_t n_obs() const { return n_obs_; }

  std::string name() const override { return "conjugate_normal"; }
  std::vector<std::string> parameter_labels() const override { return {"theta"}; }

  std::vector<double> prior_sample(Rng& rng) const override { return {rng.normal()}; }

  Dataset simulate_data(std::span<const double> theta, Rng& rng) const override {
    check_theta(theta);
    std::vector<double> y(n_obs_);
    for (auto& v : y) v = rng.normal(theta[0], 1.0);
    return Dataset(std::move(y));
  }

  void check_dataset(const Dataset& y) const override {
    if (y.size() != n_obs_)
      throw InvalidArgument("conjugate_normal: dataset must have " + std::to_string(n_obs_) +
                            " observations, got " + std::to_string(y.size()));
  }

  std::unique_ptr<Target> make_target(const Dataset& y, Parameterization) const override;

  KeyValues config() const override {
    return {{"model", name()}, {"n_obs", std::to_string(n_obs_)}, {"scalar", scalar_label()}};
  }

 private:
  std::size_t n_obs_;
};

// theta ~ normal(0, 1); y | theta ~ normal(theta, sigma) with sigma known.
class NormalNormalModel final : public GenerativeModel {
 public:
  explicit NormalNormalModel(double sigma) : sigma_(sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw InvalidArgument("normal_normal: sigma must be positive and finite");
    set_scalar_label("theta");
  }

  double sigma() const { return sigma_; }

  std::string name() const override { return "normal_normal"; }
  std::vector<std::string> parameter_labels() const override { return {"theta"}; }

  std::vector<double> prior_sample(Rng& rng) const override { return {rng.normal()}; }

  Dataset simulate_data(std::span<const double> theta, Rng& rng) const override {
    check_theta(theta);
    return Dataset({rng.normal(theta[0], sigma_)});
  }

  void check_dataset(const Dataset& y) const override {
    if (y.size() != 1) throw InvalidArgument("normal_normal: dataset must be a single observation");
  }

  std::unique_ptr<Target> make_target(const Dataset& y, Parameterization) const override;

  KeyValues config() const override {
    return {{"model", name()}, {"sigma", format_real(sigma_)}, {"scalar", scalar_label()}};
  }

 private:
  double sigma_;
};

/// Hierarchical model over J groups with known per-group noise:
///   mu ~ normal(0, mu_scale), tau ~ half-normal(0, tau_scale),
///   alpha_j ~ normal(mu, tau), y_j ~ normal(alpha_j, sigma_j).
/// Parameter vector is (mu, tau, alpha_1, ..., alpha_J).
class EightSchoolsModel final : public GenerativeModel {
 public:
  static std::vector<double> classical_sds() { return {15, 10, 16, 11, 9, 11, 10, 18}; }

  explicit EightSchoolsModel(std::vector<double> group_sds = classical_sds(),
                             double mu_scale = 5.0, double tau_scale = 5.0,
                             const std::string& scalar = "mu")
      : group_sds_(std::move(group_sds)), mu_scale_(mu_scale), tau_scale_(tau_scale) {
    if (group_sds_.empty()) throw InvalidArgument("eight_schools: need at least one group");
    for (double s : group_sds_) {
      if (!(s > 0.0) || !std::isfinite(s))
        throw InvalidArgument("eight_schools: group sds must be positive and finite");
    }
    if (!(mu_scale > 0.0) || !(tau_scale > 0.0) || !std::isfinite(mu_scale) ||
        !std::isfinite(tau_scale))
      throw InvalidArgument("eight_schools: hyperprior scales must be positive");
    set_scalar_label(scalar);
  }

  /// J groups whose sds cycle through the classical eight values.
  static std::vector<double> cycled_sds(std::size_t n_groups) {
    const auto base = classical_sds();
    std::vector<double> out(n_groups);
    for (std::size_t j = 0; j < n_groups; ++j) out[j] = base[j % base.size()];
    return out;
  }

  std::size_t n_groups() const { return group_sds_.size(); }
  const std::vector<double>& group_sds() const { return group_sds_; }
  double mu_scale() const { return mu_scale_; }
  double tau_scale() const { return tau_scale_; }

  std::string name() const override { return "eight_schools"; }

  std::vector<std::string> parameter_labels() const override {
    std::vector<std::string> labels{"mu", "tau"};
    for (std::size_t j = 1; j <= n_groups(); ++j) labels.push_back("alpha_" + std::to_string(j));
    return labels;
  }

  std::vector<double> prior_sample(Rng& rng) const override {
    std::vector<double> theta(2 + n_groups());
    theta[0] = rng.normal(0.0, mu_scale_);
    theta[1] = std::abs(rng.normal(0.0, tau_scale_));
    for (std::size_t j = 0; j < n_groups(); ++j) theta[2 + j] = rng.normal(theta[0], theta[1]);
    return theta;
  }

  Dataset simulate_data(std::span<const double> theta, Rng& rng) const override {
    check_theta(theta);
    if (theta[1] < 0.0) throw InvalidArgument("eight_schools: tau must be nonnegative");
    std::vector<double> y(n_groups());
    for (std::size_t j = 0; j < n_groups(); ++j) y[j] = rng.normal(theta[2 + j], group_sds_[j]);
    return Dataset(std::move(y));
  }

  void check_dataset(const Dataset& y) const override {
    if (y.size() != n_groups())
      throw InvalidArgument("eight_schools: dataset must have one value per group");
  }

  std::unique_ptr<Target> make_target(const Dataset& y, Parameterization p) const override;

  KeyValues config() const override {
    return {{"model", name()},
            {"n_groups", std::to_string(n_groups())},
            {"group_sds", format_list(group_sds_)},
            {"mu_prior_scale", format_real(mu_scale_)},
            {"tau_prior_scale", format_real(tau_scale_)},
            {"scalar", scalar_label()}};
  }

 private:
  std::vector<double> group_sds_;
  double mu_scale_;
  double tau_scale_;
};

namespace detail {

inline void check_finite(const Dataset& y, const std::string& who) {
  for (double v : y.values) {
    if (!std::isfinite(v)) throw InvalidArgument(who + ": non-finite observation");
  }
}

class ConjugateTarget final : public Target {
 public:
  explicit ConjugateTarget(std::vector<double> y) : y_(std::move(y)) {}
  std::size_t dimension() const override { return 1; }
  double log_density(std::span<const double> u, std::span<double> grad) const override {
    const double t = u[0];
    double lp = -0.5 * t * t;
    double g = -t;
    for (double v : y_) {
      lp -= 0.5 * (v - t) * (v - t);
      g += v - t;
    }
    grad[0] = g;
    return lp;
  }
  std::vector<double> constrain(std::span<const double> u) const override { return {u[0]}; }

 private:
  std::vector<double> y_;
};

class NormalNormalTarget final : public Target {
 public:
  NormalNormalTarget(double y, double sigma) : y_(y), inv_var_(1.0 / (sigma * sigma)) {}
  std::size_t dimension() const override { return 1; }
  double log_density(std::span<const double> u, std::span<double> grad) const override {
    const double t = u[0];
    grad[0] = -t + (y_ - t) * inv_var_;
    return -0.5 * t * t - 0.5 * (y_ - t) * (y_ - t) * inv_var_;
  }
  std::vector<double> constrain(std::span<const double> u) const override { return {u[0]}; }

 private:
  double y_;
  double inv_var_;
};

// Unconstrained coordinates: (mu, log tau, eta_1..eta_J) with alpha_j = mu + tau * eta_j.
class NonCenteredSchoolsTarget final : public Target {
 public:
  NonCenteredSchoolsTarget(const EightSchoolsModel& m, std::vector<double> y)
      : y_(std::move(y)), sds_(m.group_sds()), mu_scale_(m.mu_scale()), tau_scale_(m.tau_scale()) {}

  std::size_t dimension() const override { return 2 + y_.size(); }

  double log_density(std::span<const double> u, std::span<double> grad) const override {
    const double mu = u[0];
    const double log_tau = u[1];
    const double tau = std::exp(log_tau);
    double lp = -0.5 * mu * mu / (mu_scale_ * mu_scale_) -
                0.5 * tau * tau / (tau_scale_ * tau_scale_) + log_tau;
    double g_mu = -mu / (mu_scale_ * mu_scale_);
    double g_tau_inner = -tau / (tau_scale_ * tau_scale_);
    for (std::size_t j = 0; j < y_.size(); ++j) {
      const double eta = u[2 + j];
      const double inv_var = 1.0 / (sds_[j] * sds_[j]);
      const double resid = y_[j] - mu - tau * eta;
      lp -= 0.5 * eta * eta + 0.5 * resid * resid * inv_var;
      const double r = resid * inv_var;
      g_mu += r;
      g_tau_inner += r * eta;
      grad[2 + j] = -eta + tau * r;
    }
    grad[0] = g_mu;
    grad[1] = tau * g_tau_inner + 1.0;
    return lp;
  }

  std::vector<double> constrain(std::span<const double> u) const override {
    std::vector<double> theta(u.size());
    theta[0] = u[0];
    theta[1] = std::exp(u[1]);
    for (std::size_t j = 2; j < u.size(); ++j) theta[j] = u[0] + theta[1] * u[j];
    return theta;
  }

 private:
  std::vector<double> y_;
  std::vector<double> sds_;
  double mu_scale_;
  double tau_scale_;
};

// Unconstrained coordinates: (mu, log tau, alpha_1..alpha_J).
class CenteredSchoolsTarget final : public Target {
 public:
  CenteredSchoolsTarget(const EightSchoolsModel& m, std::vector<double> y)
      : y_(std::move(y)), sds_(m.group_sds()), mu_scale_(m.mu_scale()), tau_scale_(m.tau_scale()) {}

  std::size_t dimension() const override { return 2 + y_.size(); }

  double log_density(std::span<const double> u, std::span<double> grad) const override {
    const double mu = u[0];
    const double log_tau = u[1];
    const double tau = std::exp(log_tau);
    const double inv_tau2 = std::exp(-2.0 * log_tau);
    const auto n = static_cast<double>(y_.size());
    double lp = -0.5 * mu * mu / (mu_scale_ * mu_scale_) -
                0.5 * tau * tau / (tau_scale_ * tau_scale_) + log_tau - n * log_tau;
    double g_mu = -mu / (mu_scale_ * mu_scale_);
    double ss = 0.0;
    for (std::size_t j = 0; j < y_.size(); ++j) {
      const double a = u[2 + j];
      const double inv_var = 1.0 / (sds_[j] * sds_[j]);
      const double dev = a - mu;
      const double resid = y_[j] - a;
      lp -= 0.5 * dev * dev * inv_tau2 + 0.5 * resid * resid * inv_var;
      ss += dev * dev;
      g_mu += dev * inv_tau2;
      grad[2 + j] = -dev * inv_tau2 + resid * inv_var;
    }
    grad[0] = g_mu;
    grad[1] = -tau * tau / (tau_scale_ * tau_scale_) + 1.0 - n + ss * inv_tau2;
    return lp;
  }

  std::vector<double> constrain(std::span<const double> u) const override {
    std::vector<double> theta(u.begin(), u.end());
    theta[1] = std::exp(u[1]);
    return theta;
  }

 private:
  std::vector<double> y_;
  std::vector<double> sds_;
  double mu_scale_;
  double tau_scale_;
};

}  // namespace detail

inline std::unique_ptr<Target> ConjugateNormalModel::make_target(const Dataset& y,
                                                                 Parameterization) const {
  check_dataset(y);
  detail::check_finite(y, name());
  return std::make_unique<detail::ConjugateTarget>(y.values);
}

inline std::unique_ptr<Target> NormalNormalModel::make_target(const Dataset& y,
                                                              Parameterization) const {
  check_dataset(y);
  detail::check_finite(y, name());
  return std::make_unique<detail::NormalNormalTarget>(y.values[0], sigma_);
}

inline std::unique_ptr<Target> EightSchoolsModel::make_target(const Dataset& y,
                                                              Parameterization p) const {
  check_dataset(y);
  detail::check_finite(y, name());
  if (p == Parameterization::centered)
    return std::make_unique<detail::CenteredSchoolsTarget>(*this, y.values);
  return std::make_unique<detail::NonCenteredSchoolsTarget>(*this, y.values);
}

}  // namespace sbcal
