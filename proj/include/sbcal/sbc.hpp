#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "model.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "samplers.hpp"
#include "stats.hpp"

namespace sbcal {

enum class Mode { prior, posterior };

inline const char* to_string(Mode m) { return m == Mode::prior ? "prior" : "posterior"; }

struct DegeneratePosterior : Error {
  using Error::Error;
};

/// Raised when more than the allowed fraction of replications fail.
struct RunAborted : Error {
  RunAborted(const std::string& what, std::vector<std::size_t> failed_indices)
      : Error(what), failed(std::move(failed_indices)) {}
  std::vector<std::size_t> failed;
};

/// Where Step-1 parameter draws come from in posterior mode: L draws from
/// `reference` fitted to the observed dataset, keeping every `thin`-th draw
/// (useful when the reference is a Markov chain).
struct PosteriorReference {
  Dataset observed;
  std::shared_ptr<const PosteriorSampler> reference;
  std::size_t thin = 1;
};

struct RunOptions {
  std::size_t workers = 1;
  bool keep_draws = true;
  bool keep_datasets = true;
  double max_failure_fraction = 0.01;
};

/// L replications of (theta^l, y^l, S posterior draws of the scalar of interest).
/// Rows of failed replications are dropped; `replication_index` maps each row
/// back to its l.
struct ReplicationSet {
  Mode mode = Mode::prior;
  std::size_t draws_per_replication = 0;
  std::uint64_t seed = 0;
  std::string scalar_label;
  std::optional<Dataset> observed;

  std::vector<std::size_t> replication_index;
  std::vector<double> theta_true;
  std::vector<Dataset> datasets;  // empty when not kept
  std::vector<double> draws;      // L x S row-major, empty when not kept
  std::vector<double> post_mean;
  std::vector<double> post_sd;  // population convention
  std::vector<double> rank_quantiles;

  std::vector<std::size_t> failed;
  std::vector<std::string> failure_messages;
  KeyValues provenance;

  std::size_t size() const { return theta_true.size(); }
  bool has_draws() const { return !draws.empty(); }

  std::span<const double> row(std::size_t l) const {
    if (!has_draws()) throw InvalidArgument("replication set was built without draws");
    return {draws.data() + l * draws_per_replication, draws_per_replication};
  }

  void validate() const {
    const std::size_t n = size();
    if (post_mean.size() != n || post_sd.size() != n || rank_quantiles.size() != n ||
        replication_index.size() != n)
      throw InvalidArgument("replication set: inconsistent array lengths");
    if (has_draws() && draws.size() != n * draws_per_replication)
      throw InvalidArgument("replication set: draw matrix does not match L x S");
    if (!datasets.empty() && datasets.size() != n)
      throw InvalidArgument("replication set: dataset count does not match L");
    for (std::size_t l = 0; l < n; ++l) {
      if (!std::isfinite(theta_true[l]) || !std::isfinite(post_mean[l]) ||
          !std::isfinite(post_sd[l]) || post_sd[l] < 0.0)
        throw InvalidArgument("replication set: invalid values in row " + std::to_string(l));
    }
  }
};

/// Fraction of draws strictly below theta.
inline double rank_quantile(double theta, std::span<const double> draws) {
  if (draws.empty()) throw InvalidArgument("rank_quantile: no draws");
  std::size_t below = 0;
  for (double d : draws) below += theta > d ? 1 : 0;
  return static_cast<double>(below) / static_cast<double>(draws.size());
}

inline double z_score(double theta, double mean, double sd) {
  if (!(sd > 0.0)) throw DegeneratePosterior("z_score: posterior sd must be positive");
  return (theta - mean) / sd;
}

/// Sup-distance between the empirical CDF of `values` and the U(0,1) CDF.
inline double ks_uniformity(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("ks_uniformity: empty input");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = std::clamp(v[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - x, x - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic 1% critical value of sqrt(L) * D for the one-sample KS test.
inline constexpr double kKsCritical01 = 1.63;

struct Interval {
  double lo;
  double hi;
  bool contains(double x) const { return lo <= x && x <= hi; }
};

/// Central (1 - alpha) interval from empirical quantiles of the draws.
inline Interval central_interval(std::span<const double> draws, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  return {quantile_sorted(sorted, alpha / 2.0), quantile_sorted(sorted, 1.0 - alpha / 2.0)};
}

inline const std::vector<double>& default_alphas() {
  static const std::vector<double> alphas{0.05, 0.1, 0.2, 0.5};
  return alphas;
}

namespace detail {

struct ScalarRow {
  double theta = 0.0;
  std::vector<double> draws;
};

struct ReplicationOutcome {
  bool ok = false;
  std::string error;
  Dataset data;
  std::vector<ScalarRow> rows;  // one per requested scalar
};

inline void check_fit(const FitResult& fit, std::size_t n_draws, std::size_t dim) {
  if (fit.size() != n_draws || fit.dimension != dim)
    throw Error("sampler returned " + std::to_string(fit.size()) + " draws of dimension " +
                std::to_string(fit.dimension));
  for (double v : fit.draws) {
    if (!std::isfinite(v)) throw Error("sampler returned a non-finite draw");
  }
}

}  // namespace detail

/// Runs draw-simulate-fit L times and returns one ReplicationSet per requested
/// parameter index, all sharing the same replications. Replication l uses the
/// stream derive_seed(seed, l), so results do not depend on `options.workers`.
inline std::vector<ReplicationSet> run_replications_for(
    const GenerativeModel& model, const PosteriorSampler& sampler,
    std::span<const std::size_t> scalar_indices, std::size_t n_replications, std::size_t n_draws,
    const std::optional<PosteriorReference>& posterior, std::uint64_t seed,
    const RunOptions& options = {}) {
  if (n_replications < 2) throw InvalidArgument("run_replications: L must be at least 2");
  if (n_draws < 2) throw InvalidArgument("run_replications: S must be at least 2");
  if (scalar_indices.empty()) throw InvalidArgument("run_replications: no scalar requested");
  const std::size_t dim = model.parameter_dimension();
  for (auto idx : scalar_indices) {
    if (idx >= dim) throw InvalidArgument("run_replications: scalar index out of range");
  }

  std::vector<double> reference_draws;
  if (posterior) {
    if (!posterior->reference) throw InvalidArgument("posterior mode needs a reference sampler");
    model.check_dataset(posterior->observed);
    const std::size_t thin = std::max<std::size_t>(posterior->thin, 1);
    Rng ref_rng(derive_seed(seed, "reference"));
    auto ref = posterior->reference->fit(posterior->observed, n_replications * thin, ref_rng);
    detail::check_fit(ref, n_replications * thin, dim);
    reference_draws.reserve(n_replications * dim);
    for (std::size_t l = 0; l < n_replications; ++l) {
      const auto d = ref.draw(l * thin);
      reference_draws.insert(reference_draws.end(), d.begin(), d.end());
    }
  }

  std::vector<detail::ReplicationOutcome> outcomes(n_replications);
  parallel_for(n_replications, options.workers, [&](std::size_t l) {
    auto& out = outcomes[l];
    try {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(l)));
      std::vector<double> theta;
      if (posterior) {
        theta.assign(reference_draws.begin() + static_cast<std::ptrdiff_t>(l * dim),
                     reference_draws.begin() + static_cast<std::ptrdiff_t>((l + 1) * dim));
      } else {
        theta = model.prior_sample(rng);
      }
      out.data = model.simulate_data(theta, rng);
      const auto fit = sampler.fit(out.data, n_draws, rng);
      detail::check_fit(fit, n_draws, dim);
      out.rows.resize(scalar_indices.size());
      for (std::size_t k = 0; k < scalar_indices.size(); ++k) {
        out.rows[k].theta = model.extract_scalar(theta, scalar_indices[k]);
        out.rows[k].draws = fit.column(scalar_indices[k]);
      }
      out.ok = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  std::vector<ReplicationSet> sets(scalar_indices.size());
  const auto labels = model.parameter_labels();
  KeyValues provenance = model.config();
  for (auto kv : sampler.config()) provenance.push_back(std::move(kv));
  for (std::size_t k = 0; k < sets.size(); ++k) {
    auto& s = sets[k];
    s.mode = posterior ? Mode::posterior : Mode::prior;
    s.draws_per_replication = n_draws;
    s.seed = seed;
    s.scalar_label = labels[scalar_indices[k]];
    if (posterior) s.observed = posterior->observed;
    s.provenance = provenance;
    s.provenance.emplace_back("scalar", s.scalar_label);
  }

  for (std::size_t l = 0; l < n_replications; ++l) {
    auto& out = outcomes[l];
    if (!out.ok) {
      for (auto& s : sets) {
        s.failed.push_back(l);
        s.failure_messages.push_back(out.error);
      }
      continue;
    }
    for (std::size_t k = 0; k < sets.size(); ++k) {
      auto& s = sets[k];
      auto& row = out.rows[k];
      const double m = mean(row.draws);
      s.replication_index.push_back(l);
      s.theta_true.push_back(row.theta);
      s.post_mean.push_back(m);
      s.post_sd.push_back(population_sd(row.draws, m));
      s.rank_quantiles.push_back(rank_quantile(row.theta, row.draws));
      if (options.keep_draws) s.draws.insert(s.draws.end(), row.draws.begin(), row.draws.end());
      if (options.keep_datasets) s.datasets.push_back(out.data);
    }
    out = {};
  }

  const auto& failed = sets.front().failed;
  if (static_cast<double>(failed.size()) >
      options.max_failure_fraction * static_cast<double>(n_replications)) {
    std::string msg = "run aborted: " + std::to_string(failed.size()) + " of " +
                      std::to_string(n_replications) + " replications failed";
    if (!failed.empty())
      msg += " (first: replication " + std::to_string(failed.front()) + ": " +
             sets.front().failure_messages.front() + ")";
    throw RunAborted(msg, failed);
  }
  return sets;
}

/// Single-scalar run for the model's configured scalar of interest.
inline ReplicationSet run_replications(const GenerativeModel& model, const PosteriorSampler& sampler,
                                       std::size_t n_replications, std::size_t n_draws,
                                       const std::optional<PosteriorReference>& posterior,
                                       std::uint64_t seed, const RunOptions& options = {}) {
  const std::size_t idx[] = {model.scalar_index()};
  return std::move(
      run_replications_for(model, sampler, idx, n_replications, n_draws, posterior, seed, options)
          .front());
}

struct SbcDiagnostics {
  std::vector<double> quantiles;
  std::vector<double> z_scores;
  double z_mean = 0.0;
  double z_sd = 0.0;  // population convention
  double ks_distance = 0.0;
  std::map<double, double> coverage;  // alpha -> fraction inside central (1 - alpha) interval
  bool degenerate_z_sd = false;       // set when all z-scores coincide (e.g. L = 1)
};

inline std::vector<double> z_scores(const ReplicationSet& reps) {
  std::vector<double> z(reps.size());
  for (std::size_t l = 0; l < z.size(); ++l) {
    if (!(reps.post_sd[l] > 0.0))
      throw DegeneratePosterior("replication " + std::to_string(reps.replication_index[l]) +
                                " has zero posterior sd");
    z[l] = z_score(reps.theta_true[l], reps.post_mean[l], reps.post_sd[l]);
  }
  return z;
}

/// Fraction of replications whose theta lies inside the central (1 - alpha)
/// interval of its row.
inline double row_coverage(const ReplicationSet& reps, double alpha) {
  std::size_t hit = 0;
  for (std::size_t l = 0; l < reps.size(); ++l) {
    hit += central_interval(reps.row(l), alpha).contains(reps.theta_true[l]) ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(reps.size());
}

/// Coverage is computed only when the set carries its draws.
inline SbcDiagnostics diagnostics(const ReplicationSet& reps,
                                  std::span<const double> alphas = default_alphas()) {
  if (reps.size() == 0) throw InvalidArgument("diagnostics: empty replication set");
  reps.validate();
  SbcDiagnostics out;
  out.quantiles = reps.rank_quantiles;
  out.z_scores = z_scores(reps);
  out.z_mean = mean(out.z_scores);
  out.z_sd = population_sd(out.z_scores, out.z_mean);
  out.degenerate_z_sd = !(out.z_sd > 0.0);
  out.ks_distance = ks_uniformity(out.quantiles);
  if (reps.has_draws()) {
    for (double a : alphas) out.coverage[a] = row_coverage(reps, a);
  }
  return out;
}

}  // namespace sbcal
