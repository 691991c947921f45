#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "analytic.hpp"
#include "config.hpp"
#include "recalibration.hpp"
#include "reporting.hpp"
#include "sbc.hpp"

// End-to-end experiment drivers. Each writes a report bundle when `out` is
// set and returns the numbers behind it.
namespace sbcal::experiments {

namespace fs = std::filesystem;

struct Common {
  std::uint64_t seed = 1;
  fs::path out;  // empty: no files
  std::size_t workers = 1;
};

inline std::vector<std::string> names() {
  return {"simple-gaussian", "eight-schools", "normal-normal-figures", "hierarchical-posterior-trend"};
}

/// Nominal-coverage adjustments for each alpha followed by one z-score adjustment.
struct MethodComparison {
  std::vector<std::pair<double, Adjustment>> nominal;
  Adjustment zscore;
  CoverageTable nominal_table;
  CoverageTable zscore_table;
};

inline MethodComparison compare_methods(const ReplicationSet& fit_set, const ReplicationSet& eval_set,
                                        std::span<const double> alphas, const ScaleGrid& grid) {
  MethodComparison out;
  const auto ks = grid.values();
  for (double a : alphas) out.nominal.emplace_back(a, nominal_coverage_search(fit_set, a, ks));
  out.zscore = zscore_scale_estimate(fit_set);
  out.nominal_table = evaluate_adjustments(eval_set, out.nominal);
  out.zscore_table = evaluate_adjustment(eval_set, out.zscore, alphas);
  return out;
}

namespace detail {
inline void write_bundle_config(const fs::path& out, const std::string& name, const Common& c,
                                KeyValues extra) {
  KeyValues kv{{"experiment", name}, {"seed", std::to_string(c.seed)}};
  for (auto& e : extra) kv.push_back(std::move(e));
  report::write_key_values(out / "config.txt", kv);
}
}  // namespace detail

// ---------------------------------------------------------------------------

struct SimpleGaussianOptions {
  std::size_t n_obs = 4;
  std::size_t replications = 1000;
  std::size_t draws = 1000;
  double narrow_factor = 3.0;
  ScaleGrid grid{};
  std::vector<double> alphas = default_alphas();
  bool in_sample = false;
};

struct SimpleGaussianResult {
  SbcDiagnostics exact;
  SbcDiagnostics narrowed;
  MethodComparison methods;
};

/// Exact vs. artificially narrowed conjugate posterior, then both recalibration methods.
inline SimpleGaussianResult simple_gaussian(const Common& c, const SimpleGaussianOptions& o = {}) {
  auto model = std::make_shared<ConjugateNormalModel>(o.n_obs);
  auto exact = std::make_shared<ExactConjugateSampler>(model);
  auto narrowed = narrow(exact, o.narrow_factor);
  RunOptions ro;
  ro.workers = c.workers;

  SimpleGaussianResult r;
  const auto exact_set =
      run_replications(*model, *exact, o.replications, o.draws, std::nullopt, derive_seed(c.seed, "exact"), ro);
  r.exact = diagnostics(exact_set, o.alphas);
  const auto fit_set = run_replications(*model, *narrowed, o.replications, o.draws, std::nullopt,
                                        derive_seed(c.seed, "fit"), ro);
  r.narrowed = diagnostics(fit_set, o.alphas);
  if (o.in_sample) {
    r.methods = compare_methods(fit_set, fit_set, o.alphas, o.grid);
  } else {
    const auto eval_set = run_replications(*model, *narrowed, o.replications, o.draws, std::nullopt,
                                           derive_seed(c.seed, "eval"), ro);
    r.methods = compare_methods(fit_set, eval_set, o.alphas, o.grid);
  }

  if (!c.out.empty()) {
    detail::write_bundle_config(c.out, "simple-gaussian", c,
                                {{"n_obs", std::to_string(o.n_obs)},
                                 {"L", std::to_string(o.replications)},
                                 {"S", std::to_string(o.draws)},
                                 {"narrow_factor", format_real(o.narrow_factor)},
                                 {"grid", o.grid.to_string()},
                                 {"alpha", format_list(o.alphas)},
                                 {"in_sample", o.in_sample ? "true" : "false"}});
    report::HistogramSpec spec;
    report::emit_quantile_histogram(r.exact, spec, c.out, "exact_quantile_hist");
    report::emit_quantile_histogram(r.narrowed, spec, c.out, "narrowed_quantile_hist");
    report::emit_quantile_ecdf(r.exact, c.out, "exact_quantile_ecdf");
    report::emit_quantile_ecdf(r.narrowed, c.out, "narrowed_quantile_ecdf");
    report::write_diagnostics(r.exact, c.out / "exact");
    report::write_diagnostics(r.narrowed, c.out / "narrowed");
    report::emit_coverage_table(r.methods.nominal_table, c.out, "table_nominal");
    report::emit_coverage_table(r.methods.zscore_table, c.out, "table_zscore");
  }
  return r;
}

// ---------------------------------------------------------------------------

struct EightSchoolsOptions {
  std::size_t replications = 1000;
  std::size_t draws = 1000;
  HmcSettings hmc{};
  MeanFieldViSettings vi{};
  ScaleGrid grid{};
  std::vector<double> alphas = default_alphas();
  bool in_sample = false;
};

struct EightSchoolsResult {
  SbcDiagnostics hmc;
  SbcDiagnostics vi;
  MethodComparison methods;
  double median_sd_ratio = 0.0;  // VI posterior sd / HMC posterior sd for mu
};

/// HMC (non-centered) against mean-field VI (centered) on the same simulated
/// datasets, then recalibration of the VI posterior for mu.
inline EightSchoolsResult eight_schools(const Common& c, const EightSchoolsOptions& o = {}) {
  auto model = std::make_shared<EightSchoolsModel>();
  HmcSampler hmc(model, o.hmc, Parameterization::non_centered);
  MeanFieldViSampler vi(model, o.vi, Parameterization::centered);
  RunOptions ro;
  ro.workers = c.workers;

  EightSchoolsResult r;
  // Same seed: both samplers see identical (theta^l, y^l).
  const auto fit_seed = derive_seed(c.seed, "fit");
  const auto hmc_set = run_replications(*model, hmc, o.replications, o.draws, std::nullopt, fit_seed, ro);
  const auto vi_set = run_replications(*model, vi, o.replications, o.draws, std::nullopt, fit_seed, ro);
  r.hmc = diagnostics(hmc_set, o.alphas);
  r.vi = diagnostics(vi_set, o.alphas);
  if (o.in_sample) {
    r.methods = compare_methods(vi_set, vi_set, o.alphas, o.grid);
  } else {
    const auto eval_set =
        run_replications(*model, vi, o.replications, o.draws, std::nullopt, derive_seed(c.seed, "eval"), ro);
    r.methods = compare_methods(vi_set, eval_set, o.alphas, o.grid);
  }
  std::vector<double> ratios;
  for (std::size_t l = 0; l < std::min(hmc_set.size(), vi_set.size()); ++l) {
    if (hmc_set.post_sd[l] > 0) ratios.push_back(vi_set.post_sd[l] / hmc_set.post_sd[l]);
  }
  if (!ratios.empty()) r.median_sd_ratio = quantile(ratios, 0.5);

  if (!c.out.empty()) {
    KeyValues kv{{"L", std::to_string(o.replications)},
                 {"S", std::to_string(o.draws)},
                 {"grid", o.grid.to_string()},
                 {"alpha", format_list(o.alphas)},
                 {"in_sample", o.in_sample ? "true" : "false"}};
    for (auto& e : model->config()) kv.push_back(e);
    for (auto& e : hmc.config()) kv.emplace_back("fit_a." + e.first, e.second);
    for (auto& e : vi.config()) kv.emplace_back("fit_b." + e.first, e.second);
    detail::write_bundle_config(c.out, "eight-schools", c, std::move(kv));
    report::HistogramSpec spec;
    report::emit_quantile_histogram(r.hmc, spec, c.out, "hmc_quantile_hist");
    report::emit_quantile_histogram(r.vi, spec, c.out, "vi_quantile_hist");
    report::write_diagnostics(r.hmc, c.out / "hmc");
    report::write_diagnostics(r.vi, c.out / "vi");
    report::emit_coverage_table(r.methods.nominal_table, c.out, "table_nominal");
    report::emit_coverage_table(r.methods.zscore_table, c.out, "table_zscore");
    if (hmc_set.replication_index == vi_set.replication_index)
      report::emit_posterior_comparison(hmc_set, vi_set, c.out, "vi_vs_hmc");
  }
  return r;
}

// ---------------------------------------------------------------------------

struct NormalNormalOptions {
  double sigma = 1.0;
  std::size_t replications = 200;
  std::size_t draws = 1000;
  std::size_t outer = 50;
  std::vector<double> observed = {0.0, 1.0};  // posterior-mode data values
};

struct NormalNormalSetting {
  std::string name;
  std::optional<double> y;  // unset: prior mode
  SbcDiagnostics diag;
  std::vector<ShiftScale> scatter;
  analytic::GaussianLaw z_law;
};

/// Prior- and posterior-mode SBC with exact draws, plus the replicated
/// location-scale estimates for each setting.
inline std::vector<NormalNormalSetting> normal_normal_figures(const Common& c,
                                                              const NormalNormalOptions& o = {}) {
  auto model = std::make_shared<NormalNormalModel>(o.sigma);
  auto exact = std::make_shared<NormalNormalExactSampler>(model);
  RunOptions ro;
  ro.workers = c.workers;

  std::vector<NormalNormalSetting> settings;
  settings.push_back({"prior", std::nullopt, {}, {}, analytic::prior_mode_z_law()});
  for (double y : o.observed) {
    settings.push_back({"posterior_y" + format_real(y), y, {}, {},
                        analytic::posterior_mode_z_law(y, o.sigma)});
  }
  for (auto& s : settings) {
    std::optional<PosteriorReference> ref;
    if (s.y) ref = PosteriorReference{Dataset({*s.y}), exact};
    const auto seed = derive_seed(c.seed, s.name);
    const auto reps = run_replications(*model, *exact, o.replications, o.draws, ref, seed, ro);
    s.diag = diagnostics(reps);
    s.scatter = replicate_adjustment_distribution(*model, *exact, ref, o.outer, o.replications, o.draws,
                                                  seed, ro);
  }

  if (!c.out.empty()) {
    detail::write_bundle_config(c.out, "normal-normal-figures", c,
                                {{"sigma", format_real(o.sigma)},
                                 {"L", std::to_string(o.replications)},
                                 {"S", std::to_string(o.draws)},
                                 {"R", std::to_string(o.outer)},
                                 {"y_d", format_list(o.observed)}});
    report::HistogramSpec spec;
    for (const auto& s : settings) {
      report::emit_quantile_histogram(s.diag, spec, c.out, s.name + "_quantile_hist");
      report::emit_z_histogram(s.diag, spec, c.out, s.name + "_z_hist");
      report::emit_adjustment_scatter(s.scatter, c.out, s.name + "_adjustment_scatter");
      report::write_diagnostics(s.diag, c.out / s.name);
    }
    report::CsvTable laws{{"y", "analytic_z_mean", "analytic_z_sd", "recal_mean", "recal_sd"}, {}};
    for (const auto& s : settings) {
      if (!s.y) continue;
      const auto lim = analytic::posterior_recalibration_limit(*s.y, o.sigma);
      laws.rows.push_back({*s.y, s.z_law.mean, s.z_law.sd, lim.mean, lim.sd});
    }
    report::write_csv(c.out / "analytic_laws.csv", laws);
  }
  return settings;
}

// ---------------------------------------------------------------------------

struct HierarchicalTrendOptions {
  std::vector<std::size_t> group_counts = {8, 32, 128};
  std::size_t replications = 200;
  std::size_t draws = 500;
  HmcSettings hmc{};
  double mu_true = 0.0;
  double tau_true = 5.0;
  std::size_t bootstrap = 200;
  std::size_t reference_thin = 10;
};

struct TrendRow {
  std::size_t n_groups = 0;
  // z-scores pooled over every local parameter alpha_1..alpha_J
  double z_mean = 0.0;
  double z_sd = 0.0;
  double se_z_mean = 0.0;  // bootstrap over replications
  double se_z_sd = 0.0;
  // alpha_1 alone
  double first_z_mean = 0.0;
  double first_z_sd = 0.0;
};

struct HierarchicalTrendResult {
  std::vector<TrendRow> rows;
  // |z_mean| and |z_sd - 1| never grow by more than 2 combined standard errors as J increases.
  bool nonincreasing = true;
};

/// Posterior-mode SBC on the hierarchical model for growing J, with HMC as both
/// the reference and the fitted sampler.
inline HierarchicalTrendResult hierarchical_trend(const Common& c, const HierarchicalTrendOptions& o = {}) {
  HierarchicalTrendResult result;
  RunOptions ro;
  ro.workers = c.workers;
  ro.keep_draws = false;
  ro.keep_datasets = false;
  for (std::size_t J : o.group_counts) {
    auto model = std::make_shared<EightSchoolsModel>(EightSchoolsModel::cycled_sds(J));
    auto hmc = std::make_shared<HmcSampler>(model, o.hmc, Parameterization::non_centered);

    // Observed data from fixed hyperparameters.
    Rng data_rng(derive_seed(derive_seed(c.seed, "observed"), J));
    std::vector<double> theta(2 + J);
    theta[0] = o.mu_true;
    theta[1] = o.tau_true;
    for (std::size_t j = 0; j < J; ++j) theta[2 + j] = data_rng.normal(o.mu_true, o.tau_true);
    const auto observed = model->simulate_data(theta, data_rng);

    std::vector<std::size_t> idx(J);
    for (std::size_t j = 0; j < J; ++j) idx[j] = 2 + j;
    const auto sets = run_replications_for(*model, *hmc, idx, o.replications, o.draws,
                                           PosteriorReference{observed, hmc, o.reference_thin},
                                           derive_seed(derive_seed(c.seed, "trend"), J), ro);
    const std::size_t L = sets.front().size();
    // z[l][j]
    std::vector<std::vector<double>> z(L, std::vector<double>(J));
    for (std::size_t j = 0; j < J; ++j) {
      const auto zj = z_scores(sets[j]);
      for (std::size_t l = 0; l < L; ++l) z[l][j] = zj[l];
    }
    auto pooled = [&](std::span<const std::size_t> rows) {
      std::vector<double> all;
      all.reserve(rows.size() * J);
      for (auto l : rows) all.insert(all.end(), z[l].begin(), z[l].end());
      const double m = mean(all);
      return std::pair{m, population_sd(all, m)};
    };
    std::vector<std::size_t> ids(L);
    for (std::size_t l = 0; l < L; ++l) ids[l] = l;
    TrendRow row;
    row.n_groups = J;
    std::tie(row.z_mean, row.z_sd) = pooled(ids);
    std::vector<double> bm, bs;
    Rng boot(derive_seed(c.seed, "bootstrap"));
    std::uniform_int_distribution<std::size_t> pick(0, L - 1);
    for (std::size_t b = 0; b < o.bootstrap; ++b) {
      for (auto& v : ids) v = pick(boot.engine());
      const auto [m, s] = pooled(ids);
      bm.push_back(m);
      bs.push_back(s);
    }
    row.se_z_mean = population_sd(bm);
    row.se_z_sd = population_sd(bs);
    const auto first = z_scores(sets.front());
    row.first_z_mean = mean(first);
    row.first_z_sd = population_sd(first, row.first_z_mean);
    result.rows.push_back(row);
  }
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    const auto& a = result.rows[i - 1];
    const auto& b = result.rows[i];
    const double tol_m = 2.0 * std::hypot(a.se_z_mean, b.se_z_mean);
    const double tol_s = 2.0 * std::hypot(a.se_z_sd, b.se_z_sd);
    if (std::abs(b.z_mean) > std::abs(a.z_mean) + tol_m) result.nonincreasing = false;
    if (std::abs(b.z_sd - 1.0) > std::abs(a.z_sd - 1.0) + tol_s) result.nonincreasing = false;
  }

  if (!c.out.empty()) {
    detail::write_bundle_config(c.out, "hierarchical-posterior-trend", c,
                                {{"n_groups", [&] {
                                    std::string s;
                                    for (auto J : o.group_counts) s += (s.empty() ? "" : ",") + std::to_string(J);
                                    return s;
                                  }()},
                                 {"L", std::to_string(o.replications)},
                                 {"S", std::to_string(o.draws)},
                                 {"mu_true", format_real(o.mu_true)},
                                 {"tau_true", format_real(o.tau_true)}});
    report::CsvTable t{{"n_groups", "z_mean", "z_sd", "se_z_mean", "se_z_sd", "alpha1_z_mean", "alpha1_z_sd"}, {}};
    for (const auto& r : result.rows) {
      t.rows.push_back({static_cast<double>(r.n_groups), r.z_mean, r.z_sd, r.se_z_mean, r.se_z_sd,
                        r.first_z_mean, r.first_z_sd});
    }
    report::write_csv(c.out / "trend.csv", t);
  }
  return result;
}

}  // namespace sbcal::experiments
