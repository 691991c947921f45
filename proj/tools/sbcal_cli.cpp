#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sbcal/sbcal.hpp"

namespace fs = std::filesystem;
using namespace sbcal;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAborted = 3;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> workers;
  std::string mode;
  std::string y_d;
  std::string method = "zscore";
  std::string alpha;
  std::string grid;
  bool in_sample = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "key = value config file");
  app->add_option("--seed", f.seed, "master seed (overrides config)");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--workers", f.workers, "worker threads (default: hardware concurrency)");
}

/// Config file merged with command-line overrides.
KeyValueConfig resolve(const Flags& f) {
  KeyValueConfig cfg = f.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(f.config);
  if (f.seed) cfg.set("seed", std::to_string(*f.seed));
  if (!f.mode.empty()) cfg.set("mode", f.mode);
  if (!f.y_d.empty()) cfg.set("y_d", f.y_d);
  if (!f.alpha.empty()) cfg.set("alpha", f.alpha);
  if (!f.grid.empty()) cfg.set("grid", f.grid);
  if (f.in_sample) cfg.set("in_sample", "true");
  return cfg;
}

std::uint64_t require_seed(const KeyValueConfig& cfg) {
  if (!cfg.has("seed")) throw InvalidArgument("config: seed is required (set `seed` or pass --seed)");
  return cfg.get_u64("seed", 0);
}

fs::path require_out(const Flags& f) {
  if (f.out.empty()) throw InvalidArgument("--out is required");
  return f.out;
}

std::size_t workers(const Flags& f) { return f.workers.value_or(default_workers()); }

std::size_t require_count(const KeyValueConfig& cfg, const std::string& key, std::size_t fallback) {
  const auto v = cfg.get_u64(key, fallback);
  if (v < 2) throw InvalidArgument("config: " + key + " must be at least 2");
  return v;
}

std::vector<double> alphas(const KeyValueConfig& cfg) {
  auto a = cfg.get_reals("alpha", default_alphas());
  for (double v : a) {
    if (!(v > 0.0 && v < 1.0)) throw InvalidArgument("config: alpha values must lie in (0, 1)");
  }
  return a;
}

ScaleGrid grid(const KeyValueConfig& cfg) {
  return cfg.has("grid") ? ScaleGrid::parse(cfg.require("grid")) : ScaleGrid{};
}

void write_config(const fs::path& dir, const std::string& command, const KeyValueConfig& cfg) {
  KeyValues kv{{"command", command}};
  for (auto& e : cfg.entries()) kv.push_back(e);
  report::write_key_values(dir / "config.txt", kv);
}

void print_failures(const ReplicationSet& reps) {
  if (reps.failed.empty()) return;
  std::cerr << "warning: " << reps.failed.size() << " replication(s) failed and were dropped\n";
}

// ---------------------------------------------------------------------------

struct Setup {
  std::shared_ptr<const GenerativeModel> model;
  std::shared_ptr<const PosteriorSampler> sampler;
  std::optional<PosteriorReference> reference;
  std::size_t L = 0;
  std::size_t S = 0;
  std::uint64_t seed = 0;
};

Setup setup(const KeyValueConfig& cfg) {
  Setup s;
  s.seed = require_seed(cfg);
  s.model = make_model(cfg);
  s.sampler = make_sampler(cfg, s.model);
  s.reference = make_reference(cfg, s.model, s.sampler);
  s.L = require_count(cfg, "L", 1000);
  s.S = require_count(cfg, "S", 1000);
  return s;
}

ReplicationSet run(const Setup& s, std::uint64_t seed, std::size_t n_workers, bool keep_draws = true) {
  RunOptions ro;
  ro.workers = n_workers;
  ro.keep_draws = keep_draws;
  ro.keep_datasets = false;
  auto reps = run_replications(*s.model, *s.sampler, s.L, s.S, s.reference, seed, ro);
  print_failures(reps);
  return reps;
}

int cmd_sbc(const Flags& f) {
  const auto cfg = resolve(f);
  const auto s = setup(cfg);
  const auto out = require_out(f);
  const auto reps = run(s, s.seed, workers(f));
  const auto diag = diagnostics(reps, alphas(cfg));

  write_config(out, "sbc", cfg);
  report::HistogramSpec spec;
  spec.n_bins = cfg.get_u64("bins", spec.n_bins);
  report::emit_quantile_histogram(diag, spec, out);
  report::emit_quantile_ecdf(diag, out);
  report::emit_z_histogram(diag, spec, out);
  report::write_diagnostics(diag, out);
  report::write_replication_set(reps, out / "replications", cfg.get_bool("write_draws", false));

  const double ks = diag.ks_distance * std::sqrt(static_cast<double>(reps.size()));
  std::printf("L = %zu  S = %zu  mode = %s\n", reps.size(), s.S, to_string(reps.mode));
  std::printf("KS sqrt(L)*D = %.4f (%s at 1%%)\n", ks, ks < kKsCritical01 ? "uniform" : "reject");
  std::printf("z mean = %.4f  z sd = %.4f\n", diag.z_mean, diag.z_sd);
  for (const auto& [a, c] : diag.coverage) std::printf("coverage(%.3g) = %.4f\n", a, c);
  return 0;
}

// Adjustment records are key = value files: kind, scale, shift, optional
// alpha, then provenance entries prefixed with "provenance.".
void write_adjustment(const fs::path& path, const Adjustment& adj) {
  KeyValues kv{{"kind", to_string(adj.kind)},
               {"scale", format_real(adj.scale)},
               {"shift", format_real(adj.shift_coefficient)}};
  for (const auto& [k, v] : adj.provenance) kv.emplace_back("provenance." + k, v);
  report::write_key_values(path, kv);
}

Adjustment read_adjustment(const fs::path& path) {
  const auto rec = KeyValueConfig::load(path);
  Adjustment adj;
  const auto kind = rec.require("kind");
  if (kind == "scale_only") {
    adj.kind = AdjustmentKind::scale_only;
  } else if (kind == "location_scale") {
    adj.kind = AdjustmentKind::location_scale;
  } else {
    throw InvalidArgument("adjustment: unknown kind '" + kind + "'");
  }
  adj.scale = rec.get_real("scale", 1.0);
  adj.shift_coefficient = rec.get_real("shift", 0.0);
  for (const auto& [k, v] : rec.entries()) {
    if (k.rfind("provenance.", 0) == 0) adj.provenance.emplace_back(k.substr(11), v);
  }
  adj.validate();
  return adj;
}

int cmd_calibrate(const Flags& f) {
  const auto cfg = resolve(f);
  const auto s = setup(cfg);
  const auto out = require_out(f);
  const auto as = alphas(cfg);
  const auto g = grid(cfg);
  const bool in_sample = cfg.get_bool("in_sample", false);
  const std::string method = f.method;
  if (method != "nominal" && method != "zscore" && method != "locscale")
    throw InvalidArgument("--method must be nominal, zscore or locscale");

  const auto fit_set = run(s, s.seed, workers(f));
  std::optional<ReplicationSet> eval_storage;
  if (!in_sample) eval_storage = run(s, derive_seed(s.seed, "eval"), workers(f));
  const auto& eval_set = in_sample ? fit_set : *eval_storage;

  write_config(out, "calibrate", cfg);
  CoverageTable table;
  if (method == "nominal") {
    const auto ks = g.values();
    std::vector<std::pair<double, Adjustment>> per_alpha;
    for (double a : as) {
      per_alpha.emplace_back(a, nominal_coverage_search(fit_set, a, ks));
      write_adjustment(out / ("adjustment_alpha" + format_real(a) + ".txt"), per_alpha.back().second);
    }
    table = evaluate_adjustments(eval_set, per_alpha);
  } else {
    const auto adj = method == "zscore" ? zscore_scale_estimate(fit_set) : location_scale_estimate(fit_set);
    write_adjustment(out / "adjustment.txt", adj);
    table = evaluate_adjustment(eval_set, adj, as);
  }
  report::emit_coverage_table(table, out);
  report::write_diagnostics(diagnostics(fit_set, as), out / "fit");

  std::printf("method = %s  evaluation = %s\n", method.c_str(), in_sample ? "in-sample" : "out-of-sample");
  std::printf("%-8s %-10s %-10s %-10s\n", "nominal", "scale", "shift", "coverage");
  for (const auto& r : report::coverage_csv(table).rows)
    std::printf("%-8.3f %-10.4f %-10.4f %-10.4f\n", r[0], r[1], r[2], r[3]);
  return 0;
}

int cmd_apply(const Flags& f, const std::string& adjustment_path, const std::string& draws_path) {
  const auto adj = read_adjustment(adjustment_path);
  const auto out = require_out(f);

  std::optional<KeyValueConfig> cfg;
  if (!f.config.empty() || f.seed) cfg = resolve(f);

  report::CsvTable draws;
  if (!draws_path.empty()) {
    draws = report::read_csv(draws_path);
  } else {
    if (!cfg) throw InvalidArgument("apply needs --draws FILE or --config with model, sampler and y_d");
    const auto seed = require_seed(*cfg);
    const auto model = make_model(*cfg);
    const auto sampler = make_sampler(*cfg, model);
    if (!cfg->has("y_d")) throw InvalidArgument("config: apply requires y_d");
    const Dataset y(cfg->get_reals("y_d", {}));
    model->check_dataset(y);
    Rng rng(derive_seed(seed, "apply"));
    const auto fit = sampler->fit(y, require_count(*cfg, "S", 1000), rng);
    const auto col = fit.column(model->scalar_index());
    draws.rows.push_back(col);
    for (std::size_t s = 0; s < col.size(); ++s) draws.header.push_back("s" + std::to_string(s + 1));
  }

  if (cfg) {
    KeyValues expected;
    if (cfg->has("model")) {
      const auto model = make_model(*cfg);
      expected = model->config();
      if (cfg->has("sampler"))
        for (auto& kv : make_sampler(*cfg, model)->config()) expected.push_back(kv);
    }
    for (const auto& [k, v] : expected) {
      for (const auto& [pk, pv] : adj.provenance) {
        if (pk == k && pv != v)
          std::cerr << "warning: adjustment was fitted with " << k << " = " << pv << ", applying to " << v
                    << "\n";
      }
    }
  }

  if (draws.header.size() < 2) throw InvalidArgument("apply: each row needs at least two draws");
  report::CsvTable adjusted{draws.header, {}};
  for (std::size_t r = 0; r < draws.rows.size(); ++r) {
    const auto& row = draws.rows[r];
    if (row.size() != draws.header.size())
      throw InvalidArgument("apply: row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                            " values, header has " + std::to_string(draws.header.size()));
    const double m = mean(row);
    adjusted.rows.push_back(apply_adjustment(row, m, population_sd(row, m), adj));
  }
  report::write_csv(out / "adjusted_draws.csv", adjusted);
  std::printf("wrote %zu adjusted row(s) to %s\n", adjusted.rows.size(), (out / "adjusted_draws.csv").c_str());
  return 0;
}

void print_law(const analytic::GaussianLaw& law) {
  std::printf("mean,sd\n%s,%s\n", format_real(law.mean).c_str(), format_real(law.sd).c_str());
}

// ---------------------------------------------------------------------------

int cmd_experiment(const Flags& f, const std::string& name) {
  const auto valid = experiments::names();
  if (std::find(valid.begin(), valid.end(), name) == valid.end()) {
    std::string list;
    for (const auto& n : valid) list += (list.empty() ? "" : ", ") + n;
    throw InvalidArgument("unknown experiment '" + name + "' (valid: " + list + ")");
  }
  const auto cfg = resolve(f);
  experiments::Common c;
  c.seed = require_seed(cfg);
  c.out = require_out(f);
  c.workers = workers(f);
  const bool in_sample = cfg.get_bool("in_sample", false);

  auto print_table = [](const char* title, const CoverageTable& t) {
    std::printf("%s\n", title);
    for (const auto& r : report::coverage_csv(t).rows)
      std::printf("  %.3f  k = %.3f  coverage = %.4f\n", r[0], r[1], r[3]);
  };

  if (name == "simple-gaussian") {
    experiments::SimpleGaussianOptions o;
    o.n_obs = cfg.get_u64("n_obs", o.n_obs);
    o.replications = require_count(cfg, "L", o.replications);
    o.draws = require_count(cfg, "S", o.draws);
    o.narrow_factor = cfg.get_real("narrow_factor", o.narrow_factor);
    o.grid = grid(cfg);
    o.alphas = alphas(cfg);
    o.in_sample = in_sample;
    const auto r = experiments::simple_gaussian(c, o);
    const double sqrt_l = std::sqrt(static_cast<double>(o.replications));
    std::printf("exact:    KS sqrt(L)*D = %.4f  z sd = %.4f\n", r.exact.ks_distance * sqrt_l, r.exact.z_sd);
    std::printf("narrowed: KS sqrt(L)*D = %.4f  z sd = %.4f\n", r.narrowed.ks_distance * sqrt_l, r.narrowed.z_sd);
    print_table("nominal coverage method:", r.methods.nominal_table);
    print_table("z-score method:", r.methods.zscore_table);
  } else if (name == "eight-schools") {
    experiments::EightSchoolsOptions o;
    o.replications = require_count(cfg, "L", o.replications);
    o.draws = require_count(cfg, "S", o.draws);
    o.hmc = hmc_settings(cfg);
    o.vi = vi_settings(cfg);
    o.grid = grid(cfg);
    o.alphas = alphas(cfg);
    o.in_sample = in_sample;
    const auto r = experiments::eight_schools(c, o);
    const double sqrt_l = std::sqrt(static_cast<double>(o.replications));
    std::printf("hmc: KS sqrt(L)*D = %.4f  z sd = %.4f\n", r.hmc.ks_distance * sqrt_l, r.hmc.z_sd);
    std::printf("vi:  KS sqrt(L)*D = %.4f  z sd = %.4f\n", r.vi.ks_distance * sqrt_l, r.vi.z_sd);
    std::printf("median vi/hmc posterior sd ratio = %.4f\n", r.median_sd_ratio);
    print_table("nominal coverage method:", r.methods.nominal_table);
    print_table("z-score method:", r.methods.zscore_table);
  } else if (name == "normal-normal-figures") {
    experiments::NormalNormalOptions o;
    o.sigma = cfg.get_real("sigma", o.sigma);
    o.replications = require_count(cfg, "L", o.replications);
    o.draws = require_count(cfg, "S", o.draws);
    o.outer = cfg.get_u64("R", o.outer);
    o.observed = cfg.get_reals("y_d", o.observed);
    const auto settings = experiments::normal_normal_figures(c, o);
    for (const auto& s : settings) {
      double zm = 0, zs = 0;
      for (const auto& p : s.scatter) {
        zm += p.z_mean;
        zs += p.z_sd;
      }
      const auto n = static_cast<double>(s.scatter.size());
      std::printf("%-16s mean zbar = %.4f  mean s_z = %.4f  (analytic %.4f, %.4f)\n", s.name.c_str(), zm / n,
                  zs / n, s.z_law.mean, s.z_law.sd);
    }
  } else {
    experiments::HierarchicalTrendOptions o;
    if (cfg.has("n_groups")) {
      o.group_counts.clear();
      for (double v : cfg.get_reals("n_groups", {})) o.group_counts.push_back(static_cast<std::size_t>(v));
    }
    o.replications = require_count(cfg, "L", o.replications);
    o.draws = require_count(cfg, "S", o.draws);
    o.hmc = hmc_settings(cfg);
    o.reference_thin = cfg.get_u64("reference_thin", o.reference_thin);
    const auto r = experiments::hierarchical_trend(c, o);
    std::printf("%-6s %-18s %-18s\n", "J", "zbar (se)", "s_z (se)");
    for (const auto& row : r.rows)
      std::printf("%-6zu %7.4f (%.4f)    %7.4f (%.4f)\n", row.n_groups, row.z_mean, row.se_z_mean, row.z_sd,
                  row.se_z_sd);
    std::printf("trend toward (0, 1) within noise: %s\n", r.nonincreasing ? "yes" : "no");
  }
  std::printf("bundle written to %s\n", c.out.c_str());
  return 0;
}

// Re-renders every figure in a bundle from its CSV twin.
int cmd_report(const Flags& f, const std::string& bundle) {
  if (bundle.empty()) throw InvalidArgument("report needs a bundle directory");
  const fs::path in(bundle);
  if (!fs::is_directory(in)) throw InvalidArgument("not a directory: " + bundle);
  const fs::path out = f.out.empty() ? in : fs::path(f.out);
  std::vector<fs::path> csvs;
  for (const auto& e : fs::recursive_directory_iterator(in)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") csvs.push_back(e.path());
  }
  std::sort(csvs.begin(), csvs.end());
  std::size_t rendered = 0;
  for (const auto& p : csvs) {
    const auto t = report::read_csv(p);
    const auto has = [&](const char* c) { return std::find(t.header.begin(), t.header.end(), c) != t.header.end(); };
    const auto target = out / fs::relative(p, in).replace_extension(".svg");
    const auto stem = p.stem().string();
    std::string svg;
    if (has("bin_lo") && has("count")) {
      const bool z = stem.find("z_hist") != std::string::npos;
      svg = report::render_histogram_svg(t, z ? "z-scores" : "SBC quantiles", z ? "z" : "quantile");
    } else if (has("ecdf")) {
      svg = report::render_ecdf_svg(t, "ECDF of SBC quantiles");
    } else if (has("z_mean") && has("z_sd") && t.header.size() == 2) {
      report::ScatterOptions opt;
      opt.crosshair = std::pair{0.0, 1.0};
      svg = report::render_scatter_svg(t, "z_mean", "z_sd", "Estimated shift and scale", opt);
    } else if (has("mean_a") && has("sd_b")) {
      report::ScatterOptions opt;
      opt.diagonal = true;
      auto base = target;
      base.replace_filename(stem + "_mean.svg");
      report::write_text(base, report::render_scatter_svg(t, "mean_a", "mean_b", "Posterior mean", opt));
      base.replace_filename(stem + "_sd.svg");
      report::write_text(base, report::render_scatter_svg(t, "sd_a", "sd_b", "Posterior sd", opt));
      rendered += 2;
      continue;
    } else {
      continue;
    }
    report::write_text(target, svg);
    ++rendered;
  }
  std::printf("rendered %zu figure(s) into %s\n", rendered, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation-based calibration checking and posterior recalibration"};
  app.require_subcommand(1);
  Flags flags;

  auto* sbc = app.add_subcommand("sbc", "run SBC replications and write diagnostics");
  add_common(sbc, flags);
  sbc->add_option("--mode", flags.mode, "prior or posterior")->check(CLI::IsMember({"prior", "posterior"}));
  sbc->add_option("--y-d", flags.y_d, "observed data for posterior mode (comma-separated)");
  sbc->add_option("--alpha", flags.alpha, "interval levels, comma-separated");

  auto* cal = app.add_subcommand("calibrate", "estimate a recalibration and evaluate its coverage");
  add_common(cal, flags);
  cal->add_option("--mode", flags.mode, "prior or posterior")->check(CLI::IsMember({"prior", "posterior"}));
  cal->add_option("--y-d", flags.y_d, "observed data for posterior mode (comma-separated)");
  cal->add_option("--method", flags.method, "nominal, zscore or locscale")
      ->check(CLI::IsMember({"nominal", "zscore", "locscale"}));
  cal->add_option("--alpha", flags.alpha, "interval levels, comma-separated");
  cal->add_option("--grid", flags.grid, "scale grid LO:STEP:HI");
  cal->add_flag("--in-sample", flags.in_sample, "evaluate on the fitting replications");

  std::string adjustment_path, draws_path;
  auto* apply = app.add_subcommand("apply", "apply an adjustment record to posterior draws");
  add_common(apply, flags);
  apply->add_option("--adjustment", adjustment_path, "adjustment record")->required();
  apply->add_option("--draws", draws_path, "CSV of draws, one row per posterior");
  apply->add_option("--y-d", flags.y_d, "observed data to fit when no draws file is given");

  double sigma = 1.0, y = 0.0;
  std::string y_list;
  auto* ana = app.add_subcommand("analytic", "closed-form laws for the Gaussian models");
  ana->require_subcommand(1);
  auto* a_post = ana->add_subcommand("posterior", "normal-normal posterior");
  auto* a_z = ana->add_subcommand("zlaw", "posterior-mode z-score law");
  auto* a_rec = ana->add_subcommand("recal-limit", "posterior-mode recalibration limit");
  for (auto* sub : {a_post, a_z, a_rec}) {
    sub->add_option("--sigma", sigma, "likelihood sd")->required();
    sub->add_option("--y", y, "observation")->required();
  }
  auto* a_conj = ana->add_subcommand("conjugate", "conjugate posterior from N observations");
  a_conj->add_option("--y", y_list, "observations, comma-separated")->required();

  std::string experiment_name;
  auto* exp = app.add_subcommand("experiment", "run a named end-to-end experiment");
  add_common(exp, flags);
  exp->add_option("name", experiment_name, "experiment name")->required();
  exp->add_option("--alpha", flags.alpha, "interval levels, comma-separated");
  exp->add_option("--grid", flags.grid, "scale grid LO:STEP:HI");
  exp->add_flag("--in-sample", flags.in_sample, "evaluate on the fitting replications");

  std::string bundle;
  auto* rep = app.add_subcommand("report", "re-render figures of a bundle from its CSV files");
  rep->add_option("bundle", bundle, "bundle directory")->required();
  rep->add_option("--out", flags.out, "output directory (default: the bundle)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*sbc) return cmd_sbc(flags);
    if (*cal) return cmd_calibrate(flags);
    if (*apply) return cmd_apply(flags, adjustment_path, draws_path);
    if (*ana) {
      if (*a_post) print_law(analytic::normal_normal_posterior(y, sigma));
      if (*a_z) print_law(analytic::posterior_mode_z_law(y, sigma));
      if (*a_rec) print_law(analytic::posterior_recalibration_limit(y, sigma));
      if (*a_conj) print_law(analytic::conjugate_posterior(KeyValueConfig::parse_reals("y", y_list)));
      return 0;
    }
    if (*exp) return cmd_experiment(flags, experiment_name);
    if (*rep) return cmd_report(flags, bundle);
  } catch (const RunAborted& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAborted;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
