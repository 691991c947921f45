#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "recalibration.hpp"
#include "sbc.hpp"

namespace sbcal::report {

namespace fs = std::filesystem;

/// Numeric table with a header row. Every figure is rendered from one of
/// these, and the same table is written next to it as CSV.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw InvalidArgument("csv table has no column '" + name + "'");
  }
  bool operator==(const CsvTable&) const = default;
};

inline std::string to_csv(const CsvTable& t) {
  std::string out;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i) out += ',';
    out += t.header[i];
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_real(row[i]);
    }
    out += '\n';
  }
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("write failed for " + path.string());
}

inline void write_csv(const fs::path& path, const CsvTable& t) { write_text(path, to_csv(t)); }

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("csv: missing header");
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.header.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw InvalidArgument("csv: non-numeric cell '" + cell + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline CsvTable read_csv(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str());
}

inline void write_key_values(const fs::path& path, const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  write_text(path, out);
}

// ---------------------------------------------------------------------------
// SVG rendering

namespace detail {

inline constexpr double kWidth = 480.0;
inline constexpr double kHeight = 360.0;
inline constexpr double kMargin = 50.0;

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kWidth - 2 * kMargin); }
  double py(double y) const {
    return kHeight - kMargin - (y - y0) / (y1 - y0) * (kHeight - 2 * kMargin);
  }
};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string svg_open(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
         "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" +
         title + "</text>\n";
}

inline std::string svg_axes(const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  std::string s;
  s += "<line x1=\"" + num(kMargin) + "\" y1=\"" + num(kHeight - kMargin) + "\" x2=\"" +
       num(kWidth - kMargin) + "\" y2=\"" + num(kHeight - kMargin) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(kMargin) + "\" y1=\"" + num(kMargin) + "\" x2=\"" + num(kMargin) +
       "\" y2=\"" + num(kHeight - kMargin) + "\" stroke=\"black\"/>\n";
  s += "<text x=\"" + num(kMargin) + "\" y=\"" + num(kHeight - kMargin + 16) +
       "\" font-size=\"10\">" + num(f.x0) + "</text>\n";
  s += "<text x=\"" + num(kWidth - kMargin) + "\" y=\"" + num(kHeight - kMargin + 16) +
       "\" text-anchor=\"end\" font-size=\"10\">" + num(f.x1) + "</text>\n";
  s += "<text x=\"" + num(kMargin - 4) + "\" y=\"" + num(kHeight - kMargin) +
       "\" text-anchor=\"end\" font-size=\"10\">" + num(f.y0) + "</text>\n";
  s += "<text x=\"" + num(kMargin - 4) + "\" y=\"" + num(kMargin + 8) +
       "\" text-anchor=\"end\" font-size=\"10\">" + num(f.y1) + "</text>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"" + num(kHeight - 12) +
       "\" text-anchor=\"middle\" font-size=\"12\">" + xlabel + "</text>\n";
  s += "<text x=\"14\" y=\"" + num(kHeight / 2) + "\" transform=\"rotate(-90 14 " +
       num(kHeight / 2) + ")\" text-anchor=\"middle\" font-size=\"12\">" + ylabel + "</text>\n";
  return s;
}

inline std::string svg_line(const Frame& f, double xa, double ya, double xb, double yb,
                            const std::string& style) {
  return "<line x1=\"" + num(f.px(xa)) + "\" y1=\"" + num(f.py(ya)) + "\" x2=\"" + num(f.px(xb)) +
         "\" y2=\"" + num(f.py(yb)) + "\" " + style + "/>\n";
}

inline std::pair<double, double> padded_range(double lo, double hi) {
  if (!(hi > lo)) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace detail

/// Bar chart from columns (bin_lo, bin_hi, count, expected); the dashed line
/// marks the flat-uniform expectation.
inline std::string render_histogram_svg(const CsvTable& t, const std::string& title,
                                        const std::string& xlabel) {
  const auto c_lo = t.column("bin_lo"), c_hi = t.column("bin_hi"), c_n = t.column("count"),
             c_e = t.column("expected");
  if (t.rows.empty()) throw InvalidArgument("histogram: no bins");
  double ymax = 0.0;
  for (const auto& r : t.rows) ymax = std::max({ymax, r[c_n], r[c_e]});
  const detail::Frame f{t.rows.front()[c_lo], t.rows.back()[c_hi], 0.0, ymax > 0 ? 1.1 * ymax : 1.0};
  std::string s = detail::svg_open(title) + detail::svg_axes(f, xlabel, "count");
  for (const auto& r : t.rows) {
    const double x = f.px(r[c_lo]);
    const double w = f.px(r[c_hi]) - x;
    const double y = f.py(r[c_n]);
    s += "<rect x=\"" + detail::num(x) + "\" y=\"" + detail::num(y) + "\" width=\"" +
         detail::num(w) + "\" height=\"" + detail::num(f.py(0.0) - y) +
         "\" fill=\"steelblue\" stroke=\"white\"/>\n";
  }
  for (const auto& r : t.rows) {
    s += detail::svg_line(f, r[c_lo], r[c_e], r[c_hi], r[c_e],
                          "stroke=\"black\" stroke-dasharray=\"4 3\"");
  }
  return s + "</svg>\n";
}

/// Step plot of columns (x, ecdf) with the uniform CDF diagonal.
inline std::string render_ecdf_svg(const CsvTable& t, const std::string& title) {
  const auto cx = t.column("x"), cy = t.column("ecdf");
  const detail::Frame f{0.0, 1.0, 0.0, 1.0};
  std::string s = detail::svg_open(title) + detail::svg_axes(f, "quantile", "ECDF");
  s += detail::svg_line(f, 0, 0, 1, 1, "stroke=\"gray\" stroke-dasharray=\"4 3\"");
  std::string pts;
  double prev_y = 0.0;
  for (const auto& r : t.rows) {
    pts += detail::num(f.px(r[cx])) + "," + detail::num(f.py(prev_y)) + " ";
    pts += detail::num(f.px(r[cx])) + "," + detail::num(f.py(r[cy])) + " ";
    prev_y = r[cy];
  }
  pts += detail::num(f.px(1.0)) + "," + detail::num(f.py(prev_y));
  s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"steelblue\"/>\n";
  return s + "</svg>\n";
}

struct ScatterOptions {
  std::optional<std::pair<double, double>> crosshair;
  bool diagonal = false;
  std::optional<double> reference_slope;  // line through the origin
};

inline std::string render_scatter_svg(const CsvTable& t, const std::string& xcol,
                                      const std::string& ycol, const std::string& title,
                                      const ScatterOptions& opt = {}) {
  const auto cx = t.column(xcol), cy = t.column(ycol);
  if (t.rows.empty()) throw InvalidArgument("scatter: no points");
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& r : t.rows) {
    x0 = std::min(x0, r[cx]);
    x1 = std::max(x1, r[cx]);
    y0 = std::min(y0, r[cy]);
    y1 = std::max(y1, r[cy]);
  }
  if (opt.crosshair) {
    x0 = std::min(x0, opt.crosshair->first);
    x1 = std::max(x1, opt.crosshair->first);
    y0 = std::min(y0, opt.crosshair->second);
    y1 = std::max(y1, opt.crosshair->second);
  }
  if (opt.diagonal) {
    x0 = y0 = std::min(x0, y0);
    x1 = y1 = std::max(x1, y1);
  }
  const auto [px0, px1] = detail::padded_range(x0, x1);
  const auto [py0, py1] = detail::padded_range(y0, y1);
  const detail::Frame f{px0, px1, py0, py1};
  std::string s = detail::svg_open(title) + detail::svg_axes(f, xcol, ycol);
  if (opt.crosshair) {
    const auto [cxv, cyv] = *opt.crosshair;
    s += detail::svg_line(f, cxv, py0, cxv, py1, "stroke=\"gray\" stroke-dasharray=\"4 3\"");
    s += detail::svg_line(f, px0, cyv, px1, cyv, "stroke=\"gray\" stroke-dasharray=\"4 3\"");
  }
  if (opt.diagonal) s += detail::svg_line(f, px0, px0, px1, px1, "stroke=\"gray\"");
  if (opt.reference_slope) {
    const double k = *opt.reference_slope;
    s += detail::svg_line(f, px0, k * px0, px1, k * px1, "stroke=\"gray\" stroke-dasharray=\"2 2\"");
  }
  for (const auto& r : t.rows) {
    s += "<circle cx=\"" + detail::num(f.px(r[cx])) + "\" cy=\"" + detail::num(f.py(r[cy])) +
         "\" r=\"2.5\" fill=\"steelblue\"/>\n";
  }
  return s + "</svg>\n";
}

// ---------------------------------------------------------------------------
// Tables

struct HistogramSpec {
  std::size_t n_bins = 20;
  std::optional<std::pair<double, double>> range;  // unset: derived from the data

  void validate() const {
    if (n_bins < 2) throw InvalidArgument("histogram needs at least two bins");
    if (range && !(range->second > range->first))
      throw InvalidArgument("histogram range must be increasing");
  }
};

/// Columns (bin_lo, bin_hi, count, expected), with `expected` = L / n_bins.
/// Values on the upper edge fall in the last bin.
inline CsvTable histogram_table(std::span<const double> values, const HistogramSpec& spec) {
  spec.validate();
  if (values.empty()) throw InvalidArgument("histogram of empty sample");
  double lo, hi;
  if (spec.range) {
    std::tie(lo, hi) = *spec.range;
  } else {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    std::tie(lo, hi) = detail::padded_range(*mn, *mx);
  }
  std::vector<std::size_t> counts(spec.n_bins, 0);
  const double width = (hi - lo) / static_cast<double>(spec.n_bins);
  for (double v : values) {
    auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / width));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(spec.n_bins) - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  CsvTable t{{"bin_lo", "bin_hi", "count", "expected"}, {}};
  const double expected = static_cast<double>(values.size()) / static_cast<double>(spec.n_bins);
  for (std::size_t b = 0; b < spec.n_bins; ++b) {
    t.rows.push_back({lo + static_cast<double>(b) * width,
                      b + 1 == spec.n_bins ? hi : lo + static_cast<double>(b + 1) * width,
                      static_cast<double>(counts[b]), expected});
  }
  return t;
}

/// Columns (x, ecdf) starting at (0, 0) and ending at ecdf = 1.
inline CsvTable ecdf_table(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("ecdf of empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  CsvTable t{{"x", "ecdf"}, {{0.0, 0.0}}};
  const auto n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) t.rows.push_back({v[i], static_cast<double>(i + 1) / n});
  return t;
}

/// Columns (nominal, scale, shift, adjusted_coverage) ordered by descending 1 - alpha.
inline CsvTable coverage_csv(const CoverageTable& table) {
  if (table.rows.empty()) throw InvalidArgument("coverage table is empty");
  auto rows = table.rows;
  std::stable_sort(rows.begin(), rows.end(),
                   [](const CoverageRow& a, const CoverageRow& b) { return a.alpha < b.alpha; });
  CsvTable t{{"nominal", "scale", "shift", "adjusted_coverage"}, {}};
  for (const auto& r : rows) t.rows.push_back({1.0 - r.alpha, r.scale, r.shift_coefficient, r.coverage});
  return t;
}

// ---------------------------------------------------------------------------
// Bundles: each emit_* writes a CSV and, where there is a figure, an SVG
// rendered from that CSV table. Returns the paths written.

using Paths = std::vector<fs::path>;

inline Paths emit_table_and_figure(const fs::path& dir, const std::string& stem, const CsvTable& t,
                                   const std::string& svg) {
  const auto csv = dir / (stem + ".csv");
  const auto fig = dir / (stem + ".svg");
  write_csv(csv, t);
  write_text(fig, svg);
  return {csv, fig};
}

inline Paths emit_quantile_histogram(const SbcDiagnostics& diag, HistogramSpec spec,
                                     const fs::path& dir, const std::string& stem = "quantile_hist") {
  if (diag.quantiles.empty()) throw InvalidArgument("quantile histogram needs L >= 1");
  if (!spec.range) spec.range = std::pair{0.0, 1.0};
  const auto t = histogram_table(diag.quantiles, spec);
  return emit_table_and_figure(dir, stem, t, render_histogram_svg(t, "SBC quantiles", "quantile"));
}

inline Paths emit_z_histogram(const SbcDiagnostics& diag, const HistogramSpec& spec,
                              const fs::path& dir, const std::string& stem = "z_hist") {
  const auto t = histogram_table(diag.z_scores, spec);
  return emit_table_and_figure(dir, stem, t, render_histogram_svg(t, "z-scores", "z"));
}

inline Paths emit_quantile_ecdf(const SbcDiagnostics& diag, const fs::path& dir,
                                const std::string& stem = "quantile_ecdf") {
  const auto t = ecdf_table(diag.quantiles);
  return emit_table_and_figure(dir, stem, t, render_ecdf_svg(t, "ECDF of SBC quantiles"));
}

inline CsvTable adjustment_scatter_table(std::span<const ShiftScale> pairs) {
  CsvTable t{{"z_mean", "z_sd"}, {}};
  for (const auto& p : pairs) t.rows.push_back({p.z_mean, p.z_sd});
  return t;
}

inline Paths emit_adjustment_scatter(std::span<const ShiftScale> pairs, const fs::path& dir,
                                     const std::string& stem = "adjustment_scatter") {
  if (pairs.empty()) throw InvalidArgument("adjustment scatter needs at least one pair");
  const auto t = adjustment_scatter_table(pairs);
  ScatterOptions opt;
  opt.crosshair = std::pair{0.0, 1.0};
  return emit_table_and_figure(dir, stem, t,
                               render_scatter_svg(t, "z_mean", "z_sd", "Estimated shift and scale", opt));
}

inline Paths emit_coverage_table(const CoverageTable& table, const fs::path& dir,
                                 const std::string& stem = "coverage") {
  const auto csv = dir / (stem + ".csv");
  write_csv(csv, coverage_csv(table));
  return {csv};
}

inline CsvTable posterior_comparison_table(const ReplicationSet& a, const ReplicationSet& b) {
  if (a.size() != b.size()) throw InvalidArgument("posterior comparison: replication counts differ");
  if (a.replication_index != b.replication_index)
    throw InvalidArgument("posterior comparison: replications are not paired");
  CsvTable t{{"replication", "mean_a", "mean_b", "sd_a", "sd_b"}, {}};
  for (std::size_t l = 0; l < a.size(); ++l) {
    t.rows.push_back({static_cast<double>(a.replication_index[l]), a.post_mean[l], b.post_mean[l],
                      a.post_sd[l], b.post_sd[l]});
  }
  return t;
}

/// x axis: set `a`, y axis: set `b`.
inline Paths emit_posterior_comparison(const ReplicationSet& a, const ReplicationSet& b,
                                       const fs::path& dir, const std::string& stem = "posterior_comparison") {
  const auto t = posterior_comparison_table(a, b);
  const auto csv = dir / (stem + ".csv");
  write_csv(csv, t);
  ScatterOptions opt;
  opt.diagonal = true;
  const auto f_mean = dir / (stem + "_mean.svg");
  const auto f_sd = dir / (stem + "_sd.svg");
  write_text(f_mean, render_scatter_svg(t, "mean_a", "mean_b", "Posterior mean", opt));
  write_text(f_sd, render_scatter_svg(t, "sd_a", "sd_b", "Posterior sd", opt));
  return {csv, f_mean, f_sd};
}

// ---------------------------------------------------------------------------
// Replication sets and diagnostics on disk

inline Paths write_replication_set(const ReplicationSet& reps, const fs::path& dir, bool with_draws) {
  Paths out;
  KeyValues meta{{"mode", to_string(reps.mode)},
                 {"L", std::to_string(reps.size())},
                 {"S", std::to_string(reps.draws_per_replication)},
                 {"seed", std::to_string(reps.seed)},
                 {"scalar", reps.scalar_label},
                 {"failed", std::to_string(reps.failed.size())}};
  if (reps.observed) meta.emplace_back("y_d", format_list(reps.observed->values));
  for (const auto& kv : reps.provenance) meta.push_back(kv);
  write_key_values(dir / "meta.txt", meta);
  out.push_back(dir / "meta.txt");

  CsvTable theta{{"replication", "theta"}, {}};
  CsvTable summary{{"replication", "mean", "sd"}, {}};
  for (std::size_t l = 0; l < reps.size(); ++l) {
    const auto idx = static_cast<double>(reps.replication_index[l]);
    theta.rows.push_back({idx, reps.theta_true[l]});
    summary.rows.push_back({idx, reps.post_mean[l], reps.post_sd[l]});
  }
  write_csv(dir / "theta_true.csv", theta);
  write_csv(dir / "post_summary.csv", summary);
  out.push_back(dir / "theta_true.csv");
  out.push_back(dir / "post_summary.csv");
  if (with_draws && reps.has_draws()) {
    CsvTable draws;
    for (std::size_t s = 0; s < reps.draws_per_replication; ++s)
      draws.header.push_back("s" + std::to_string(s + 1));
    for (std::size_t l = 0; l < reps.size(); ++l) {
      const auto r = reps.row(l);
      draws.rows.emplace_back(r.begin(), r.end());
    }
    write_csv(dir / "draws.csv", draws);
    out.push_back(dir / "draws.csv");
  }
  return out;
}

inline Paths write_diagnostics(const SbcDiagnostics& diag, const fs::path& dir) {
  CsvTable per{{"q", "z"}, {}};
  for (std::size_t l = 0; l < diag.quantiles.size(); ++l)
    per.rows.push_back({diag.quantiles[l], diag.z_scores[l]});
  const double n = static_cast<double>(diag.quantiles.size());
  CsvTable summary{{"L", "z_mean", "z_sd", "ks_distance", "ks_scaled"},
                   {{n, diag.z_mean, diag.z_sd, diag.ks_distance, diag.ks_distance * std::sqrt(n)}}};
  CsvTable cov{{"alpha", "coverage"}, {}};
  for (const auto& [a, c] : diag.coverage) cov.rows.push_back({a, c});
  write_csv(dir / "diagnostics.csv", per);
  write_csv(dir / "summary.csv", summary);
  write_csv(dir / "diagnostic_coverage.csv", cov);
  return {dir / "diagnostics.csv", dir / "summary.csv", dir / "diagnostic_coverage.csv"};
}

}  // namespace sbcal::report
