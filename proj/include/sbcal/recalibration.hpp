#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rng.hpp"
#include "sbc.hpp"
#include "stats.hpp"

namespace sbcal {

enum class AdjustmentKind { scale_only, location_scale };

inline const char* to_string(AdjustmentKind k) {
  return k == AdjustmentKind::scale_only ? "scale_only" : "location_scale";
}

/// Affine recalibration of a row of draws with mean m and sd s:
///   d -> m + scale * (d - m) + shift_coefficient * s.
/// The shift is always zero for scale_only adjustments.
struct Adjustment {
  AdjustmentKind kind = AdjustmentKind::scale_only;
  double scale = 1.0;
  double shift_coefficient = 0.0;
  KeyValues provenance;

  static Adjustment identity() { return {}; }

  void validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale))
      throw InvalidArgument("adjustment scale must be positive and finite");
    if (!std::isfinite(shift_coefficient))
      throw InvalidArgument("adjustment shift must be finite");
    if (kind == AdjustmentKind::scale_only && shift_coefficient != 0.0)
      throw InvalidArgument("scale_only adjustment cannot carry a shift");
  }
};

inline std::vector<double> apply_adjustment(std::span<const double> draws, double mean, double sd,
                                            const Adjustment& adj) {
  adj.validate();
  if (sd < 0.0) throw InvalidArgument("apply_adjustment: negative sd");
  const double shift = adj.kind == AdjustmentKind::location_scale ? adj.shift_coefficient * sd : 0.0;
  if (adj.scale == 1.0 && shift == 0.0) return {draws.begin(), draws.end()};
  std::vector<double> out(draws.size());
  for (std::size_t s = 0; s < draws.size(); ++s)
    out[s] = mean + adj.scale * (draws[s] - mean) + shift;
  return out;
}

/// Applies `adj` to every row of `reps` and recomputes the row summaries from
/// the adjusted draws.
inline ReplicationSet adjust_replications(const ReplicationSet& reps, const Adjustment& adj) {
  if (!reps.has_draws()) throw InvalidArgument("adjust_replications: set has no draws");
  ReplicationSet out = reps;
  for (std::size_t l = 0; l < reps.size(); ++l) {
    const auto adjusted = apply_adjustment(reps.row(l), reps.post_mean[l], reps.post_sd[l], adj);
    std::copy(adjusted.begin(), adjusted.end(),
              out.draws.begin() + static_cast<std::ptrdiff_t>(l * reps.draws_per_replication));
    const double m = mean(adjusted);
    out.post_mean[l] = m;
    out.post_sd[l] = population_sd(adjusted, m);
    out.rank_quantiles[l] = rank_quantile(reps.theta_true[l], adjusted);
  }
  return out;
}

namespace detail {

inline std::vector<Interval> raw_intervals(const ReplicationSet& reps, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  if (!reps.has_draws()) throw InvalidArgument("coverage needs a replication set with draws");
  std::vector<Interval> out(reps.size());
  for (std::size_t l = 0; l < reps.size(); ++l) out[l] = central_interval(reps.row(l), alpha);
  return out;
}

// Quantiles commute with increasing affine maps, so adjusted intervals are
// affine images of the raw ones.
inline double coverage_from_intervals(const ReplicationSet& reps, std::span<const Interval> raw,
                                      double scale, double shift_coefficient) {
  std::size_t hit = 0;
  for (std::size_t l = 0; l < reps.size(); ++l) {
    const double m = reps.post_mean[l];
    const double c = shift_coefficient * reps.post_sd[l];
    const Interval adj{m + scale * (raw[l].lo - m) + c, m + scale * (raw[l].hi - m) + c};
    hit += adj.contains(reps.theta_true[l]) ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(reps.size());
}

}  // namespace detail

inline double empirical_coverage(const ReplicationSet& reps, double alpha, const Adjustment& adj) {
  adj.validate();
  if (reps.size() == 0) throw InvalidArgument("empirical_coverage: empty replication set");
  const auto raw = detail::raw_intervals(reps, alpha);
  const double shift = adj.kind == AdjustmentKind::location_scale ? adj.shift_coefficient : 0.0;
  return detail::coverage_from_intervals(reps, raw, adj.scale, shift);
}

inline double empirical_coverage(const ReplicationSet& reps, double alpha, double scale) {
  Adjustment adj;
  adj.scale = scale;
  return empirical_coverage(reps, alpha, adj);
}

/// Grid lo, lo + step, ..., hi (inclusive, within rounding).
struct ScaleGrid {
  double lo = 0.5;
  double step = 0.01;
  double hi = 5.0;

  std::vector<double> values() const {
    if (!(lo > 0.0) || !(step > 0.0) || !(hi >= lo) || !std::isfinite(hi))
      throw InvalidArgument("grid must satisfy 0 < lo <= hi with positive step");
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = lo + static_cast<double>(i) * step;
    return out;
  }

  /// Parses "LO:STEP:HI".
  static ScaleGrid parse(const std::string& text) {
    ScaleGrid g;
    double* fields[] = {&g.lo, &g.step, &g.hi};
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
      const auto end = i < 2 ? text.find(':', pos) : text.size();
      if (end == std::string::npos) throw InvalidArgument("grid must be LO:STEP:HI, got '" + text + "'");
      const auto* first = text.data() + pos;
      const auto* last = text.data() + end;
      auto [ptr, ec] = std::from_chars(first, last, *fields[i]);
      if (ec != std::errc() || ptr != last)
        throw InvalidArgument("grid must be LO:STEP:HI, got '" + text + "'");
      pos = end + 1;
    }
    g.values();
    return g;
  }

  std::string to_string() const {
    return format_real(lo) + ":" + format_real(step) + ":" + format_real(hi);
  }
};

namespace detail {
inline KeyValues adjustment_provenance(const ReplicationSet& reps, const std::string& method) {
  KeyValues kv = reps.provenance;
  kv.emplace_back("method", method);
  kv.emplace_back("mode", to_string(reps.mode));
  kv.emplace_back("seed", std::to_string(reps.seed));
  kv.emplace_back("L", std::to_string(reps.size()));
  kv.emplace_back("S", std::to_string(reps.draws_per_replication));
  return kv;
}
}  // namespace detail

/// Grid search for the width scale whose empirical coverage is closest to
/// 1 - alpha. Ties go to the smallest scale.
inline Adjustment nominal_coverage_search(const ReplicationSet& reps, double alpha,
                                          std::span<const double> grid) {
  if (grid.empty()) throw InvalidArgument("nominal_coverage_search: empty grid");
  if (reps.size() == 0) throw InvalidArgument("nominal_coverage_search: empty replication set");
  std::vector<double> ks(grid.begin(), grid.end());
  for (double k : ks) {
    if (!(k > 0.0) || !std::isfinite(k))
      throw InvalidArgument("nominal_coverage_search: grid values must be positive");
  }
  std::sort(ks.begin(), ks.end());
  const auto raw = detail::raw_intervals(reps, alpha);
  double best_k = ks.front();
  double best_obj = INFINITY;
  for (double k : ks) {
    const double diff = detail::coverage_from_intervals(reps, raw, k, 0.0) - (1.0 - alpha);
    const double obj = diff * diff;
    if (obj < best_obj) {
      best_obj = obj;
      best_k = k;
    }
  }
  Adjustment adj;
  adj.scale = best_k;
  adj.provenance = detail::adjustment_provenance(reps, "nominal");
  adj.provenance.emplace_back("alpha", format_real(alpha));
  return adj;
}

namespace detail {
inline std::pair<double, double> z_moments(const ReplicationSet& reps) {
  if (reps.size() < 2) throw InvalidArgument("z-score methods need at least two replications");
  const auto z = z_scores(reps);
  const double m = mean(z);
  const double s = population_sd(z, m);
  if (!(s > 0.0)) throw DegeneratePosterior("all z-scores are equal; cannot estimate a scale");
  return {m, s};
}
}  // namespace detail

/// Width scale k = s_z, the sd of the z-scores across replications.
inline Adjustment zscore_scale_estimate(const ReplicationSet& reps) {
  const auto [m, s] = detail::z_moments(reps);
  Adjustment adj;
  adj.scale = s;
  adj.provenance = detail::adjustment_provenance(reps, "zscore");
  return adj;
}

/// Scale s_z and shift zbar; the adjusted z-scores have mean 0 and sd 1 on
/// the fitting set.
inline Adjustment location_scale_estimate(const ReplicationSet& reps) {
  const auto [m, s] = detail::z_moments(reps);
  Adjustment adj;
  adj.kind = AdjustmentKind::location_scale;
  adj.scale = s;
  adj.shift_coefficient = m;
  adj.provenance = detail::adjustment_provenance(reps, "locscale");
  return adj;
}

struct CoverageRow {
  double alpha = 0.0;
  double scale = 1.0;
  double shift_coefficient = 0.0;
  double coverage = 0.0;
};

struct CoverageTable {
  std::vector<CoverageRow> rows;
};

inline CoverageTable evaluate_adjustment(const ReplicationSet& reps, const Adjustment& adj,
                                         std::span<const double> alphas) {
  CoverageTable table;
  for (double a : alphas) {
    const double shift = adj.kind == AdjustmentKind::location_scale ? adj.shift_coefficient : 0.0;
    table.rows.push_back({a, adj.scale, shift, empirical_coverage(reps, a, adj)});
  }
  return table;
}

/// Per-alpha adjustments (nominal coverage method), each evaluated at its own alpha.
inline CoverageTable evaluate_adjustments(
    const ReplicationSet& reps, std::span<const std::pair<double, Adjustment>> per_alpha) {
  CoverageTable table;
  for (const auto& [a, adj] : per_alpha) {
    const double shift = adj.kind == AdjustmentKind::location_scale ? adj.shift_coefficient : 0.0;
    table.rows.push_back({a, adj.scale, shift, empirical_coverage(reps, a, adj)});
  }
  return table;
}

struct ShiftScale {
  double z_mean = 0.0;
  double z_sd = 1.0;
};

/// Repeats the whole location-scale estimation R times with independent seeds.
inline std::vector<ShiftScale> replicate_adjustment_distribution(
    const GenerativeModel& model, const PosteriorSampler& sampler,
    const std::optional<PosteriorReference>& posterior, std::size_t outer, std::size_t n_replications,
    std::size_t n_draws, std::uint64_t seed, const RunOptions& options = {}) {
  if (outer < 1) throw InvalidArgument("replicate_adjustment_distribution: R must be positive");
  RunOptions inner = options;
  inner.keep_draws = false;
  inner.keep_datasets = false;
  std::vector<ShiftScale> out;
  out.reserve(outer);
  const std::uint64_t base = derive_seed(seed, "outer");
  for (std::size_t r = 0; r < outer; ++r) {
    const auto reps = run_replications(model, sampler, n_replications, n_draws, posterior,
                                       derive_seed(base, r), inner);
    const auto adj = location_scale_estimate(reps);
    out.push_back({adj.shift_coefficient, adj.scale});
  }
  return out;
}

}  // namespace sbcal
