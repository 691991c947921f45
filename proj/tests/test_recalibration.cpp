#include <gtest/gtest.h>

#include "sbcal/recalibration.hpp"

using namespace sbcal;

namespace {

ReplicationSet conjugate_set(double factor, std::size_t L, std::size_t S, std::uint64_t seed) {
  auto model = std::make_shared<ConjugateNormalModel>(4);
  auto exact = std::make_shared<ExactConjugateSampler>(model);
  RunOptions ro;
  ro.workers = 4;
  return run_replications(*model, *narrow(exact, factor), L, S, std::nullopt, seed, ro);
}

}  // namespace

TEST(ApplyAdjustment, ScaleAboutMean) {
  Adjustment k2;
  k2.scale = 2.0;
  const auto out = apply_adjustment(std::vector<double>{0.0, 2.0}, 1.0, 1.0, k2);
  EXPECT_DOUBLE_EQ(out[0], -1.0);
  EXPECT_DOUBLE_EQ(out[1], 3.0);
}

TEST(ApplyAdjustment, LocationScale) {
  Adjustment a;
  a.kind = AdjustmentKind::location_scale;
  a.scale = 2.0;
  a.shift_coefficient = 0.5;
  const auto out = apply_adjustment(std::vector<double>{0.0, 2.0}, 1.0, 1.0, a);
  EXPECT_DOUBLE_EQ(out[0], -0.5);
  EXPECT_DOUBLE_EQ(out[1], 3.5);
}

TEST(ApplyAdjustment, IdentityAndValidation) {
  const std::vector<double> d{0.3, -1.2, 4.0};
  EXPECT_EQ(apply_adjustment(d, mean(d), population_sd(d), Adjustment::identity()), d);
  Adjustment bad;
  bad.scale = 0.0;
  EXPECT_THROW(apply_adjustment(d, 0, 1, bad), InvalidArgument);
  bad.scale = -1.0;
  EXPECT_THROW(apply_adjustment(d, 0, 1, bad), InvalidArgument);
  Adjustment shifted_scale_only;
  shifted_scale_only.shift_coefficient = 1.0;
  EXPECT_THROW(shifted_scale_only.validate(), InvalidArgument);
}

TEST(ApplyAdjustment, ScalesCompose) {
  const std::vector<double> d{0.3, -1.2, 4.0, 2.2};
  const double m = mean(d);
  Adjustment a, b, ab;
  a.scale = 1.7;
  b.scale = 0.4;
  ab.scale = 1.7 * 0.4;
  const auto first = apply_adjustment(d, m, population_sd(d), a);
  const auto twice = apply_adjustment(first, mean(first), population_sd(first), b);
  const auto once = apply_adjustment(d, m, population_sd(d), ab);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(twice[i], once[i], 1e-12);
}

TEST(ScaleGridTest, ValuesAndParse) {
  const auto g = ScaleGrid{}.values();
  EXPECT_EQ(g.size(), 451u);
  EXPECT_DOUBLE_EQ(g.front(), 0.5);
  EXPECT_NEAR(g.back(), 5.0, 1e-12);
  const auto p = ScaleGrid::parse("1:0.5:3");
  EXPECT_EQ(p.values().size(), 5u);
  EXPECT_THROW(ScaleGrid::parse("1:0.5"), InvalidArgument);
  EXPECT_THROW(ScaleGrid::parse("a:b:c"), InvalidArgument);
  EXPECT_THROW(ScaleGrid::parse("3:0.5:1"), InvalidArgument);
  EXPECT_THROW(ScaleGrid::parse("0:0.5:1"), InvalidArgument);
  EXPECT_EQ(ScaleGrid::parse(p.to_string()).values(), p.values());
}

TEST(Coverage, AffineIntervalsMatchRecomputation) {
  const auto reps = conjugate_set(3.0, 100, 200, 4);
  Adjustment a;
  a.kind = AdjustmentKind::location_scale;
  a.scale = 2.4;
  a.shift_coefficient = -0.3;
  const auto adjusted = adjust_replications(reps, a);
  for (double alpha : default_alphas())
    EXPECT_DOUBLE_EQ(empirical_coverage(reps, alpha, a), row_coverage(adjusted, alpha));
}

TEST(Coverage, MonotoneInScale) {
  const auto reps = conjugate_set(3.0, 300, 200, 4);
  double prev = -1.0;
  for (double k : ScaleGrid{0.5, 0.25, 5.0}.values()) {
    const double c = empirical_coverage(reps, 0.1, k);
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(Coverage, Errors) {
  const auto reps = conjugate_set(1.0, 10, 10, 1);
  EXPECT_THROW(empirical_coverage(reps, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(empirical_coverage(reps, 1.5, 1.0), InvalidArgument);
  EXPECT_THROW(nominal_coverage_search(reps, 0.1, std::vector<double>{}), InvalidArgument);
}

TEST(NominalSearch, TiesGoToSmallestScale) {
  // Two replications; every scale at or above the one covering both gives
  // coverage 1.
  ReplicationSet reps;
  reps.draws_per_replication = 3;
  reps.replication_index = {0, 1};
  reps.theta_true = {0.0, 0.0};
  reps.draws = {-1, 0, 1, 1, 2, 3};
  reps.post_mean = {0, 2};
  reps.post_sd = {std::sqrt(2.0 / 3.0), std::sqrt(2.0 / 3.0)};
  reps.rank_quantiles = {1.0 / 3.0, 0.0};
  // Interval for alpha = 0.5 is mean +/- 0.5 * k, so row 2 is covered from k = 4.
  const auto adj = nominal_coverage_search(reps, 0.5, ScaleGrid{0.5, 0.5, 8.0}.values());
  // Target 0.5: coverage is 0.5 for every k < 4, so the smallest grid value wins.
  EXPECT_DOUBLE_EQ(adj.scale, 0.5);
  const auto full = nominal_coverage_search(reps, 0.01, ScaleGrid{0.5, 0.5, 8.0}.values());
  // Raw 99% half-width is 0.99, so row 2 needs k >= 2.02; first grid point is 2.5.
  EXPECT_DOUBLE_EQ(full.scale, 2.5);
}

TEST(NominalSearch, RecoversNarrowing) {
  const auto reps = conjugate_set(3.0, 500, 500, 12);
  for (double a : default_alphas()) {
    const auto adj = nominal_coverage_search(reps, a, ScaleGrid{}.values());
    EXPECT_NEAR(adj.scale, 3.0, 0.45) << "alpha " << a;
    EXPECT_EQ(adj.kind, AdjustmentKind::scale_only);
  }
}

TEST(ZScoreMethod, EqualsZSd) {
  const auto reps = conjugate_set(3.0, 300, 200, 5);
  const auto adj = zscore_scale_estimate(reps);
  EXPECT_DOUBLE_EQ(adj.scale, diagnostics(reps).z_sd);
  EXPECT_NEAR(adj.scale, 3.0, 0.35);
}

TEST(LocationScale, InSampleExact) {
  for (double f : {1.0, 3.0, 0.5}) {
    const auto reps = conjugate_set(f, 200, 100, 6);
    const auto adj = location_scale_estimate(reps);
    const auto d = diagnostics(adjust_replications(reps, adj));
    EXPECT_NEAR(d.z_mean, 0.0, 1e-10);
    EXPECT_NEAR(d.z_sd, 1.0, 1e-10);
  }
}

TEST(LocationScale, NeedsTwoReplications) {
  ReplicationSet reps;
  reps.draws_per_replication = 2;
  reps.replication_index = {0};
  reps.theta_true = {0.0};
  reps.post_mean = {0.0};
  reps.post_sd = {1.0};
  reps.rank_quantiles = {0.5};
  EXPECT_THROW(location_scale_estimate(reps), InvalidArgument);
  EXPECT_THROW(zscore_scale_estimate(reps), InvalidArgument);
}

TEST(Evaluate, IdentityGivesRawCoverage) {
  const auto reps = conjugate_set(1.0, 300, 200, 7);
  const auto t = evaluate_adjustment(reps, Adjustment::identity(), default_alphas());
  ASSERT_EQ(t.rows.size(), 4u);
  const auto d = diagnostics(reps);
  for (const auto& r : t.rows) {
    EXPECT_EQ(r.scale, 1.0);
    EXPECT_DOUBLE_EQ(r.coverage, d.coverage.at(r.alpha));
  }
}

TEST(ReplicateDistribution, CountAndSeeds) {
  auto model = std::make_shared<NormalNormalModel>(1.0);
  auto exact = std::make_shared<NormalNormalExactSampler>(model);
  const auto a = replicate_adjustment_distribution(*model, *exact, std::nullopt, 5, 50, 50, 3);
  const auto b = replicate_adjustment_distribution(*model, *exact, std::nullopt, 5, 50, 50, 3);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t r = 0; r < 5; ++r) {
    EXPECT_EQ(a[r].z_mean, b[r].z_mean);
    EXPECT_EQ(a[r].z_sd, b[r].z_sd);
  }
  EXPECT_NE(a[0].z_mean, a[1].z_mean);
  EXPECT_THROW(replicate_adjustment_distribution(*model, *exact, std::nullopt, 0, 50, 50, 3),
               InvalidArgument);
}
