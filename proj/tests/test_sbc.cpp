#include <gtest/gtest.h>

#include "sbcal/sbc.hpp"

using namespace sbcal;

namespace {

struct Conjugate {
  std::shared_ptr<ConjugateNormalModel> model = std::make_shared<ConjugateNormalModel>(4);
  std::shared_ptr<ExactConjugateSampler> exact = std::make_shared<ExactConjugateSampler>(model);
};

// Fails on replications whose first observation exceeds a threshold.
class FlakySampler final : public PosteriorSampler {
 public:
  FlakySampler(std::shared_ptr<const PosteriorSampler> inner, double threshold)
      : inner_(std::move(inner)), threshold_(threshold) {}
  std::string name() const override { return "flaky"; }
  FitResult fit(const Dataset& y, std::size_t n, Rng& rng) const override {
    if (y.values[0] > threshold_) throw Error("flaky failure");
    return inner_->fit(y, n, rng);
  }
  KeyValues config() const override { return {{"sampler", name()}}; }

 private:
  std::shared_ptr<const PosteriorSampler> inner_;
  double threshold_;
};

}  // namespace

TEST(RankQuantile, StrictlyBelow) {
  const std::vector<double> d{0.1, 0.2, 0.9, 1.0};
  EXPECT_DOUBLE_EQ(rank_quantile(0.5, d), 0.5);
  EXPECT_DOUBLE_EQ(rank_quantile(0.2, d), 0.25);
  EXPECT_DOUBLE_EQ(rank_quantile(-1.0, d), 0.0);
  EXPECT_DOUBLE_EQ(rank_quantile(2.0, d), 1.0);
  EXPECT_THROW(rank_quantile(0.0, std::vector<double>{}), InvalidArgument);
}

TEST(ZScore, Basic) {
  EXPECT_DOUBLE_EQ(z_score(3.0, 1.0, 2.0), 1.0);
  EXPECT_THROW(z_score(1.0, 0.0, 0.0), DegeneratePosterior);
}

TEST(Ks, KnownValues) {
  EXPECT_DOUBLE_EQ(ks_uniformity(std::vector<double>{0.5}), 0.5);
  std::vector<double> grid;
  const int L = 99;
  for (int i = 1; i <= L; ++i) grid.push_back(static_cast<double>(i) / (L + 1));
  EXPECT_NEAR(ks_uniformity(grid), 1.0 / (L + 1), 1e-12);
  EXPECT_DOUBLE_EQ(ks_uniformity(std::vector<double>{0.0, 0.0}), 1.0);
  EXPECT_THROW(ks_uniformity(std::vector<double>{}), InvalidArgument);
}

TEST(CentralInterval, Quantiles) {
  std::vector<double> d;
  for (int i = 0; i <= 100; ++i) d.push_back(i);
  const auto iv = central_interval(d, 0.1);
  EXPECT_DOUBLE_EQ(iv.lo, 5.0);
  EXPECT_DOUBLE_EQ(iv.hi, 95.0);
  EXPECT_TRUE(iv.contains(5.0));
  EXPECT_TRUE(iv.contains(95.0));
  EXPECT_FALSE(iv.contains(95.5));
  EXPECT_THROW(central_interval(d, 0.0), InvalidArgument);
  EXPECT_THROW(central_interval(d, 1.0), InvalidArgument);
}

TEST(RunReplications, ShapesAndProvenance) {
  Conjugate c;
  const auto reps = run_replications(*c.model, *c.exact, 50, 20, std::nullopt, 3);
  EXPECT_EQ(reps.size(), 50u);
  EXPECT_EQ(reps.draws.size(), 50u * 20u);
  EXPECT_EQ(reps.datasets.size(), 50u);
  EXPECT_EQ(reps.mode, Mode::prior);
  EXPECT_EQ(reps.scalar_label, "theta");
  EXPECT_NO_THROW(reps.validate());
  for (std::size_t l = 0; l < reps.size(); ++l) {
    EXPECT_EQ(reps.replication_index[l], l);
    EXPECT_DOUBLE_EQ(reps.rank_quantiles[l], rank_quantile(reps.theta_true[l], reps.row(l)));
  }
  EXPECT_THROW(run_replications(*c.model, *c.exact, 1, 20, std::nullopt, 3), InvalidArgument);
  EXPECT_THROW(run_replications(*c.model, *c.exact, 10, 1, std::nullopt, 3), InvalidArgument);
}

TEST(RunReplications, WorkerCountDoesNotMatter) {
  Conjugate c;
  RunOptions one, many;
  many.workers = 4;
  const auto a = run_replications(*c.model, *c.exact, 64, 30, std::nullopt, 99, one);
  const auto b = run_replications(*c.model, *c.exact, 64, 30, std::nullopt, 99, many);
  EXPECT_EQ(a.theta_true, b.theta_true);
  EXPECT_EQ(a.draws, b.draws);
  EXPECT_EQ(a.rank_quantiles, b.rank_quantiles);
  const auto d = run_replications(*c.model, *c.exact, 64, 30, std::nullopt, 100, one);
  EXPECT_NE(a.theta_true, d.theta_true);
}

TEST(RunReplications, PosteriorModeUsesReference) {
  auto model = std::make_shared<NormalNormalModel>(1.0);
  auto exact = std::make_shared<NormalNormalExactSampler>(model);
  const auto reps = run_replications(*model, *exact, 4000, 10, PosteriorReference{Dataset({1.0}), exact},
                                     5);
  EXPECT_EQ(reps.mode, Mode::posterior);
  ASSERT_TRUE(reps.observed);
  EXPECT_EQ(reps.observed->values, std::vector<double>{1.0});
  // theta^l are posterior draws given y = 1: N(0.5, 0.7071).
  EXPECT_NEAR(mean(reps.theta_true), 0.5, 0.04);
  EXPECT_NEAR(population_sd(reps.theta_true), std::sqrt(0.5), 0.03);
  EXPECT_THROW(run_replications(*model, *exact, 10, 10, PosteriorReference{Dataset({1.0, 2.0}), exact}, 5),
               InvalidArgument);
}

TEST(RunReplications, FailurePolicy) {
  Conjugate c;
  // Very rarely above 4.5: a few failures in 2000 replications stay under 1%.
  auto rare = std::make_shared<FlakySampler>(c.exact, 4.0);
  const auto reps = run_replications(*c.model, *rare, 2000, 5, std::nullopt, 1);
  EXPECT_LE(reps.failed.size(), 20u);
  EXPECT_EQ(reps.size() + reps.failed.size(), 2000u);
  for (auto l : reps.failed) {
    EXPECT_EQ(std::count(reps.replication_index.begin(), reps.replication_index.end(), l), 0);
  }
  auto common = std::make_shared<FlakySampler>(c.exact, 0.0);
  try {
    run_replications(*c.model, *common, 200, 5, std::nullopt, 1);
    FAIL() << "expected RunAborted";
  } catch (const RunAborted& e) {
    EXPECT_GT(e.failed.size(), 2u);
    EXPECT_NE(std::string(e.what()).find("flaky failure"), std::string::npos);
  }
}

TEST(RunReplications, MultipleScalarsShareReplications) {
  auto model = std::make_shared<EightSchoolsModel>();
  auto hmc = std::make_shared<HmcSampler>(model, HmcSettings{});
  const std::size_t idx[] = {0, 2};
  const auto sets = run_replications_for(*model, *hmc, idx, 4, 20, std::nullopt, 8);
  ASSERT_EQ(sets.size(), 2u);
  EXPECT_EQ(sets[0].scalar_label, "mu");
  EXPECT_EQ(sets[1].scalar_label, "alpha_1");
  EXPECT_EQ(sets[0].datasets, sets[1].datasets);
  EXPECT_NE(sets[0].theta_true, sets[1].theta_true);
}

TEST(Diagnostics, HandBuiltSingleRow) {
  ReplicationSet reps;
  reps.draws_per_replication = 4;
  reps.replication_index = {0};
  reps.theta_true = {0.5};
  reps.draws = {0.1, 0.2, 0.9, 1.0};
  reps.post_mean = {0.55};
  reps.post_sd = {population_sd(std::vector<double>{0.1, 0.2, 0.9, 1.0})};
  reps.rank_quantiles = {0.5};
  const auto d = diagnostics(reps);
  EXPECT_DOUBLE_EQ(d.quantiles[0], 0.5);
  EXPECT_DOUBLE_EQ(d.ks_distance, 0.5);
  EXPECT_TRUE(d.degenerate_z_sd);
  EXPECT_DOUBLE_EQ(d.z_sd, 0.0);
  EXPECT_NEAR(d.z_mean, (0.5 - 0.55) / reps.post_sd[0], 1e-15);
  EXPECT_EQ(d.coverage.at(0.5), 1.0);
}

TEST(Diagnostics, ZeroSdNamesReplication) {
  ReplicationSet reps;
  reps.draws_per_replication = 2;
  reps.replication_index = {0, 7};
  reps.theta_true = {0.0, 1.0};
  reps.post_mean = {0.0, 1.0};
  reps.post_sd = {1.0, 0.0};
  reps.rank_quantiles = {0.5, 0.0};
  try {
    diagnostics(reps);
    FAIL();
  } catch (const DegeneratePosterior& e) {
    EXPECT_NE(std::string(e.what()).find("replication 7"), std::string::npos);
  }
}

TEST(Diagnostics, ExactSamplerIsCalibrated) {
  Conjugate c;
  RunOptions ro;
  ro.workers = 4;
  const auto reps = run_replications(*c.model, *c.exact, 1000, 200, std::nullopt, 17, ro);
  const auto d = diagnostics(reps);
  EXPECT_LT(d.ks_distance * std::sqrt(1000.0), kKsCritical01);
  EXPECT_NEAR(d.z_mean, 0.0, 0.12);
  EXPECT_NEAR(d.z_sd, 1.0, 0.08);
  for (double a : default_alphas()) EXPECT_NEAR(d.coverage.at(a), 1.0 - a, 0.05);
}

TEST(Diagnostics, NarrowedSamplerIsNot) {
  Conjugate c;
  auto nar = narrow(c.exact, 3.0);
  const auto reps = run_replications(*c.model, *nar, 500, 200, std::nullopt, 17);
  const auto d = diagnostics(reps);
  EXPECT_GT(d.ks_distance * std::sqrt(500.0), kKsCritical01);
  EXPECT_NEAR(d.z_sd, 3.0, 0.3);
  EXPECT_LT(d.coverage.at(0.05), 0.6);
}

TEST(Diagnostics, WithoutDrawsSkipsCoverage) {
  Conjugate c;
  RunOptions ro;
  ro.keep_draws = false;
  const auto reps = run_replications(*c.model, *c.exact, 20, 10, std::nullopt, 1, ro);
  EXPECT_FALSE(reps.has_draws());
  EXPECT_TRUE(diagnostics(reps).coverage.empty());
  EXPECT_THROW(reps.row(0), InvalidArgument);
}
