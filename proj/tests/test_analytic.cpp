#include <gtest/gtest.h>

#include "sbcal/analytic.hpp"

using namespace sbcal;
using namespace sbcal::analytic;

TEST(Analytic, ConjugatePosterior) {
  const auto p = conjugate_posterior(std::vector<double>{2, 2, 2});
  EXPECT_DOUBLE_EQ(p.mean, 1.5);
  EXPECT_DOUBLE_EQ(p.sd, 0.5);
  EXPECT_THROW(conjugate_posterior(std::vector<double>{}), InvalidArgument);
  EXPECT_THROW(conjugate_posterior(std::vector<double>{NAN}), InvalidArgument);
}

TEST(Analytic, NormalNormalPosterior) {
  const auto p = normal_normal_posterior(0.0, 1.0);
  EXPECT_DOUBLE_EQ(p.mean, 0.0);
  EXPECT_NEAR(p.sd, 0.7071067811865476, 1e-15);
  const auto q = normal_normal_posterior(1.0, 1.0);
  EXPECT_DOUBLE_EQ(q.mean, 0.5);
  EXPECT_THROW(normal_normal_posterior(1.0, 0.0), InvalidArgument);
  EXPECT_THROW(normal_normal_posterior(1.0, -1.0), InvalidArgument);
  EXPECT_THROW(normal_normal_posterior(NAN, 1.0), InvalidArgument);
}

TEST(Analytic, ZLawAtUnitSigma) {
  const auto z = posterior_mode_z_law(1.0, 1.0);
  // 1 / 2^(3/2) and sqrt(3) / 2.
  EXPECT_NEAR(z.mean, 1.0 / std::pow(2.0, 1.5), 1e-15);
  EXPECT_NEAR(z.sd, std::sqrt(3.0) / 2.0, 1e-15);
  EXPECT_NEAR(z.mean, 0.3536, 5e-5);
  EXPECT_NEAR(z.sd, 0.8660, 5e-5);
  const auto z0 = posterior_mode_z_law(0.0, 1.0);
  EXPECT_DOUBLE_EQ(z0.mean, 0.0);
}

TEST(Analytic, ZLawLimits) {
  for (double y : {0.0, 1.0, 2.0}) {
    const auto small = posterior_mode_z_law(y, 1e-4);
    const auto large = posterior_mode_z_law(y, 1e4);
    EXPECT_NEAR(small.mean, 0.0, 1e-3);
    EXPECT_NEAR(small.sd, 1.0, 1e-3);
    EXPECT_NEAR(large.mean, 0.0, 1e-3);
    EXPECT_NEAR(large.sd, 1.0, 1e-3);
  }
  EXPECT_EQ(prior_mode_z_law().mean, 0.0);
  EXPECT_EQ(prior_mode_z_law().sd, 1.0);
}

TEST(Analytic, RecalibrationLimit) {
  const auto r = posterior_recalibration_limit(1.0, 1.0);
  EXPECT_NEAR(r.mean, 0.75, 1e-15);
  EXPECT_NEAR(r.sd, std::sqrt(3.0 / 8.0), 1e-15);
  EXPECT_NEAR(r.sd, 0.6124, 5e-5);
}

TEST(Analytic, ZLawMatchesSimulation) {
  // Independent of the library's closed form: z = (theta - y_rep / v) / s with
  // theta ~ N(y / v, s), y_rep = theta + sigma * e is Gaussian with
  //   E z = (y / v - y / v^2) / s,  Var z = ((1 - 1/v)^2 s^2 + sigma^2 / v^2) / s^2.
  for (double sigma : {0.5, 1.0, 2.0}) {
    for (double y : {0.0, 1.0, 2.0}) {
      const double v = 1 + sigma * sigma, s = sigma / std::sqrt(v);
      const double m = (y / v - y / (v * v)) / s;
      const double sd = std::sqrt((1 - 1 / v) * (1 - 1 / v) * s * s + sigma * sigma / (v * v)) / s;
      const auto law = posterior_mode_z_law(y, sigma);
      EXPECT_NEAR(law.mean, m, 1e-12);
      EXPECT_NEAR(law.sd, sd, 1e-12);
      Rng rng(derive_seed(1, static_cast<std::uint64_t>(sigma * 10 + y)));
      const auto check = verify_z_derivation(sigma, y, 200000, rng);
      EXPECT_LT(check.discrepancy, 0.01);
    }
  }
}

TEST(Analytic, VerifyRejectsSmallSamples) {
  Rng rng(1);
  EXPECT_THROW(verify_z_derivation(1.0, 1.0, 10, rng), InvalidArgument);
  EXPECT_THROW(verify_z_derivation(0.0, 1.0, 5000, rng), InvalidArgument);
}
