#include <gtest/gtest.h>

#include <cmath>

#include "leaf/metrics.hpp"
#include "support.hpp"

using namespace leaf;
using testing_support::table;

TEST(Nrmse, HandComputedValue) {
  const std::vector<double> t{1, 2, 3}, p{1, 2, 5};
  // RMSE = sqrt(4/3), range = 2.
  EXPECT_NEAR(*nrmse_on_date(t, p), std::sqrt(4.0 / 3.0) / 2.0, 1e-12);
  EXPECT_NEAR(*nrmse_on_date(t, p), 0.5773502691896258, 1e-12);
  EXPECT_EQ(*nrmse_on_date(t, t), 0.0);
}

TEST(Nrmse, DegenerateInputsAreSkipped) {
  EXPECT_FALSE(nrmse_on_date(std::vector<double>{4, 4, 4}, std::vector<double>{1, 2, 3}));
  EXPECT_FALSE(nrmse_on_date(std::vector<double>{4}, std::vector<double>{1}));
  EXPECT_THROW(nrmse_on_date(std::vector<double>{1, 2}, std::vector<double>{1}), DataError);
}

TEST(Nrmse, InvariantUnderCommonAffineMap) {
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> t(20), p(20), ta(20), pa(20);
    const double a = rng.uniform(0.1, 10), b = rng.uniform(-100, 100);
    for (int i = 0; i < 20; ++i) {
      t[i] = rng.normal(50, 10);
      p[i] = t[i] + rng.normal(0, 3);
      ta[i] = a * t[i] + b;
      pa[i] = a * p[i] + b;
    }
    EXPECT_NEAR(*nrmse_on_date(t, p), *nrmse_on_date(ta, pa), 1e-9);
  }
}

TEST(NormalizedError, SignMarksOverestimation) {
  EXPECT_DOUBLE_EQ(normalized_error(10, 15, 10), 0.5);
  EXPECT_DOUBLE_EQ(normalized_error(10, 5, 10), -0.5);
  EXPECT_THROW(normalized_error(1, 2, 0), DataError);
}

TEST(Dispersion, PopulationStatistics) {
  const auto d = dispersion(std::vector<double>{0, 2});
  EXPECT_DOUBLE_EQ(d.mean, 1.0);
  EXPECT_DOUBLE_EQ(d.sd, 1.0);
  EXPECT_DOUBLE_EQ(d.cov, 1.0);
  EXPECT_THROW(dispersion(std::vector<double>{1}), DataError);
  EXPECT_THROW(dispersion(std::vector<double>{-1, 1}), DegenerateError);
}

TEST(Delta, RelativeChangeOverSharedDates) {
  ErrorSeries m, b;
  const Day d0(100);
  m.entries = {{d0, 0.05, 2}, {d0 + 1, 0.05, 2}};
  b.entries = {{d0, 0.10, 2}, {d0 + 1, 0.10, 2}, {d0 + 2, 5.0, 2}};
  EXPECT_NEAR(delta_mean_nrmse(m, b), -50.0, 1e-12);
  EXPECT_NEAR(delta_mean_nrmse(b, b), 0.0, 1e-12);
  ErrorSeries other;
  other.entries = {{d0 + 10, 0.1, 2}};
  EXPECT_THROW(delta_mean_nrmse(other, b), DegenerateError);
}

TEST(ErrorSeries, GroupsByTargetDateAndRecordsSkips) {
  // Day 0: two samples, day 1: a single sample, day 2: constant truth.
  auto f = table({"x"}, {{0, 0, 0, 0, 0}}, {1, 3, 7, 5, 5});
  f.target_date = {Day(10), Day(10), Day(11), Day(12), Day(12)};
  const std::vector<double> pred{1, 4, 7, 5, 6};
  const auto s = error_series(f, pred);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.entries[0].date, Day(10));
  EXPECT_NEAR(s.entries[0].nrmse, std::sqrt(0.5) / 2.0, 1e-12);
  ASSERT_EQ(s.skipped.size(), 2u);
  EXPECT_EQ(s.skipped[0].reason, "single sample");
  EXPECT_EQ(s.skipped[1].reason, "degenerate target range");
}

TEST(RegressionMetrics, PerfectPredictionAndKnownValues) {
  const std::vector<double> t{1, 2, 3, 4};
  const auto perfect = evaluate_all(t, t);
  EXPECT_DOUBLE_EQ(perfect.r2, 1.0);
  EXPECT_DOUBLE_EQ(perfect.mae, 0.0);
  EXPECT_DOUBLE_EQ(perfect.pearson, 1.0);
  const auto off = evaluate_all(t, std::vector<double>{2, 3, 4, 5});
  EXPECT_DOUBLE_EQ(off.mae, 1.0);
  EXPECT_DOUBLE_EQ(off.mse, 1.0);
  EXPECT_DOUBLE_EQ(off.median_ae, 1.0);
  EXPECT_NEAR(off.explained_variance, 1.0, 1e-12);
  EXPECT_NEAR(off.r2, 1.0 - 4.0 / 5.0, 1e-12);
}
