#include <gtest/gtest.h>

#include <cmath>

#include "leaf/metrics.hpp"
#include "leaf/models.hpp"
#include "support.hpp"

using namespace leaf;
using testing_support::small_forest;
using testing_support::table;

namespace {

KpiFrame noisy_sine(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> a(n), b(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.uniform(-3, 3);
    b[i] = rng.uniform(0, 100);
    y[i] = 10 * std::sin(a[i]) + 0.05 * b[i] + rng.normal(0, 0.5);
  }
  return table({"a", "b"}, {a, b}, y, 10);
}

double rmse(const std::vector<double>& t, const std::vector<double>& p) {
  return evaluate_all(t, p).rmse;
}

}  // namespace

TEST(Knn, KEqualToRowCountPredictsTheMean) {
  const auto f = table({"x"}, {{1, 2, 3, 4}}, {10, 20, 30, 60});
  RegressorSpec s;
  s.family = Family::knn;
  s.k = 4;
  const auto m = train(s, f);
  for (double p : m.predict(f)) EXPECT_DOUBLE_EQ(p, 30.0);
  s.k = 5;
  EXPECT_THROW(train(s, f), DataError);
}

TEST(Knn, InvariantToFeatureScale) {
  const auto f = noisy_sine(200, 1);
  auto g = f;
  for (auto& v : g.columns[0]) v = 1000 * v - 5;
  for (auto& v : g.columns[1]) v = 0.001 * v + 7;
  RegressorSpec s;
  s.family = Family::knn;
  const auto pf = train(s, f).predict(f), pg = train(s, g).predict(g);
  for (std::size_t i = 0; i < pf.size(); ++i) EXPECT_NEAR(pf[i], pg[i], 1e-9);
}

TEST(Forest, MoreTreesDoNotHurtOnAverage) {
  const auto tr = noisy_sine(400, 2), te = noisy_sine(400, 3);
  double few = 0, many = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    few += rmse(te.target, train(small_forest(seed, 1), tr).predict(te));
    many += rmse(te.target, train(small_forest(seed, 50), tr).predict(te));
  }
  EXPECT_LT(many, few);
}

TEST(Forest, LearnsASmoothFunction) {
  const auto tr = noisy_sine(800, 4), te = noisy_sine(300, 5);
  auto spec = small_forest(1, 50);
  spec.split_rule = SplitRule::best_of_random;
  const double e = rmse(te.target, train(spec, tr).predict(te));
  EXPECT_LT(e, 2.0);  // target sd is about 7
}

TEST(Forest, SameSeedSamePredictions) {
  const auto f = noisy_sine(200, 6);
  EXPECT_EQ(train(small_forest(9), f).predict(f), train(small_forest(9), f).predict(f));
  EXPECT_NE(train(small_forest(9), f).predict(f), train(small_forest(10), f).predict(f));
}

TEST(Model, SaveLoadPreservesPredictions) {
  const auto f = noisy_sine(150, 7);
  testing_support::TempDir dir("models");
  for (Family fam : {Family::knn, Family::tree_ensemble}) {
    auto spec = small_forest(3);
    spec.family = fam;
    const auto m = train(spec, f);
    m.save(dir.str("m.json"));
    const auto back = TrainedModel::load(dir.str("m.json"));
    EXPECT_EQ(back.predict(f), m.predict(f));
    EXPECT_EQ(back.feature_names(), m.feature_names());
    EXPECT_EQ(back.n_training_rows(), 150u);
  }
}

TEST(Model, MissingFeatureColumnIsASchemaError) {
  const auto f = noisy_sine(50, 8);
  const auto m = train(small_forest(), f);
  auto only_a = f;
  only_a.feature_names.pop_back();
  only_a.columns.pop_back();
  try {
    (void)m.predict(only_a);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
}

TEST(Model, PredictionUsesColumnNamesNotPositions) {
  const auto f = noisy_sine(100, 9);
  const auto m = train(small_forest(), f);
  auto swapped = f;
  std::swap(swapped.feature_names[0], swapped.feature_names[1]);
  std::swap(swapped.columns[0], swapped.columns[1]);
  EXPECT_EQ(m.predict(swapped), m.predict(f));
}

TEST(Model, WeightsShiftTheFit) {
  // Two clusters with identical features but different targets; weighting one
  // cluster pulls the prediction towards it.
  const auto f = table({"x"}, {{0, 0, 0, 0, 0, 0, 0, 0}}, {0, 0, 0, 0, 10, 10, 10, 10});
  RegressorSpec s;
  s.family = Family::knn;
  s.k = 8;
  const std::vector<double> w{1, 1, 1, 1, 9, 9, 9, 9};
  const double unweighted = train(s, f).predict(f)[0];
  const double weighted = train(s, f, w).predict(f)[0];
  EXPECT_DOUBLE_EQ(unweighted, 5.0);
  EXPECT_GT(weighted, 7.0);
  const std::vector<double> uniform(8, 3.0);
  EXPECT_DOUBLE_EQ(train(s, f, uniform).predict(f)[0], 5.0);
}

TEST(Model, InvalidInputsRejected) {
  const auto f = noisy_sine(20, 10);
  auto s = small_forest();
  s.n_trees = 0;
  EXPECT_THROW(train(s, f), ConfigError);
  s = small_forest();
  s.feature_subsample = 1.5;
  EXPECT_THROW(train(s, f), ConfigError);
  EXPECT_THROW(train(small_forest(), f, std::vector<double>(3, 1.0)), DataError);
  EXPECT_THROW(train(small_forest(), f, std::vector<double>(20, 0.0)), DataError);
  EXPECT_THROW(train(small_forest(), f.empty_like()), DegenerateError);
  EXPECT_THROW(parse_family("svm"), ConfigError);
}

TEST(Model, SpecJsonRoundTrip) {
  auto s = small_forest(42, 7);
  s.split_rule = SplitRule::best_of_random;
  s.feature_subsample = 0.5;
  const auto back = spec_from_json(spec_to_json(s));
  EXPECT_EQ(spec_to_json(back), spec_to_json(s));
}
