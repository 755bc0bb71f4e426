#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "leaf/metrics.hpp"
#include "leaf/synth.hpp"

using namespace leaf;

namespace {

ScenarioSpec small(std::uint64_t seed = 3) {
  auto s = preset("no-drift", seed);
  s.n_stations = 4;
  s.span_days = 120;
  return s;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  return evaluate_all(a, b).pearson;
}

}  // namespace

TEST(Synth, SameSeedSameFrame) {
  const auto a = generate(small()), b = generate(small());
  EXPECT_EQ(a.frame.target, b.frame.target);
  EXPECT_EQ(a.frame.columns, b.frame.columns);
  const auto c = generate(small(4));
  EXPECT_NE(a.frame.target, c.frame.target);
}

TEST(Synth, ShapeAndNames) {
  const auto r = generate(small());
  EXPECT_EQ(r.frame.size(), 4u * 120u);
  EXPECT_EQ(r.frame.feature_names, (std::vector<std::string>{"side_0", "side_1", "side_2", "side_3"}));
  EXPECT_EQ(r.frame.station.front(), "s000");
  EXPECT_EQ(r.frame.date.front(), Day(17532));
  EXPECT_NO_THROW(r.frame.validate(true));
}

TEST(Synth, LossWindowDropsRowsWithoutShiftingOthers) {
  auto spec = small();
  const auto full = generate(spec);
  spec.loss_windows = {{10, 19, {1}}};
  const auto lossy = generate(spec);
  EXPECT_EQ(lossy.frame.size(), full.frame.size() - 10);
  std::map<std::pair<std::string, std::int32_t>, double> ref;
  for (std::size_t i = 0; i < full.frame.size(); ++i)
    ref[{full.frame.station[i], full.frame.date[i].value}] = full.frame.target[i];
  for (std::size_t i = 0; i < lossy.frame.size(); ++i) {
    const auto key = std::make_pair(lossy.frame.station[i], lossy.frame.date[i].value);
    EXPECT_EQ(ref.at(key), lossy.frame.target[i]);
    if (lossy.frame.station[i] == "s001") {
      const int t = lossy.frame.date[i] - spec.start_date;
      EXPECT_FALSE(t >= 10 && t <= 19);
    }
  }
  ASSERT_EQ(lossy.truth.drift_days.size(), 1u);
  EXPECT_EQ(lossy.truth.drift_days[0], spec.start_date + 10);
}

TEST(Synth, AddingStationsKeepsExistingStreams) {
  auto spec = small();
  spec.base_levels = {100, 110, 120, 130};
  const auto a = generate(spec);
  spec.n_stations = 5;
  spec.base_levels.push_back(90);
  const auto b = generate(spec);
  for (std::size_t i = 0; i < a.frame.size(); ++i) EXPECT_EQ(a.frame.target[i], b.frame.target[i]);
}

TEST(Synth, SideChannelsTrackTheTarget) {
  const auto r = generate(small());
  for (const auto& col : r.frame.columns) EXPECT_GT(pearson(col, r.frame.target), 0.95);
}

TEST(Synth, PresetDispersionWithinDeclaredBand) {
  for (const auto& info : preset_catalog()) {
    auto spec = preset(info.name, 11);
    const auto r = generate(spec);
    const double cov = dispersion(r.frame.target).cov;
    EXPECT_GE(cov, info.cov_lo) << info.name;
    EXPECT_LT(cov, info.cov_hi) << info.name;
  }
}

TEST(Synth, WeeklyCycleDominatesPeriodogram) {
  auto spec = preset("low-dispersion-periodic", 2);
  spec.n_stations = 1;
  spec.trend_slope = 0.0;
  const auto r = generate(spec);
  const auto& y = r.frame.target;
  const double n = static_cast<double>(y.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double best_power = -1;
  double best_period = 0;
  for (int k = 1; k < static_cast<int>(y.size()) / 2; ++k) {
    double re = 0, im = 0;
    for (std::size_t t = 0; t < y.size(); ++t) {
      const double w = 2 * std::numbers::pi * k * static_cast<double>(t) / n;
      re += (y[t] - mean) * std::cos(w);
      im += (y[t] - mean) * std::sin(w);
    }
    if (re * re + im * im > best_power) {
      best_power = re * re + im * im;
      best_period = n / k;
    }
  }
  EXPECT_NEAR(best_period, 7.0, 0.1);
}

TEST(Synth, ShockFollowsDeclaredProfile) {
  ScenarioSpec spec;
  spec.shocks = {{10, 0.5, 20, {}}};
  EXPECT_DOUBLE_EQ(shock_factor(spec, 9), 0.0);
  EXPECT_DOUBLE_EQ(shock_factor(spec, 10), 0.5);
  EXPECT_DOUBLE_EQ(shock_factor(spec, 20), 0.25);
  EXPECT_DOUBLE_EQ(shock_factor(spec, 30), 0.0);
  spec.shocks[0].recovery_days = 0;
  EXPECT_DOUBLE_EQ(shock_factor(spec, 500), 0.5);
}

TEST(Synth, ShockCanTargetSomeStations) {
  auto spec = small();
  spec.noise_sd = 0;
  spec.weekly_amplitude = 0;
  spec.shocks = {{50, 1.0, 0, {2}}};
  const auto r = generate(spec);
  for (std::size_t i = 0; i < r.frame.size(); ++i) {
    const int t = r.frame.date[i] - spec.start_date;
    if (t != 49 && t != 50) continue;
    const double prev = r.frame.target[t == 50 ? i - 1 : i];
    if (t == 50) {
      const double ratio = r.frame.target[i] / prev;
      EXPECT_NEAR(ratio, r.frame.station[i] == "s002" ? 2.0 : 1.0, 1e-12) << r.frame.station[i];
    }
  }
  spec.shocks[0].stations = {7};
  EXPECT_THROW(generate(spec), ConfigError);
}

TEST(Synth, UnknownPresetListsValidNames) {
  try {
    preset("tsunami");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& p : preset_catalog()) EXPECT_NE(msg.find(p.name), std::string::npos);
  }
}

TEST(Synth, ScenarioJsonRoundTrip) {
  auto spec = preset("lossy", 9);
  spec.shocks = {{5, 0.1, 3, {1, 2}}};
  const auto back = scenario_from_json(scenario_to_json(spec));
  EXPECT_EQ(scenario_to_json(back), scenario_to_json(spec));
  EXPECT_EQ(generate(back).frame.target, generate(spec).frame.target);
}

TEST(Synth, GroundTruthMarksShockOnset) {
  const auto spec = preset("sudden-shock", 5);
  const auto r = generate(spec);
  ASSERT_EQ(r.truth.drift_days.size(), 1u);
  EXPECT_EQ(r.truth.drift_days[0], spec.start_date + 300);
  EXPECT_EQ(r.truth.params.size(), 600u);
  EXPECT_DOUBLE_EQ(r.truth.params[300].shock_factor, 0.5);
  const auto j = ground_truth_to_json(r.truth);
  EXPECT_EQ(j.at("drift_days").at(0).get<std::string>(), format_date(spec.start_date + 300));
}

TEST(Synth, InvalidSpecsRejected) {
  ScenarioSpec s;
  s.n_stations = 0;
  EXPECT_THROW(generate(s), ConfigError);
  s = {};
  s.loss_windows = {{5, 2, {}}};
  EXPECT_THROW(generate(s), ConfigError);
  s = {};
  s.burst_prob = 2;
  EXPECT_THROW(generate(s), ConfigError);
}
