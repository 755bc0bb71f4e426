#include <gtest/gtest.h>

#include <sstream>

#include "leaf/harness.hpp"
#include "leaf/synth.hpp"
#include "support.hpp"

using namespace leaf;

namespace {

KpiFrame scenario(const std::string& name, int span = 200, std::uint64_t seed = 2) {
  auto s = preset(name, seed);
  s.n_stations = 6;
  s.span_days = span;
  for (auto& sh : s.shocks) sh.onset_day = span / 2;
  return generate(s).frame;
}

HarnessConfig quick() {
  HarnessConfig c;
  c.horizon_days = 7;
  c.model = testing_support::small_forest(1, 10);
  c.importance_repeats = 2;
  return c;
}

}  // namespace

TEST(Scheme, ParseAndName) {
  EXPECT_EQ(Scheme::parse("static").kind, SchemeKind::static_model);
  EXPECT_EQ(Scheme::parse("periodic:7").period_days, 7);
  EXPECT_EQ(Scheme::parse("leaf:3").n_groups, 3);
  EXPECT_EQ(Scheme::parse("triggered").name(), "triggered");
  EXPECT_EQ(Scheme::parse("periodic:30").name(), "periodic:30");
  for (const char* bad : {"leaf:0", "periodic:0", "leaf", "periodic:x", "static:1", "adaptive", "leaf:2x"})
    EXPECT_THROW(Scheme::parse(bad), ConfigError) << bad;
}

TEST(Harness, StaticNeverRetrains) {
  Experiment ex(scenario("no-drift"), "target", quick());
  const auto r = ex.run(Scheme::static_model());
  EXPECT_EQ(r.n_retrains, 0);
  EXPECT_EQ(r.trainings.size(), 1u);
  EXPECT_DOUBLE_EQ(r.delta_vs_static, 0.0);
  EXPECT_EQ(r.trace.size(), static_cast<std::size_t>(ex.evaluation_days()));
}

TEST(Harness, TimelineBoundaries) {
  Experiment ex(scenario("no-drift"), "target", quick());
  // Target dates run from start + 7; the first fit uses 14 target dates.
  EXPECT_EQ(ex.initial_fit_date(), Day(17532) + 7 + 13);
  EXPECT_EQ(ex.last_date(), Day(17532) + 199);
  const auto w = ex.window(ex.initial_fit_date());
  EXPECT_EQ(w.size(), 14u * 6u);
  EXPECT_EQ(*std::min_element(w.target_date.begin(), w.target_date.end()), Day(17532) + 7);
}

TEST(Harness, PeriodicRetrainCountFollowsThePeriod) {
  Experiment ex(scenario("no-drift"), "target", quick());
  const int e = ex.evaluation_days();
  const auto r = ex.run(Scheme::periodic(7));
  EXPECT_EQ(r.n_retrains, e / 7);
  for (std::size_t i = 1; i < r.trainings.size(); ++i) {
    EXPECT_EQ(r.trainings[i].trained_at - ex.initial_fit_date(), static_cast<int>(7 * i));
    EXPECT_EQ(r.trainings[i].reason, "periodic");
  }
}

TEST(Harness, NoSchemeSeesTheFuture) {
  Experiment ex(scenario("sudden-shock"), "target", quick());
  for (const auto& s : {Scheme::static_model(), Scheme::periodic(5), Scheme::triggered(), Scheme::leaf(1),
                        Scheme::leaf(2)}) {
    const auto r = ex.run(s);
    EXPECT_EQ(r.causality_violations, 0u) << s.name();
    for (const auto& t : r.trainings) EXPECT_LT(t.latest_label, t.first_served) << s.name();
  }
}

TEST(Harness, DetectorSchemesOnlyRetrainAfterEvents) {
  Experiment ex(scenario("sudden-shock"), "target", quick());
  const auto trig = ex.run(Scheme::triggered());
  EXPECT_EQ(static_cast<std::size_t>(trig.n_retrains), trig.drift_events.size());
  for (std::size_t i = 1; i < trig.trainings.size(); ++i) EXPECT_EQ(trig.trainings[i].reason, "drift");
  const auto lf = ex.run(Scheme::leaf(1));
  EXPECT_LE(static_cast<std::size_t>(lf.n_retrains), lf.drift_events.size());
  EXPECT_GE(lf.mitigations.size(), static_cast<std::size_t>(lf.n_retrains));
}

TEST(Harness, TriggeredOnQuietDataMatchesStatic) {
  Experiment ex(scenario("constant", 220), "target", quick());
  const auto trig = ex.run(Scheme::triggered());
  EXPECT_TRUE(trig.drift_events.empty());
  EXPECT_EQ(trig.n_retrains, 0);
  EXPECT_EQ(trig.trace.entries.size(), ex.static_report().trace.entries.size());
  EXPECT_DOUBLE_EQ(trig.delta_vs_static, 0.0);
}

TEST(Harness, RunsAreDeterministic) {
  const auto data = scenario("sudden-shock");
  const auto a = run_scheme(data, "target", Scheme::leaf(1), quick());
  const auto b = run_scheme(data, "target", Scheme::leaf(1), quick());
  std::ostringstream sa, sb;
  write_error_series_csv(sa, a.trace);
  write_error_series_csv(sb, b.trace);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(report_to_json(a), report_to_json(b));
}

TEST(Harness, CompareUsesTheSharedBaseline) {
  Experiment ex(scenario("no-drift"), "target", quick());
  const std::vector<SchemeReport> reps{ex.run(Scheme::static_model()), ex.run(Scheme::periodic(7))};
  const auto c = compare(reps);
  ASSERT_EQ(c.rows.size(), 2u);
  EXPECT_EQ(c.rows[0].scheme, "static");
  EXPECT_DOUBLE_EQ(c.rows[0].delta_nrmse, 0.0);
  EXPECT_NEAR(c.rows[1].delta_nrmse, reps[1].delta_vs_static, 1e-12);
  EXPECT_TRUE(c.rows[0].best_retrains);
  auto other_cfg = quick();
  other_cfg.seed = 99;
  Experiment other(scenario("no-drift"), "target", other_cfg);
  const std::vector<SchemeReport> mixed{reps[0], other.run(Scheme::static_model())};
  EXPECT_THROW(compare(mixed), DataError);
  std::ostringstream csv;
  write_comparison_csv(csv, c);
  EXPECT_EQ(csv.str().rfind("scheme,delta_nrmse_pct,n_retrains", 0), 0u);
}

TEST(Harness, InsufficientSpanAndBadTarget) {
  const auto data = scenario("no-drift", 20);
  EXPECT_THROW(Experiment(data, "target", quick()), DataError);
  const auto ok = scenario("no-drift");
  EXPECT_THROW(Experiment(ok, "throughput", quick()), DataError);
  auto bad = quick();
  bad.train_window_days = 0;
  EXPECT_THROW(Experiment(ok, "target", bad), ConfigError);
}

TEST(Harness, ConfigJsonRoundTripAndUnknownKeys) {
  auto c = quick();
  c.mitigation.n_bins = 12;
  c.detector.alpha = 0.01;
  c.min_gap_days = 3;
  const auto back = harness_config_from_json(harness_config_to_json(c));
  EXPECT_EQ(harness_config_to_json(back), harness_config_to_json(c));
  EXPECT_THROW(harness_config_from_json({{"detecter", {}}}), ConfigError);
  EXPECT_THROW(harness_config_from_json({{"detector", {{"alpha", 2.0}}}}), ConfigError);
}
