#pragma once

// Timeline simulation of retraining schemes over a KPI dataset.
//
// Time runs over target dates. The initial model is trained on the first
// `train_window_days` target dates; every later date e is evaluated with the
// model active at the start of e. Labels of date e become known at the end of
// e, so a model retrained at the end of e uses rows with target date in
// (e - window, e] (feature dates shifted back by the horizon) and serves from
// e + 1. No model ever predicts a date whose label it was trained on.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "leaf/core.hpp"
#include "leaf/dataset.hpp"
#include "leaf/detector.hpp"
#include "leaf/explainer.hpp"
#include "leaf/metrics.hpp"
#include "leaf/mitigator.hpp"
#include "leaf/models.hpp"

namespace leaf {

enum class SchemeKind { static_model, periodic, triggered, leaf };

struct Scheme {
  SchemeKind kind = SchemeKind::static_model;
  int period_days = 30;  // periodic
  int n_groups = 1;      // leaf

  static Scheme static_model() { return {}; }
  static Scheme periodic(int days) { return {SchemeKind::periodic, days, 1}; }
  static Scheme triggered() { return {SchemeKind::triggered, 30, 1}; }
  static Scheme leaf(int groups) { return {SchemeKind::leaf, 30, groups}; }

  void validate() const {
    if (kind == SchemeKind::periodic && period_days < 1) throw ConfigError("periodic period_days must be >= 1");
    if (kind == SchemeKind::leaf && n_groups < 1) throw ConfigError("leaf n_groups must be >= 1");
  }

  std::string name() const {
    switch (kind) {
      case SchemeKind::static_model: return "static";
      case SchemeKind::periodic: return "periodic:" + std::to_string(period_days);
      case SchemeKind::triggered: return "triggered";
      case SchemeKind::leaf: return "leaf:" + std::to_string(n_groups);
    }
    return "?";
  }

  /// static | periodic:<days> | triggered | leaf:<groups>
  static Scheme parse(const std::string& s) {
    const auto colon = s.find(':');
    const std::string head = s.substr(0, colon);
    auto arg = [&]() -> int {
      if (colon == std::string::npos) throw ConfigError("scheme '" + s + "' needs an argument");
      const std::string a = s.substr(colon + 1);
      int v = 0;
      auto [p, ec] = std::from_chars(a.data(), a.data() + a.size(), v);
      if (ec != std::errc{} || p != a.data() + a.size()) throw ConfigError("bad scheme argument in '" + s + "'");
      return v;
    };
    Scheme out;
    if (head == "static" && colon == std::string::npos) {
      out = static_model();
    } else if (head == "triggered" && colon == std::string::npos) {
      out = triggered();
    } else if (head == "periodic") {
      out = periodic(arg());
    } else if (head == "leaf") {
      out = leaf(arg());
    } else {
      throw ConfigError("unknown scheme '" + s + "' (expected static, periodic:N, triggered or leaf:K)");
    }
    out.validate();
    return out;
  }
};

struct HarnessConfig {
  int train_window_days = 14;
  int horizon_days = 30;
  RegressorSpec model;
  KswinConfig detector;
  MitigationConfig mitigation;
  int importance_repeats = 5;
  double group_tau = 0.7;
  int min_gap_days = 0;  // refractory period after a detector-driven retrain
  std::uint64_t seed = 0;

  void validate() const {
    if (train_window_days < 1) throw ConfigError("train_window_days must be >= 1");
    if (horizon_days < 1) throw ConfigError("horizon_days must be >= 1");
    if (importance_repeats < 1) throw ConfigError("importance_repeats must be >= 1");
    if (!(group_tau > 0.0 && group_tau <= 1.0)) throw ConfigError("group_tau must be in (0, 1]");
    if (min_gap_days < 0) throw ConfigError("min_gap_days must be >= 0");
    model.validate();
    detector.validate();
    mitigation.validate();
  }
};

inline nlohmann::json harness_config_to_json(const HarnessConfig& c) {
  const auto& d = c.detector;
  const auto& m = c.mitigation;
  return {{"train_window_days", c.train_window_days},
          {"horizon_days", c.horizon_days},
          {"model", spec_to_json(c.model)},
          {"detector",
           {{"window_size", d.window_size},
            {"stat_size", d.stat_size},
            {"alpha", d.alpha},
            {"reset_on_detect", d.reset_on_detect}}},
          {"mitigation",
           {{"cov_threshold", m.cov_threshold},
            {"forget_percentile", m.forget_percentile},
            {"weight_power_high", m.weight_power_high},
            {"weight_power_low", m.weight_power_low},
            {"keep_size", m.keep_size},
            {"removal_fraction", m.removal_fraction},
            {"n_bins", m.n_bins},
            {"edges_from_latest_only", m.edges_from_latest_only},
            {"oversample_latest_only", m.oversample_latest_only}}},
          {"importance_repeats", c.importance_repeats},
          {"group_tau", c.group_tau},
          {"min_gap_days", c.min_gap_days},
          {"seed", c.seed}};
}

/// Keys absent from `j` keep the values of `base`. Unknown keys are rejected
/// so that typos in config files do not pass silently.
inline HarnessConfig harness_config_from_json(const nlohmann::json& j, HarnessConfig base = {}) {
  auto check_keys = [](const nlohmann::json& obj, std::initializer_list<const char*> known, const char* where) {
    if (!obj.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
    for (const auto& [k, v] : obj.items())
      if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; }))
        throw ConfigError(std::string("unknown key '") + k + "' in " + where);
  };
  check_keys(j,
             {"train_window_days", "horizon_days", "model", "detector", "mitigation", "importance_repeats",
              "group_tau", "min_gap_days", "seed"},
             "config");
  HarnessConfig c = std::move(base);
  try {
    c.train_window_days = j.value("train_window_days", c.train_window_days);
    c.horizon_days = j.value("horizon_days", c.horizon_days);
    if (j.contains("model")) {
      nlohmann::json mj = spec_to_json(c.model);
      const auto& in = j.at("model");
      if (in.contains("family")) mj["family"] = in.at("family");
      if (in.contains("hyperparameters"))
        for (const auto& [k, v] : in.at("hyperparameters").items()) mj["hyperparameters"][k] = v;
      if (in.contains("seed")) mj["seed"] = in.at("seed");
      c.model = spec_from_json(mj);
    }
    if (j.contains("detector")) {
      const auto& d = j.at("detector");
      check_keys(d, {"window_size", "stat_size", "alpha", "reset_on_detect"}, "detector");
      c.detector.window_size = d.value("window_size", c.detector.window_size);
      c.detector.stat_size = d.value("stat_size", c.detector.stat_size);
      c.detector.alpha = d.value("alpha", c.detector.alpha);
      c.detector.reset_on_detect = d.value("reset_on_detect", c.detector.reset_on_detect);
    }
    if (j.contains("mitigation")) {
      const auto& m = j.at("mitigation");
      check_keys(m,
                 {"cov_threshold", "forget_percentile", "weight_power_high", "weight_power_low", "keep_size",
                  "removal_fraction", "n_bins", "edges_from_latest_only", "oversample_latest_only"},
                 "mitigation");
      auto& t = c.mitigation;
      t.cov_threshold = m.value("cov_threshold", t.cov_threshold);
      t.forget_percentile = m.value("forget_percentile", t.forget_percentile);
      t.weight_power_high = m.value("weight_power_high", t.weight_power_high);
      t.weight_power_low = m.value("weight_power_low", t.weight_power_low);
      t.keep_size = m.value("keep_size", t.keep_size);
      t.removal_fraction = m.value("removal_fraction", t.removal_fraction);
      t.n_bins = m.value("n_bins", t.n_bins);
      t.edges_from_latest_only = m.value("edges_from_latest_only", t.edges_from_latest_only);
      t.oversample_latest_only = m.value("oversample_latest_only", t.oversample_latest_only);
    }
    c.importance_repeats = j.value("importance_repeats", c.importance_repeats);
    c.group_tau = j.value("group_tau", c.group_tau);
    c.min_gap_days = j.value("min_gap_days", c.min_gap_days);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

/// One model fit during a scheme run (the initial fit included).
struct TrainRecord {
  Day trained_at;       // end of this date
  Day first_served;     // trained_at + 1
  Day latest_label;     // newest target date among training rows
  std::size_t rows = 0;
  std::string reason;   // initial | periodic | drift | leaf
};

struct SchemeReport {
  Scheme scheme;
  std::string fingerprint;  // identifies (data, target, model, seed) for baseline matching
  ErrorSeries trace;
  double mean_nrmse = 0.0;
  double delta_vs_static = 0.0;
  int n_retrains = 0;
  std::vector<DriftEvent> drift_events;
  std::vector<TrainRecord> trainings;                     // [0] is the initial fit
  std::vector<std::vector<MitigationPlan>> mitigations;  // leaf only, one entry per mitigation
  std::vector<std::string> notes;
  std::size_t causality_violations = 0;
};

class Experiment {
 public:
  Experiment(const KpiFrame& data, const std::string& target, HarnessConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (data.target_name != target)
      throw DataError("target '" + target + "' absent (frame target is '" + data.target_name + "')");
    const KpiFrame with_time = data.feature_index("day_of_week") ? data : add_temporal_features(data);
    sup_ = make_supervised(with_time, cfg_.horizon_days);
    for (std::size_t i = 0; i < sup_.size(); ++i) by_target_[sup_.target_date[i]].push_back(i);
    const Day first_target = by_target_.begin()->first;
    last_ = by_target_.rbegin()->first;
    initial_end_ = first_target + (cfg_.train_window_days - 1);
    if (!(last_ > initial_end_))
      throw DataError("insufficient span: need more than train_window (" +
                      std::to_string(cfg_.train_window_days) + ") + horizon (" +
                      std::to_string(cfg_.horizon_days) + ") days of data");

    nlohmann::json fp = {{"rows", sup_.size()},
                         {"target", target},
                         {"first", format_date(first_target)},
                         {"last", format_date(last_)},
                         {"model", spec_to_json(cfg_.model)},
                         {"window", cfg_.train_window_days},
                         {"horizon", cfg_.horizon_days},
                         {"seed", cfg_.seed}};
    double checksum = 0.0;
    for (std::size_t i = 0; i < sup_.size(); ++i) checksum += sup_.target[i] * static_cast<double>(i % 997 + 1);
    fp["checksum"] = format_double(checksum);
    fingerprint_ = fp.dump();
  }

  const KpiFrame& supervised() const { return sup_; }
  const HarnessConfig& config() const { return cfg_; }
  Day initial_fit_date() const { return initial_end_; }
  Day last_date() const { return last_; }
  /// Calendar days evaluated after the initial fit.
  int evaluation_days() const { return last_ - initial_end_; }

  /// Rows whose target date lies in (end - window, end].
  KpiFrame window(Day end) const {
    std::vector<std::size_t> rows;
    appendRows(end - (cfg_.train_window_days - 1), end, rows);
    return sup_.select(rows);
  }

  /// Every row labeled by the end of `end`.
  KpiFrame pool(Day end) const {
    std::vector<std::size_t> rows;
    appendRows(by_target_.begin()->first, end, rows);
    return sup_.select(rows);
  }

  const SchemeReport& static_report() {
    if (!static_) static_ = simulate(Scheme::static_model());
    return *static_;
  }

  SchemeReport run(const Scheme& scheme) {
    scheme.validate();
    const SchemeReport& base = static_report();
    SchemeReport r = scheme.kind == SchemeKind::static_model ? base : simulate(scheme);
    r.delta_vs_static = delta_mean_nrmse(r.trace, base.trace);
    return r;
  }

 private:
  void appendRows(Day from, Day to, std::vector<std::size_t>& rows) const {
    for (auto it = by_target_.lower_bound(from); it != by_target_.end() && it->first <= to; ++it)
      rows.insert(rows.end(), it->second.begin(), it->second.end());
  }

  static Day latest_label(const KpiFrame& f) {
    return *std::max_element(f.target_date.begin(), f.target_date.end());
  }

  RegressorSpec spec_for(std::string_view stream, Day d) const {
    RegressorSpec s = cfg_.model;
    s.seed = derive_seed(cfg_.seed, stream, static_cast<std::uint64_t>(static_cast<std::int64_t>(d.value)));
    return s;
  }

  SchemeReport simulate(const Scheme& scheme) const {
    SchemeReport rep;
    rep.scheme = scheme;
    rep.fingerprint = fingerprint_;

    KpiFrame train_set = window(initial_end_);
    TrainedModel active = train(spec_for("initial-model", Day(0)), train_set);
    rep.trainings.push_back({initial_end_, initial_end_ + 1, latest_label(train_set), train_set.size(), "initial"});

    KswinConfig dcfg = cfg_.detector;
    dcfg.seed = derive_seed(cfg_.seed, "detector");
    Kswin detector(dcfg);
    std::optional<Day> last_detector_retrain;

    auto install = [&](TrainedModel m, KpiFrame rows, Day e, const char* reason) {
      const Day lbl = latest_label(rows);
      rep.trainings.push_back({e, e + 1, lbl, rows.size(), reason});
      if (!(lbl < e + 1)) ++rep.causality_violations;
      active = std::move(m);
      train_set = std::move(rows);
      ++rep.n_retrains;
    };

    for (Day e = initial_end_ + 1; e <= last_; ++e) {
      std::optional<double> nrmse;
      if (auto it = by_target_.find(e); it != by_target_.end()) {
        if (!(rep.trainings.back().latest_label < e)) ++rep.causality_violations;
        const KpiFrame rows = sup_.select(it->second);
        const auto pred = active.predict(rows);
        if (rows.size() < 2) {
          rep.trace.skipped.push_back({e, "single sample"});
        } else if (auto v = nrmse_on_date(rows.target, pred)) {
          nrmse = *v;
          rep.trace.entries.push_back({e, *v, rows.size()});
        } else {
          rep.trace.skipped.push_back({e, "degenerate target range"});
        }
      }

      switch (scheme.kind) {
        case SchemeKind::static_model:
          break;
        case SchemeKind::periodic: {
          if ((e - initial_end_) % scheme.period_days != 0) break;
          KpiFrame rows = window(e);
          if (rows.empty()) {
            rep.notes.push_back(format_date(e) + ": periodic retrain skipped, empty window");
            break;
          }
          TrainedModel m = train(spec_for("retrain", e), rows);
          install(std::move(m), std::move(rows), e, "periodic");
          break;
        }
        case SchemeKind::triggered:
        case SchemeKind::leaf: {
          if (!nrmse) break;
          auto ev = detector.feed(e, *nrmse);
          if (!ev) break;
          rep.drift_events.push_back(*ev);
          if (last_detector_retrain && (e - *last_detector_retrain) < cfg_.min_gap_days) break;
          KpiFrame latest = window(e);
          if (latest.size() < 2) break;
          if (scheme.kind == SchemeKind::triggered) {
            TrainedModel m = train(spec_for("retrain", e), latest);
            install(std::move(m), std::move(latest), e, "drift");
            last_detector_retrain = e;
          } else if (leaf_step(scheme, e, latest, active, train_set, rep)) {
            last_detector_retrain = e;
          }
          break;
        }
      }
    }
    if (rep.trace.empty()) throw DegenerateError("scheme run produced no evaluable dates");
    rep.mean_nrmse = rep.trace.mean();
    return rep;
  }

  /// Explain the latest window, mitigate, and install the new model. Returns
  /// true when a retrain happened.
  bool leaf_step(const Scheme& scheme, Day e, const KpiFrame& latest, TrainedModel& active,
                 KpiFrame& train_set, SchemeReport& rep) const {
    const std::uint64_t s = derive_seed(cfg_.seed, "leaf", static_cast<std::uint64_t>(static_cast<std::int64_t>(e.value)));
    const std::string when = format_date(e) + ": ";
    std::vector<FeatureGroup> groups;
    try {
      const auto imp = permutation_importance(active, latest, cfg_.importance_repeats, derive_seed(s, "importance"));
      groups = group_features(imp, latest, cfg_.group_tau);
    } catch (const DegenerateError& err) {
      rep.notes.push_back(when + "explanation skipped: " + err.what());
      return false;
    }
    if (groups.empty()) {
      rep.notes.push_back(when + "no feature has positive importance; mitigation skipped");
      return false;
    }
    MitigationConfig mcfg = cfg_.mitigation;
    mcfg.n_groups = scheme.n_groups;
    if (static_cast<std::size_t>(mcfg.n_groups) > groups.size()) {
      rep.notes.push_back(when + "only " + std::to_string(groups.size()) + " feature group(s); using all");
      mcfg.n_groups = static_cast<int>(groups.size());
    }
    try {
      auto res = mitigate_multigroup(train_set, latest, pool(e), groups, active, spec_for("retrain", e), mcfg,
                                     derive_seed(s, "mitigate"));
      const bool changed = std::any_of(res.audit.begin(), res.audit.end(),
                                       [](const MitigationPlan& p) { return !p.forgotten_rows.empty() || !p.draws.empty(); });
      rep.mitigations.push_back(std::move(res.audit));
      if (!changed) {
        rep.notes.push_back(when + "empty mitigation plan; model kept");
        return false;
      }
      const Day lbl = latest_label(res.train);
      rep.trainings.push_back({e, e + 1, lbl, res.train.size(), "leaf"});
      if (!(lbl < e + 1)) ++rep.causality_violations;
      active = std::move(res.model);
      train_set = std::move(res.train);
      ++rep.n_retrains;
      return true;
    } catch (const DegenerateError& err) {
      rep.notes.push_back(when + "mitigation skipped: " + err.what());
      return false;
    }
  }

  HarnessConfig cfg_;
  KpiFrame sup_;
  std::map<Day, std::vector<std::size_t>> by_target_;
  Day initial_end_;
  Day last_;
  std::string fingerprint_;
  std::optional<SchemeReport> static_;
};

inline SchemeReport run_scheme(const KpiFrame& data, const std::string& target, const Scheme& scheme,
                               const HarnessConfig& cfg) {
  Experiment ex(data, target, cfg);
  return ex.run(scheme);
}

// ---------------------------------------------------------------------------
// Comparison.

struct ComparisonRow {
  std::string scheme;
  double delta_nrmse = 0.0;  // percent vs. the shared static model
  int n_retrains = 0;
  double mean_nrmse = 0.0;
  bool best_delta = false;
  bool best_retrains = false;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
};

/// Rows in input order. The static report, when present, is the reference;
/// otherwise each report's stored delta (computed against the same static
/// baseline) is used.
inline Comparison compare(std::span<const SchemeReport> reports) {
  if (reports.empty()) throw DataError("compare: no reports");
  for (const auto& r : reports)
    if (r.fingerprint != reports.front().fingerprint)
      throw DataError("compare: reports do not share a static baseline (data, target, model or seed differ)");
  const SchemeReport* base = nullptr;
  for (const auto& r : reports)
    if (r.scheme.kind == SchemeKind::static_model) base = &r;
  Comparison c;
  for (const auto& r : reports) {
    ComparisonRow row;
    row.scheme = r.scheme.name();
    row.delta_nrmse = base ? delta_mean_nrmse(r.trace, base->trace) : r.delta_vs_static;
    row.n_retrains = r.n_retrains;
    row.mean_nrmse = r.mean_nrmse;
    c.rows.push_back(row);
  }
  double best_d = std::numeric_limits<double>::infinity();
  int best_n = std::numeric_limits<int>::max();
  for (const auto& r : c.rows) {
    best_d = std::min(best_d, r.delta_nrmse);
    best_n = std::min(best_n, r.n_retrains);
  }
  for (auto& r : c.rows) {
    r.best_delta = r.delta_nrmse == best_d;
    r.best_retrains = r.n_retrains == best_n;
  }
  return c;
}

inline void write_comparison_csv(std::ostream& out, const Comparison& c) {
  out << "scheme,delta_nrmse_pct,n_retrains,mean_nrmse,best_delta,best_retrains\n";
  for (const auto& r : c.rows)
    out << r.scheme << ',' << format_double(r.delta_nrmse) << ',' << r.n_retrains << ','
        << format_double(r.mean_nrmse) << ',' << (r.best_delta ? 1 : 0) << ',' << (r.best_retrains ? 1 : 0)
        << '\n';
}

inline nlohmann::json comparison_to_json(const Comparison& c) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : c.rows)
    rows.push_back({{"scheme", r.scheme},
                    {"delta_nrmse_pct", r.delta_nrmse},
                    {"n_retrains", r.n_retrains},
                    {"mean_nrmse", r.mean_nrmse},
                    {"best_delta", r.best_delta},
                    {"best_retrains", r.best_retrains}});
  return {{"rows", rows}};
}

inline nlohmann::json report_to_json(const SchemeReport& r) {
  nlohmann::json trainings = nlohmann::json::array();
  for (const auto& t : r.trainings)
    trainings.push_back({{"trained_at", format_date(t.trained_at)},
                         {"first_served", format_date(t.first_served)},
                         {"latest_label", format_date(t.latest_label)},
                         {"rows", t.rows},
                         {"reason", t.reason}});
  nlohmann::json mitigations = nlohmann::json::array();
  for (const auto& rounds : r.mitigations) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : rounds) arr.push_back(plan_to_json(p));
    mitigations.push_back(std::move(arr));
  }
  return {{"scheme", r.scheme.name()},
          {"mean_nrmse", r.mean_nrmse},
          {"delta_vs_static_pct", r.delta_vs_static},
          {"n_retrains", r.n_retrains},
          {"evaluated_dates", r.trace.size()},
          {"skipped_dates", r.trace.skipped.size()},
          {"drift_events", events_to_json(r.drift_events)},
          {"trainings", trainings},
          {"mitigations", mitigations},
          {"causality_violations", r.causality_violations},
          {"notes", r.notes}};
}

}  // namespace leaf
