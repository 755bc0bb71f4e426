// leaf: synthesize KPI data, run retraining schemes, explain and mitigate drift.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "leaf/leaf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;
constexpr int kDegenerate = 3;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw leaf::DataError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw leaf::ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct DateRange {
  leaf::Day first, last;
};

DateRange parse_range(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw leaf::ConfigError("date range '" + s + "' must be START:END");
  DateRange r{leaf::parse_date(s.substr(0, colon)), leaf::parse_date(s.substr(colon + 1))};
  if (r.last < r.first) throw leaf::ConfigError("date range '" + s + "' ends before it starts");
  return r;
}

leaf::KpiFrame rows_in(const leaf::KpiFrame& f, const DateRange& r) {
  return f.filter([&](std::size_t i) { return f.target_date[i] >= r.first && f.target_date[i] <= r.last; });
}

// Options shared by every command that loads a dataset or fits a model.
struct DataOptions {
  std::string path;
  std::string target = "target";
  std::string features;
  std::string station = "station";
  std::string date = "date";

  void add(CLI::App* app, bool required = true) {
    auto* o = app->add_option("--data", path, "KPI CSV (station,date,features...,target)");
    if (required) o->required();
    app->add_option("--target", target, "target column")->capture_default_str();
    app->add_option("--features", features, "comma-separated feature columns (default: all others)");
    app->add_option("--station-column", station, "station column")->capture_default_str();
    app->add_option("--date-column", date, "date column")->capture_default_str();
  }

  leaf::CsvSchema schema() const {
    leaf::CsvSchema s;
    s.station = station;
    s.date = date;
    s.target = target;
    s.features = split_list(features);
    return s;
  }

  leaf::KpiFrame load() const {
    if (!fs::exists(path)) throw leaf::DataError("dataset '" + path + "' not found");
    return leaf::load_csv(path, schema());
  }
};

struct ModelOptions {
  std::string family, split_rule;
  int trees = 0, depth = 0, min_leaf = 0, k = 0;
  double subsample = 0.0;

  void add(CLI::App* app) {
    app->add_option("--model-family", family, "tree_ensemble or knn");
    app->add_option("--trees", trees, "trees in the ensemble");
    app->add_option("--max-depth", depth, "maximum tree depth");
    app->add_option("--min-leaf", min_leaf, "minimum rows per leaf");
    app->add_option("--feature-subsample", subsample, "share of features tried per split");
    app->add_option("--split-rule", split_rule, "random_threshold or best_of_random");
    app->add_option("--k", k, "neighbours for knn");
  }

  void apply(CLI::App* app, leaf::RegressorSpec& s) const {
    if (app->count("--model-family")) s.family = leaf::parse_family(family);
    if (app->count("--trees")) s.n_trees = trees;
    if (app->count("--max-depth")) s.max_depth = depth;
    if (app->count("--min-leaf")) s.min_leaf = min_leaf;
    if (app->count("--feature-subsample")) s.feature_subsample = subsample;
    if (app->count("--split-rule")) s.split_rule = leaf::parse_split_rule(split_rule);
    if (app->count("--k")) s.k = k;
    s.validate();
  }
};

// Harness flags layered over an optional config file.
struct HarnessOptions {
  std::string config;
  int window = 0, horizon = 0, min_gap = 0, repeats = 0, bins = 0;
  double tau = 0.0;
  std::uint64_t seed = 0;
  ModelOptions model;

  void add(CLI::App* app) {
    app->add_option("--config", config, "JSON config file (flags take precedence)");
    app->add_option("--window", window, "training window in days (default 14)");
    app->add_option("--horizon", horizon, "forecast horizon in days (default 30)");
    app->add_option("--min-gap", min_gap, "days between detector-driven retrains (default 0)");
    app->add_option("--repeats", repeats, "permutation importance repeats (default 5)");
    app->add_option("--tau", tau, "rank correlation threshold for feature groups (default 0.7)");
    app->add_option("--mitigation-bins", bins, "LEA bins behind mitigation plans (default 20)");
    app->add_option("--seed", seed, "master seed (default 0)");
    model.add(app);
  }

  leaf::HarnessConfig build(CLI::App* app) const {
    leaf::HarnessConfig c;
    if (!config.empty()) c = leaf::harness_config_from_json(read_json_file(config), c);
    if (app->count("--window")) c.train_window_days = window;
    if (app->count("--horizon")) c.horizon_days = horizon;
    if (app->count("--min-gap")) c.min_gap_days = min_gap;
    if (app->count("--repeats")) c.importance_repeats = repeats;
    if (app->count("--tau")) c.group_tau = tau;
    if (app->count("--mitigation-bins")) c.mitigation.n_bins = bins;
    if (app->count("--seed")) c.seed = seed;
    model.apply(app, c.model);
    c.validate();
    return c;
  }
};

leaf::KpiFrame supervise(const leaf::KpiFrame& raw, int horizon) {
  const leaf::KpiFrame with_time = raw.feature_index("day_of_week") ? raw : leaf::add_temporal_features(raw);
  return leaf::make_supervised(with_time, horizon);
}

void print_comparison(const leaf::Comparison& c) {
  std::printf("%-14s %14s %10s %12s\n", "scheme", "delta_nrmse_%", "retrains", "mean_nrmse");
  for (const auto& r : c.rows)
    std::printf("%-14s %14s %10d %12s%s\n", r.scheme.c_str(), leaf::format_sig(r.delta_nrmse).c_str(), r.n_retrains,
                leaf::format_sig(r.mean_nrmse).c_str(), r.best_delta ? "  *" : "");
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& preset, const std::string& config, CLI::App* app, std::uint64_t seed,
              const std::string& out) {
  leaf::ScenarioSpec spec;
  if (!preset.empty()) spec = leaf::preset(preset, seed);
  if (!config.empty()) spec = leaf::scenario_from_json(read_json_file(config), spec);
  if (app->count("--seed")) spec.seed = seed;
  spec.validate();
  const auto res = leaf::generate(spec);
  fs::create_directories(out);
  leaf::save_csv((fs::path(out) / "dataset.csv").string(), res.frame);
  json gt = leaf::ground_truth_to_json(res.truth);
  gt["scenario"] = leaf::scenario_to_json(spec);
  if (!preset.empty()) gt["preset"] = preset;
  leaf::write_text(fs::path(out) / "ground_truth.json", gt.dump(2) + "\n");
  const auto disp = leaf::dispersion(res.frame.target);
  std::printf("wrote %zu rows (%d stations, %d days), target CoV %s\n", res.frame.size(), spec.n_stations,
              spec.span_days, leaf::format_sig(disp.cov).c_str());
  return kOk;
}

int cmd_run(const DataOptions& data, const HarnessOptions& h, CLI::App* app, const std::string& schemes,
            const std::string& manifest, const std::string& out, bool svg) {
  leaf::RunRequest req;
  if (!manifest.empty()) {
    req = leaf::request_from_manifest(read_json_file(manifest));
  } else {
    if (data.path.empty()) throw leaf::ConfigError("--data is required unless --manifest is given");
    req.data_path = data.path;
    req.schema = data.schema();
    req.schemes = split_list(schemes);
    req.config = h.build(app);
  }
  for (const auto& s : req.schemes) leaf::Scheme::parse(s);
  if (!fs::exists(req.data_path)) throw leaf::DataError("dataset '" + req.data_path + "' not found");

  const auto outcome = leaf::run_experiment(req, out);
  if (!outcome.reports.empty()) print_comparison(outcome.comparison);
  if (svg && !outcome.reports.empty()) {
    std::vector<std::pair<std::string, leaf::ErrorSeries>> series;
    for (const auto& r : outcome.reports) series.emplace_back(r.scheme.name(), r.trace);
    leaf::write_text(fs::path(out) / "traces.svg", leaf::svg::traces(series));
  }
  for (const auto& f : outcome.failures) std::fprintf(stderr, "scheme failed: %s\n", f.c_str());
  return outcome.ok() ? kOk : kFailed;
}

struct ExplainOptions {
  std::string model_path, save_model, splits = "train,before,during", drift_date, feature, importance_split;
  std::vector<std::string> ranges;
  int bins = 1000;
  bool svg = false;
  std::string out;
};

int cmd_explain(const DataOptions& data, const HarnessOptions& h, CLI::App* app, const ExplainOptions& o) {
  if (o.bins < 2) throw leaf::ConfigError("--bins must be >= 2");
  const auto cfg = h.build(app);
  const auto names = split_list(o.splits);
  if (names.empty()) throw leaf::ConfigError("--splits is empty");
  const leaf::KpiFrame sup = supervise(data.load(), cfg.horizon_days);
  const auto dates = sup.target_dates();
  const leaf::Day first = dates.front(), last = dates.back();

  // Default ranges: the first training window, then the remainder split at
  // the drift date (or halfway).
  std::map<std::string, DateRange> range;
  const leaf::Day train_end = first + (cfg.train_window_days - 1);
  range["train"] = {first, train_end};
  leaf::Day cut = !o.drift_date.empty() ? leaf::parse_date(o.drift_date)
                                        : train_end + 1 + (last - train_end) / 2;
  range["before"] = {train_end + 1, cut - 1};
  range["during"] = {cut, last};
  for (const auto& r : o.ranges) {
    const auto eq = r.find('=');
    if (eq == std::string::npos) throw leaf::ConfigError("--range '" + r + "' must be NAME=START:END");
    range[r.substr(0, eq)] = parse_range(r.substr(eq + 1));
  }
  std::vector<leaf::KpiFrame> frames;
  for (const auto& n : names) {
    auto it = range.find(n);
    if (it == range.end()) throw leaf::ConfigError("split '" + n + "' has no range; pass --range " + n + "=START:END");
    frames.push_back(rows_in(sup, it->second));
    if (frames.back().empty()) throw leaf::DataError("split '" + n + "' selects no rows");
  }

  leaf::TrainedModel model = [&] {
    if (!o.model_path.empty()) return leaf::TrainedModel::load(o.model_path);
    auto spec = cfg.model;
    spec.seed = leaf::derive_seed(cfg.seed, "initial-model", 0);
    return leaf::train(spec, rows_in(sup, range["train"]));
  }();
  if (!o.save_model.empty()) model.save(o.save_model);

  const std::string imp_split = o.importance_split.empty() ? names.back() : o.importance_split;
  const auto imp_it = std::find(names.begin(), names.end(), imp_split);
  if (imp_it == names.end()) throw leaf::ConfigError("--importance-split '" + imp_split + "' is not among --splits");
  const leaf::KpiFrame& imp_frame = frames[static_cast<std::size_t>(imp_it - names.begin())];
  const auto imp = leaf::permutation_importance(model, imp_frame, cfg.importance_repeats,
                                                leaf::derive_seed(cfg.seed, "importance"));
  const auto groups = leaf::group_features(imp, imp_frame, cfg.group_tau);
  const std::string feature = !o.feature.empty() ? o.feature
                              : !groups.empty()  ? groups.front().representative
                                                 : imp.entries.front().feature;

  const fs::path dir(o.out);
  fs::create_directories(dir);
  std::ostringstream s_imp;
  leaf::write_importance_csv(s_imp, imp);
  leaf::write_text(dir / "importance.csv", s_imp.str());
  leaf::write_text(dir / "groups.json", leaf::groups_to_json(groups, cfg.group_tau).dump(2) + "\n");

  std::vector<leaf::LeaplotSplit> splits;
  for (std::size_t i = 0; i < names.size(); ++i) splits.push_back({names[i], &frames[i]});
  const auto profiles = leaf::leaplot(model, splits, feature, o.bins);
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::ostringstream s;
    leaf::write_leaplot_csv(s, std::span(&names[i], 1), std::span(&profiles[i], 1));
    leaf::write_text(dir / ("leaplot_" + names[i] + ".csv"), s.str());
  }

  leaf::KpiFrame evaluated = sup.empty_like();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == "train" && names.size() > 1) continue;
    for (std::size_t r = 0; r < frames[i].size(); ++r) evaluated.push_row_from(frames[i], r);
  }
  const auto grid = leaf::leagram(model, evaluated, feature);
  std::ostringstream s_grid;
  leaf::write_leagram_csv(s_grid, grid);
  leaf::write_text(dir / "leagram.csv", s_grid.str());
  if (o.svg) {
    leaf::write_text(dir / "leaplot.svg", leaf::svg::leaplot(names, profiles));
    leaf::write_text(dir / "leagram.svg", leaf::svg::leagram(grid));
  }

  std::printf("%-6s %-20s %12s %12s\n", "rank", "feature", "importance", "sd");
  for (const auto& e : imp.entries)
    std::printf("%-6d %-20s %12s %12s\n", e.rank, e.feature.c_str(), leaf::format_sig(e.importance).c_str(),
                leaf::format_sig(e.sd).c_str());
  std::printf("%zu feature group(s); LEA along %s with %zu effective bins\n", groups.size(), feature.c_str(),
              profiles.front().n_bins());
  return kOk;
}

int cmd_mitigate(const DataOptions& data, const HarnessOptions& h, CLI::App* app, const std::string& train_end_s,
                 const std::string& latest_end_s, int groups_wanted, const std::string& out) {
  if (groups_wanted < 1) throw leaf::ConfigError("--groups must be >= 1");
  const auto cfg = h.build(app);
  const leaf::KpiFrame sup = supervise(data.load(), cfg.horizon_days);
  const auto dates = sup.target_dates();
  const leaf::Day train_end =
      train_end_s.empty() ? dates.front() + (cfg.train_window_days - 1) : leaf::parse_date(train_end_s);
  const leaf::Day latest_end = latest_end_s.empty() ? dates.back() : leaf::parse_date(latest_end_s);
  if (!(latest_end > train_end)) throw leaf::ConfigError("--latest-end must follow --train-end");
  const DateRange train_range{train_end - (cfg.train_window_days - 1), train_end};
  const DateRange latest_range{latest_end - (cfg.train_window_days - 1), latest_end};
  const leaf::KpiFrame prev = rows_in(sup, train_range);
  const leaf::KpiFrame latest = rows_in(sup, latest_range);
  const leaf::KpiFrame pool = rows_in(sup, {dates.front(), latest_end});
  if (prev.empty() || latest.empty()) throw leaf::DataError("training or latest window selects no rows");

  auto spec = cfg.model;
  spec.seed = leaf::derive_seed(cfg.seed, "initial-model", 0);
  const auto model = leaf::train(spec, prev);
  const std::uint64_t s = leaf::derive_seed(cfg.seed, "leaf", static_cast<std::uint64_t>(latest_end.value));
  const auto imp = leaf::permutation_importance(model, latest, cfg.importance_repeats, leaf::derive_seed(s, "importance"));
  const auto groups = leaf::group_features(imp, latest, cfg.group_tau);
  if (groups.empty()) throw leaf::DegenerateError("no feature has positive importance on the latest window");
  auto mcfg = cfg.mitigation;
  mcfg.n_groups = groups_wanted;
  auto retrain_spec = cfg.model;
  retrain_spec.seed = leaf::derive_seed(cfg.seed, "retrain", static_cast<std::uint64_t>(latest_end.value));
  const auto res = leaf::mitigate_multigroup(prev, latest, pool, groups, model, retrain_spec, mcfg,
                                            leaf::derive_seed(s, "mitigate"));

  const fs::path dir(out);
  fs::create_directories(dir);
  json audit = json::array();
  for (const auto& p : res.audit) audit.push_back(leaf::plan_to_json(p));
  leaf::write_text(dir / "audit.json", json{{"volume", res.volume}, {"rounds", audit}}.dump(2) + "\n");
  leaf::save_csv((dir / "train_mitigated.csv").string(), res.train);
  res.model.save((dir / "model.json").string());

  const double before = leaf::pooled_nrmse(latest, model.predict(latest));
  const double after = leaf::pooled_nrmse(latest, res.model.predict(latest));
  std::printf("branch %s, %zu round(s), volume %zu rows\n", leaf::to_string(res.audit.front().branch).c_str(),
              res.audit.size(), res.volume);
  std::printf("latest-window NRMSE %s -> %s (in-sample for the mitigated model)\n", leaf::format_sig(before).c_str(),
              leaf::format_sig(after).c_str());
  return kOk;
}

leaf::ErrorSeries read_trace_csv(const fs::path& p) {
  std::istringstream in(leaf::read_file(p));
  std::string line;
  std::getline(in, line);
  leaf::ErrorSeries s;
  while (std::getline(in, line)) {
    const auto cells = split_list(line);
    if (cells.size() != 3) throw leaf::DataError("malformed trace row in '" + p.string() + "': " + line);
    double nrmse = 0.0, n = 0.0;
    if (!leaf::parse_double(cells[1], nrmse) || !leaf::parse_double(cells[2], n))
      throw leaf::DataError("malformed trace row in '" + p.string() + "': " + line);
    s.entries.push_back({leaf::parse_date(cells[0]), nrmse, static_cast<std::size_t>(n)});
  }
  return s;
}

int cmd_report(const std::string& run_dir, bool svg) {
  const fs::path dir(run_dir);
  const json cmp = read_json_file((dir / "comparison.json").string());
  leaf::Comparison c;
  for (const auto& r : cmp.at("rows"))
    c.rows.push_back({r.at("scheme").get<std::string>(), r.at("delta_nrmse_pct").get<double>(),
                      r.at("n_retrains").get<int>(), r.at("mean_nrmse").get<double>(),
                      r.at("best_delta").get<bool>(), r.at("best_retrains").get<bool>()});
  print_comparison(c);
  if (svg) {
    std::vector<std::pair<std::string, leaf::ErrorSeries>> series;
    for (const auto& r : c.rows)
      series.emplace_back(r.scheme, read_trace_csv(dir / ("trace_" + leaf::scheme_file_stem(r.scheme) + ".csv")));
    leaf::write_text(dir / "traces.svg", leaf::svg::traces(series));
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detect, explain and mitigate drift in KPI forecasting models"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic multi-station KPI dataset");
  std::string preset, scenario_config, synth_out;
  std::uint64_t synth_seed = 1;
  synth->add_option("--preset", preset, "scenario preset (" + leaf::preset_names() + ")");
  synth->add_option("--config", scenario_config, "scenario JSON (applied over the preset)");
  synth->add_option("--seed", synth_seed, "scenario seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  auto* run = app.add_subcommand("run", "run retraining schemes and compare them");
  DataOptions run_data;
  HarnessOptions run_h;
  std::string schemes = "static,periodic:30,triggered,leaf:1", manifest, run_out;
  bool run_svg = false;
  run_data.add(run, false);
  run_h.add(run);
  run->add_option("--schemes", schemes, "comma-separated schemes: static, periodic:N, triggered, leaf:K")
      ->capture_default_str();
  run->add_option("--manifest", manifest, "rerun exactly from a manifest.json");
  run->add_option("--out", run_out, "output directory")->required();
  run->add_flag("--svg", run_svg, "also render traces.svg");

  auto* explain = app.add_subcommand("explain", "feature importance, groups, LEAplots and LEAgram");
  DataOptions ex_data;
  HarnessOptions ex_h;
  ExplainOptions ex;
  ex_data.add(explain);
  ex_h.add(explain);
  explain->add_option("--model", ex.model_path, "trained model JSON (default: fit on the train split)");
  explain->add_option("--save-model", ex.save_model, "write the model used to this path");
  explain->add_option("--splits", ex.splits, "comma-separated split names")->capture_default_str();
  explain->add_option("--range", ex.ranges, "NAME=START:END target-date range for a split");
  explain->add_option("--drift-date", ex.drift_date, "first date of the default 'during' split");
  explain->add_option("--bins", ex.bins, "LEAplot bins")->capture_default_str();
  explain->add_option("--feature", ex.feature, "feature for LEA (default: top group representative)");
  explain->add_option("--importance-split", ex.importance_split, "split used for importance (default: last)");
  explain->add_option("--out", ex.out, "output directory")->required();
  explain->add_flag("--svg", ex.svg, "also render leaplot.svg and leagram.svg");

  auto* mitigate = app.add_subcommand("mitigate", "one informed forgetting/over-sampling step");
  DataOptions mi_data;
  HarnessOptions mi_h;
  std::string train_end, latest_end, mi_out;
  int n_groups = 1;
  mi_data.add(mitigate);
  mi_h.add(mitigate);
  mitigate->add_option("--train-end", train_end, "last target date of the original training window");
  mitigate->add_option("--latest-end", latest_end, "last target date of the latest window");
  mitigate->add_option("--groups", n_groups, "feature groups to iterate over")->capture_default_str();
  mitigate->add_option("--out", mi_out, "output directory")->required();

  auto* report = app.add_subcommand("report", "print the comparison table of a finished run");
  std::string report_dir;
  bool report_svg = false;
  report->add_option("--run", report_dir, "output directory of a previous run")->required();
  report->add_flag("--svg", report_svg, "render traces.svg");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(preset, scenario_config, synth, synth_seed, synth_out);
    if (run->parsed()) return cmd_run(run_data, run_h, run, schemes, manifest, run_out, run_svg);
    if (explain->parsed()) return cmd_explain(ex_data, ex_h, explain, ex);
    if (mitigate->parsed()) return cmd_mitigate(mi_data, mi_h, mitigate, train_end, latest_end, n_groups, mi_out);
    if (report->parsed()) return cmd_report(report_dir, report_svg);
  } catch (const leaf::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const leaf::DegenerateError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDegenerate;
  } catch (const leaf::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailed;
  }
  return kFailed;
}
