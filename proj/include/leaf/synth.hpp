#pragma once

// Synthetic multi-station KPI streams with injected, annotated drift.
//
//   target(s, t) = base(s) * (1 + weekly_amplitude * sin(2 pi t / 7))
//                + trend_slope * t + shock(s, t) + burst(s, t) + N(0, noise_sd)
//
// shock(s, t) = base(s) * magnitude * relax(t) for each shock, where relax is
// 1 at the onset and decays linearly to 0 over recovery_days (recovery_days = 0
// keeps the shift in place for the rest of the span). A burst multiplies the
// noiseless level by exp(burst_scale * |Z|) with probability burst_prob.
//
// Side channel j is a_j * target(s, t) + b_j + N(0, noise_sd), with a_j, b_j
// drawn once per scenario.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "leaf/core.hpp"
#include "leaf/dataset.hpp"

namespace leaf {

struct Shock {
  int onset_day = 0;
  double magnitude = 0.0;  // relative to the station base level
  int recovery_days = 0;   // 0 = persistent
  std::vector<int> stations;  // empty = every station
};

struct LossWindow {
  int start_day = 0;
  int end_day = 0;                // inclusive
  std::vector<int> stations;      // empty = every station
};

struct ScenarioSpec {
  int n_stations = 20;
  int span_days = 600;
  std::uint64_t seed = 1;
  Day start_date = Day(17532);  // 2018-01-01
  std::vector<double> base_levels;  // one per station; empty = drawn from seed
  double base_level_min = 60.0;
  double base_level_max = 140.0;
  double weekly_amplitude = 0.0;
  double trend_slope = 0.0;
  std::vector<Shock> shocks;
  double burst_prob = 0.0;
  double burst_scale = 1.0;
  std::vector<LossWindow> loss_windows;
  int side_channels = 4;
  double noise_sd = 0.0;

  void validate() const {
    if (n_stations < 1) throw ConfigError("scenario needs at least one station");
    if (span_days < 1) throw ConfigError("scenario needs a positive span");
    if (!base_levels.empty() && static_cast<int>(base_levels.size()) != n_stations)
      throw ConfigError("base_levels must list one level per station");
    for (double b : base_levels)
      if (!(b > 0.0)) throw ConfigError("base levels must be positive");
    if (base_levels.empty() && !(base_level_min > 0.0 && base_level_max >= base_level_min))
      throw ConfigError("base level range must be positive and ordered");
    if (weekly_amplitude < 0.0) throw ConfigError("weekly_amplitude must be >= 0");
    if (!(burst_prob >= 0.0 && burst_prob <= 1.0)) throw ConfigError("burst_prob must be in [0,1]");
    if (!(burst_scale > 0.0)) throw ConfigError("burst_scale must be positive");
    if (side_channels < 0) throw ConfigError("side_channels must be >= 0");
    if (noise_sd < 0.0) throw ConfigError("noise_sd must be >= 0");
    for (const auto& s : shocks) {
      if (s.onset_day < 0 || s.onset_day >= span_days)
        throw ConfigError("shock onset outside the scenario span");
      if (s.recovery_days < 0) throw ConfigError("shock recovery_days must be >= 0");
      for (int st : s.stations)
        if (st < 0 || st >= n_stations) throw ConfigError("shock names an unknown station");
    }
    for (const auto& w : loss_windows) {
      if (w.start_day < 0 || w.end_day >= span_days || w.start_day > w.end_day)
        throw ConfigError("loss window outside the scenario span");
      for (int s : w.stations)
        if (s < 0 || s >= n_stations) throw ConfigError("loss window names an unknown station");
    }
  }
};

struct GroundTruth {
  struct DayParams {
    Day date;
    double shock_factor = 0.0;  // summed relative shock level
    double trend = 0.0;
  };
  std::vector<Day> drift_days;
  std::vector<LossWindow> loss_windows;
  std::vector<DayParams> params;
};

inline std::string station_name(int s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%03d", s);
  return buf;
}

namespace synth_detail {

enum Channel : std::uint64_t { kNoise = 0, kBurst = 1, kBase = 2, kSide = 16 };

inline std::uint64_t stream(std::uint64_t seed, int station, std::uint64_t channel) {
  return derive_seed(seed, "synth", static_cast<std::uint64_t>(station) * 4096 + channel);
}

}  // namespace synth_detail

/// Relative shock level summed over all shocks at day offset t. A negative
/// station counts every shock regardless of the stations it targets.
inline double shock_factor(const ScenarioSpec& spec, int t, int station = -1) {
  double f = 0.0;
  for (const auto& s : spec.shocks) {
    if (t < s.onset_day) continue;
    if (station >= 0 && !s.stations.empty() &&
        std::find(s.stations.begin(), s.stations.end(), station) == s.stations.end())
      continue;
    if (s.recovery_days == 0) {
      f += s.magnitude;
    } else {
      const double elapsed = t - s.onset_day;
      if (elapsed < s.recovery_days) f += s.magnitude * (1.0 - elapsed / s.recovery_days);
    }
  }
  return f;
}

inline std::vector<double> station_base_levels(const ScenarioSpec& spec) {
  if (!spec.base_levels.empty()) return spec.base_levels;
  std::vector<double> out(spec.n_stations);
  for (int s = 0; s < spec.n_stations; ++s) {
    Rng rng(synth_detail::stream(spec.seed, s, synth_detail::kBase));
    out[s] = rng.uniform(spec.base_level_min, spec.base_level_max);
  }
  return out;
}

struct SideChannelCoef {
  double a = 1.0;
  double b = 0.0;
};

inline std::vector<SideChannelCoef> side_channel_coefficients(const ScenarioSpec& spec) {
  std::vector<SideChannelCoef> out(spec.side_channels);
  Rng rng(derive_seed(spec.seed, "side-coefficients"));
  for (auto& c : out) {
    c.a = rng.uniform(0.5, 2.0);
    c.b = rng.uniform(0.0, 50.0);
  }
  return out;
}

/// Noiseless, burst-free level.
inline double deterministic_level(const ScenarioSpec& spec, double base, int t, int station = -1) {
  constexpr double kTwoPi = 6.283185307179586;
  return base * (1.0 + spec.weekly_amplitude * std::sin(kTwoPi * t / 7.0)) +
         spec.trend_slope * t + base * shock_factor(spec, t, station);
}

inline bool in_loss_window(const ScenarioSpec& spec, int station, int t) {
  for (const auto& w : spec.loss_windows) {
    if (t < w.start_day || t > w.end_day) continue;
    if (w.stations.empty() ||
        std::find(w.stations.begin(), w.stations.end(), station) != w.stations.end())
      return true;
  }
  return false;
}

struct SynthResult {
  KpiFrame frame;
  GroundTruth truth;
};

/// Rows are ordered by station then day. Each (station, channel) pair owns an
/// RNG stream that advances once per day whether or not the row is dropped,
/// so loss windows and extra stations never alter other values.
inline SynthResult generate(const ScenarioSpec& spec) {
  spec.validate();
  const auto bases = station_base_levels(spec);
  const auto coef = side_channel_coefficients(spec);

  SynthResult res;
  KpiFrame& f = res.frame;
  f.target_name = "target";
  for (int j = 0; j < spec.side_channels; ++j) f.feature_names.push_back("side_" + std::to_string(j));
  f.columns.resize(spec.side_channels);
  f.reserve(static_cast<std::size_t>(spec.n_stations) * spec.span_days);

  for (int s = 0; s < spec.n_stations; ++s) {
    Rng noise(synth_detail::stream(spec.seed, s, synth_detail::kNoise));
    Rng burst(synth_detail::stream(spec.seed, s, synth_detail::kBurst));
    std::vector<Rng> side;
    for (int j = 0; j < spec.side_channels; ++j)
      side.emplace_back(synth_detail::stream(spec.seed, s, synth_detail::kSide + j));
    const std::string name = station_name(s);
    for (int t = 0; t < spec.span_days; ++t) {
      const double level = deterministic_level(spec, bases[s], t, s);
      // Every stream draws exactly twice per day.
      const double bu = burst.uniform();
      const double bz = burst.normal();
      const double z = noise.normal();
      double y = level;
      if (bu < spec.burst_prob) y += level * (std::exp(spec.burst_scale * std::abs(bz)) - 1.0);
      y += spec.noise_sd * z;
      std::vector<double> sv(spec.side_channels);
      for (int j = 0; j < spec.side_channels; ++j) {
        const double e = side[j].normal();
        side[j].uniform();
        sv[j] = coef[j].a * y + coef[j].b + spec.noise_sd * e;
      }
      if (in_loss_window(spec, s, t)) continue;
      f.station.push_back(name);
      f.date.push_back(spec.start_date + t);
      f.target_date.push_back(spec.start_date + t);
      for (int j = 0; j < spec.side_channels; ++j) f.columns[j].push_back(sv[j]);
      f.target.push_back(y);
      f.labeled.push_back(1);
      f.row_id.push_back(static_cast<std::int64_t>(f.size() - 1));
    }
  }

  GroundTruth& gt = res.truth;
  for (const auto& s : spec.shocks) gt.drift_days.push_back(spec.start_date + s.onset_day);
  for (const auto& w : spec.loss_windows) gt.drift_days.push_back(spec.start_date + w.start_day);
  std::sort(gt.drift_days.begin(), gt.drift_days.end());
  gt.drift_days.erase(std::unique(gt.drift_days.begin(), gt.drift_days.end()), gt.drift_days.end());
  gt.loss_windows = spec.loss_windows;
  gt.params.reserve(spec.span_days);
  for (int t = 0; t < spec.span_days; ++t)
    gt.params.push_back({spec.start_date + t, shock_factor(spec, t), spec.trend_slope * t});
  return res;
}

// ---------------------------------------------------------------------------
// Presets.

struct PresetInfo {
  std::string name;
  std::string description;
  double cov_lo;  // declared band for the target coefficient of variation
  double cov_hi;
};

inline const std::vector<PresetInfo>& preset_catalog() {
  static const std::vector<PresetInfo> catalog = {
      {"constant", "no variation beyond per-station levels", 0.0, 1.0},
      {"no-drift", "stationary noisy weekly cycle", 0.05, 1.0},
      {"low-dispersion-periodic", "weekly cycle with mild trend", 0.05, 1.0},
      {"bursty-high-dispersion", "heavy-tailed short-lived bursts", 1.0, 1e9},
      {"lossy", "weekly cycle with data-loss windows", 0.05, 1.0},
      {"sudden-shock", "sudden level shift with gradual recovery", 0.05, 1.0},
  };
  return catalog;
}

inline std::string preset_names() {
  std::string s;
  for (const auto& p : preset_catalog()) s += (s.empty() ? "" : ", ") + p.name;
  return s;
}

inline const PresetInfo& preset_info(const std::string& name) {
  for (const auto& p : preset_catalog())
    if (p.name == name) return p;
  throw ConfigError("unknown preset '" + name + "' (valid presets: " + preset_names() + ")");
}

inline ScenarioSpec preset(const std::string& name, std::uint64_t seed = 1) {
  preset_info(name);
  ScenarioSpec s;
  s.seed = seed;
  s.noise_sd = 3.0;
  s.weekly_amplitude = 0.25;
  if (name == "constant") {
    s.weekly_amplitude = 0.0;
    s.noise_sd = 0.0;
  } else if (name == "no-drift") {
    // defaults
  } else if (name == "low-dispersion-periodic") {
    s.trend_slope = 0.01;
  } else if (name == "bursty-high-dispersion") {
    s.weekly_amplitude = 0.1;
    s.burst_prob = 0.15;
    s.burst_scale = 1.5;
  } else if (name == "lossy") {
    s.trend_slope = 0.01;
    s.loss_windows = {{200, 229, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}}, {400, 409, {}}};
  } else if (name == "sudden-shock") {
    s.shocks = {{300, 0.5, 120, {}}};
  }
  return s;
}

// ---------------------------------------------------------------------------
// JSON.

inline void to_json(nlohmann::json& j, const Shock& s) {
  j = {{"onset_day", s.onset_day},
       {"magnitude", s.magnitude},
       {"recovery_days", s.recovery_days},
       {"stations", s.stations}};
}
inline void from_json(const nlohmann::json& j, Shock& s) {
  s.onset_day = j.at("onset_day").get<int>();
  s.magnitude = j.at("magnitude").get<double>();
  s.recovery_days = j.value("recovery_days", 0);
  s.stations = j.value("stations", std::vector<int>{});
}
inline void to_json(nlohmann::json& j, const LossWindow& w) {
  j = {{"start_day", w.start_day}, {"end_day", w.end_day}, {"stations", w.stations}};
}
inline void from_json(const nlohmann::json& j, LossWindow& w) {
  w.start_day = j.at("start_day").get<int>();
  w.end_day = j.at("end_day").get<int>();
  w.stations = j.value("stations", std::vector<int>{});
}

inline nlohmann::json scenario_to_json(const ScenarioSpec& s) {
  return {{"n_stations", s.n_stations},
          {"span_days", s.span_days},
          {"seed", s.seed},
          {"start_date", format_date(s.start_date)},
          {"base_levels", s.base_levels},
          {"base_level_min", s.base_level_min},
          {"base_level_max", s.base_level_max},
          {"weekly_amplitude", s.weekly_amplitude},
          {"trend_slope", s.trend_slope},
          {"shocks", s.shocks},
          {"burst_prob", s.burst_prob},
          {"burst_scale", s.burst_scale},
          {"loss_windows", s.loss_windows},
          {"side_channels", s.side_channels},
          {"noise_sd", s.noise_sd}};
}

/// Missing keys keep the values already in `base`.
inline ScenarioSpec scenario_from_json(const nlohmann::json& j, ScenarioSpec base = {}) {
  ScenarioSpec s = std::move(base);
  s.n_stations = j.value("n_stations", s.n_stations);
  s.span_days = j.value("span_days", s.span_days);
  s.seed = j.value("seed", s.seed);
  if (j.contains("start_date")) s.start_date = parse_date(j.at("start_date").get<std::string>());
  s.base_levels = j.value("base_levels", s.base_levels);
  s.base_level_min = j.value("base_level_min", s.base_level_min);
  s.base_level_max = j.value("base_level_max", s.base_level_max);
  s.weekly_amplitude = j.value("weekly_amplitude", s.weekly_amplitude);
  s.trend_slope = j.value("trend_slope", s.trend_slope);
  s.shocks = j.value("shocks", s.shocks);
  s.burst_prob = j.value("burst_prob", s.burst_prob);
  s.burst_scale = j.value("burst_scale", s.burst_scale);
  s.loss_windows = j.value("loss_windows", s.loss_windows);
  s.side_channels = j.value("side_channels", s.side_channels);
  s.noise_sd = j.value("noise_sd", s.noise_sd);
  return s;
}

inline nlohmann::json ground_truth_to_json(const GroundTruth& gt) {
  nlohmann::json days = nlohmann::json::array();
  for (Day d : gt.drift_days) days.push_back(format_date(d));
  return {{"drift_days", days}, {"loss_windows", gt.loss_windows}};
}

}  // namespace leaf
