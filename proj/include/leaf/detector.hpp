#pragma once

// Kolmogorov-Smirnov windowing (KSWIN) over a daily error series.
//
// The detector keeps the last W values. Once the window is full, the newest w
// values are compared with w values sampled without replacement from the
// older W - w; drift is flagged when the two-sample KS statistic exceeds
// sqrt(-ln(alpha) / w).

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "leaf/core.hpp"
#include "leaf/metrics.hpp"

namespace leaf {

struct KswinConfig {
  int window_size = 90;
  int stat_size = 30;
  double alpha = 0.005;
  bool reset_on_detect = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (stat_size < 5) throw ConfigError("KSWIN stat_size must be >= 5");
    if (window_size < 2 * stat_size) throw ConfigError("KSWIN window_size must be >= 2 * stat_size");
    if (!(alpha > 0.0 && alpha < 0.5)) throw ConfigError("KSWIN alpha must be in (0, 0.5)");
  }

  double threshold() const { return std::sqrt(-std::log(alpha) / stat_size); }
};

struct DriftEvent {
  Day date;
  double statistic = 0.0;
  double threshold = 0.0;
  friend bool operator==(const DriftEvent&, const DriftEvent&) = default;
};

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DataError("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

class Kswin {
 public:
  explicit Kswin(KswinConfig cfg) : cfg_(cfg), rng_(derive_seed(cfg.seed, "kswin")) { cfg_.validate(); }

  const KswinConfig& config() const { return cfg_; }
  const std::deque<double>& window() const { return window_; }

  std::optional<DriftEvent> feed(Day date, double value) {
    if (!std::isfinite(value)) throw DataError("KSWIN: non-finite input at " + format_date(date));
    if (last_ && !(date > *last_))
      throw DataError("KSWIN: date " + format_date(date) + " fed out of order");
    last_ = date;
    window_.push_back(value);
    const auto W = static_cast<std::size_t>(cfg_.window_size);
    const auto w = static_cast<std::size_t>(cfg_.stat_size);
    if (window_.size() > W) window_.pop_front();
    if (window_.size() < W) return std::nullopt;

    const std::size_t n_old = W - w;
    std::vector<std::size_t> pick(n_old);
    std::iota(pick.begin(), pick.end(), 0);
    std::vector<double> sample(w), recent(w);
    for (std::size_t k = 0; k < w; ++k) {
      std::swap(pick[k], pick[k + rng_.below(n_old - k)]);
      sample[k] = window_[pick[k]];
    }
    std::copy(window_.begin() + static_cast<std::ptrdiff_t>(n_old), window_.end(), recent.begin());
    const double stat = ks_statistic(std::move(sample), recent);
    const double thr = cfg_.threshold();
    if (!(stat > thr)) return std::nullopt;
    if (cfg_.reset_on_detect) window_.assign(recent.begin(), recent.end());
    return DriftEvent{date, stat, thr};
  }

 private:
  KswinConfig cfg_;
  std::deque<double> window_;
  std::optional<Day> last_;
  Rng rng_;
};

struct ScanResult {
  std::vector<DriftEvent> events;
  std::string warning;  // non-empty when the series never filled the window
};

inline ScanResult scan(const ErrorSeries& series, const KswinConfig& cfg) {
  Kswin det(cfg);
  ScanResult out;
  if (series.size() < static_cast<std::size_t>(cfg.window_size)) {
    out.warning = "series has " + std::to_string(series.size()) +
                  " entries, shorter than the KSWIN window of " + std::to_string(cfg.window_size);
    return out;
  }
  for (const auto& e : series.entries)
    if (auto ev = det.feed(e.date, e.nrmse)) out.events.push_back(*ev);
  return out;
}

inline nlohmann::json events_to_json(std::span<const DriftEvent> events) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : events)
    j.push_back({{"date", format_date(e.date)}, {"statistic", e.statistic}, {"threshold", e.threshold}});
  return j;
}

}  // namespace leaf
