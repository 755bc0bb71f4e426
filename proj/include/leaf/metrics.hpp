#pragma once

// Per-date normalized RMSE, the relative change of its time average against
// a static baseline, signed normalized error and dispersion.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "leaf/core.hpp"
#include "leaf/dataset.hpp"

namespace leaf {

/// RMSE of `pred` against `truth`, divided by the range of `truth`.
/// Returns nullopt when the range is zero (the ratio is undefined there).
inline std::optional<double> nrmse_on_date(std::span<const double> truth,
                                           std::span<const double> pred) {
  if (truth.size() != pred.size()) throw DataError("nrmse: truth and prediction lengths differ");
  if (truth.empty()) throw DataError("nrmse: empty input");
  double sse = 0.0;
  double lo = truth[0], hi = truth[0];
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = pred[i] - truth[i];
    sse += d * d;
    lo = std::min(lo, truth[i]);
    hi = std::max(hi, truth[i]);
  }
  if (!(hi > lo)) return std::nullopt;
  return std::sqrt(sse / static_cast<double>(truth.size())) / (hi - lo);
}

/// Signed error normalized by a target range. Positive means overestimation.
inline double normalized_error(double truth, double pred, double range) {
  if (!(range > 0.0)) throw DataError("normalized_error: range must be positive");
  return (pred - truth) / range;
}

struct DispersionStat {
  double mean = 0.0;
  double sd = 0.0;   // population standard deviation
  double cov = 0.0;  // sd / mean
};

inline DispersionStat dispersion(std::span<const double> values) {
  if (values.size() < 2) throw DataError("dispersion needs at least two values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (mean == 0.0) throw DegenerateError("dispersion undefined for zero mean");
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  return {mean, sd, sd / mean};
}

/// Network-level error per evaluation date.
struct ErrorSeries {
  struct Entry {
    Day date;
    double nrmse = 0.0;
    std::size_t n_samples = 0;
    friend bool operator==(const Entry&, const Entry&) = default;
  };
  struct Skip {
    Day date;
    std::string reason;
  };

  std::vector<Entry> entries;
  std::vector<Skip> skipped;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }

  double mean() const {
    if (entries.empty()) throw DegenerateError("mean of an empty error series");
    double s = 0.0;
    for (const auto& e : entries) s += e.nrmse;
    return s / static_cast<double>(entries.size());
  }

  std::vector<double> values() const {
    std::vector<double> v;
    v.reserve(entries.size());
    for (const auto& e : entries) v.push_back(e.nrmse);
    return v;
  }
};

/// Groups rows of a supervised frame by target date and evaluates NRMSE per
/// date. Dates with fewer than two samples or a degenerate target range are
/// skipped and recorded in `skipped`.
inline ErrorSeries error_series(const KpiFrame& eval, std::span<const double> pred) {
  if (eval.empty()) throw DegenerateError("error_series: empty evaluation frame");
  if (pred.size() != eval.size()) throw DataError("error_series: prediction count mismatch");
  std::map<Day, std::vector<std::size_t>> by_date;
  for (std::size_t i = 0; i < eval.size(); ++i) by_date[eval.target_date[i]].push_back(i);

  ErrorSeries out;
  std::vector<double> t, p;
  for (const auto& [day, rows] : by_date) {
    if (rows.size() < 2) {
      out.skipped.push_back({day, "single sample"});
      continue;
    }
    t.clear();
    p.clear();
    for (std::size_t i : rows) {
      t.push_back(eval.target[i]);
      p.push_back(pred[i]);
    }
    auto v = nrmse_on_date(t, p);
    if (!v) {
      out.skipped.push_back({day, "degenerate target range"});
      continue;
    }
    out.entries.push_back({day, *v, rows.size()});
  }
  if (out.entries.empty()) throw DegenerateError("error_series: no evaluable dates");
  return out;
}

template <typename Model>
  requires requires(const Model& m, const KpiFrame& f) { m.predict(f); }
ErrorSeries error_series(const Model& model, const KpiFrame& eval) {
  const std::vector<double> pred = model.predict(eval);
  return error_series(eval, pred);
}

/// Percentage change of the mean NRMSE of `mitigated` relative to `baseline`,
/// both averaged over the dates the two series have in common.
inline double delta_mean_nrmse(const ErrorSeries& mitigated, const ErrorSeries& baseline) {
  double sm = 0.0, sb = 0.0;
  std::size_t n = 0;
  auto a = mitigated.entries.begin();
  auto b = baseline.entries.begin();
  while (a != mitigated.entries.end() && b != baseline.entries.end()) {
    if (a->date < b->date) {
      ++a;
    } else if (b->date < a->date) {
      ++b;
    } else {
      sm += a->nrmse;
      sb += b->nrmse;
      ++n;
      ++a;
      ++b;
    }
  }
  if (n == 0) throw DegenerateError("delta_mean_nrmse: series share no dates");
  if (sb == 0.0) throw DegenerateError("delta_mean_nrmse: baseline mean is zero");
  const double mm = sm / static_cast<double>(n);
  const double mb = sb / static_cast<double>(n);
  return (mm - mb) / mb * 100.0;
}

inline void write_error_series_csv(std::ostream& out, const ErrorSeries& s) {
  out << "date,nrmse,n_samples\n";
  for (const auto& e : s.entries)
    out << format_date(e.date) << ',' << format_double(e.nrmse) << ',' << e.n_samples << '\n';
}

/// Auxiliary regression metrics reported alongside NRMSE. They play no part
/// in detection or mitigation.
struct RegressionMetrics {
  double nrmse = 0.0;
  double rmse = 0.0;
  double mse = 0.0;
  double mae = 0.0;
  double median_ae = 0.0;
  double mape = 0.0;  // percent, over rows with nonzero truth
  double r2 = 0.0;
  double explained_variance = 0.0;
  double pearson = 0.0;
};

inline RegressionMetrics evaluate_all(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size() || truth.empty())
    throw DataError("evaluate_all: lengths must match and be nonzero");
  const double n = static_cast<double>(truth.size());
  RegressionMetrics m;
  double mt = 0, mp = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    mt += truth[i];
    mp += pred[i];
  }
  mt /= n;
  mp /= n;
  double sse = 0, sae = 0, sst = 0, spp = 0, stp = 0, ape = 0, mean_res = 0;
  std::size_t n_ape = 0;
  std::vector<double> abs_err(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double r = truth[i] - pred[i];
    sse += r * r;
    sae += std::abs(r);
    abs_err[i] = std::abs(r);
    mean_res += r;
    sst += (truth[i] - mt) * (truth[i] - mt);
    spp += (pred[i] - mp) * (pred[i] - mp);
    stp += (truth[i] - mt) * (pred[i] - mp);
    if (truth[i] != 0.0) {
      ape += std::abs(r / truth[i]);
      ++n_ape;
    }
  }
  mean_res /= n;
  double var_res = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double r = truth[i] - pred[i] - mean_res;
    var_res += r * r;
  }
  std::sort(abs_err.begin(), abs_err.end());
  const std::size_t k = abs_err.size();
  m.median_ae = k % 2 ? abs_err[k / 2] : 0.5 * (abs_err[k / 2 - 1] + abs_err[k / 2]);
  m.mse = sse / n;
  m.rmse = std::sqrt(m.mse);
  m.mae = sae / n;
  m.mape = n_ape ? 100.0 * ape / static_cast<double>(n_ape) : 0.0;
  m.r2 = sst > 0 ? 1.0 - sse / sst : 0.0;
  m.explained_variance = sst > 0 ? 1.0 - var_res / sst : 0.0;
  m.pearson = (sst > 0 && spp > 0) ? stp / std::sqrt(sst * spp) : 0.0;
  m.nrmse = nrmse_on_date(truth, pred).value_or(0.0);
  return m;
}

}  // namespace leaf
