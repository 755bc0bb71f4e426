#pragma once

// Error explanation: permutation importance, correlation-based feature
// groups with a representative per group, local error approximation (LEA)
// over quantile bins of a representative feature, and the per-date signed
// error grid (LEAgram).

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "leaf/core.hpp"
#include "leaf/dataset.hpp"
#include "leaf/metrics.hpp"
#include "leaf/models.hpp"

namespace leaf {

// ---------------------------------------------------------------------------
// Permutation importance.

struct FeatureImportance {
  std::string feature;
  double importance = 0.0;  // mean NRMSE increase when the column is shuffled
  double sd = 0.0;          // spread of the increase across repeats
  int rank = 0;             // 1 = most important
};

struct ImportanceTable {
  double baseline_nrmse = 0.0;
  std::vector<FeatureImportance> entries;  // ordered by rank

  const FeatureImportance& at(std::string_view feature) const {
    for (const auto& e : entries)
      if (e.feature == feature) return e;
    throw DataError("feature '" + std::string(feature) + "' not in importance table");
  }
};

/// NRMSE over a whole frame (all dates pooled, normalized by the global
/// target range).
inline double pooled_nrmse(const KpiFrame& eval, std::span<const double> pred) {
  auto v = nrmse_on_date(eval.target, pred);
  if (!v) throw DegenerateError("evaluation set has a degenerate target range");
  return *v;
}

/// Shuffles each feature column within `eval` (the model is not refit) and
/// reports the mean increase of pooled NRMSE. Ties in importance are ranked
/// by feature name.
inline ImportanceTable permutation_importance(const TrainedModel& model, const KpiFrame& eval,
                                              int repeats, std::uint64_t seed) {
  if (repeats < 1) throw ConfigError("permutation importance needs repeats >= 1");
  if (eval.empty()) throw DegenerateError("permutation importance on an empty frame");
  ImportanceTable table;
  table.baseline_nrmse = pooled_nrmse(eval, model.predict(eval));

  KpiFrame work = eval;
  for (const auto& name : model.feature_names()) {
    auto j = work.feature_index(name);
    if (!j) throw DataError("schema mismatch: evaluation frame lacks feature '" + name + "'");
    const std::vector<double> original = work.columns[*j];
    std::vector<double> deltas;
    for (int r = 0; r < repeats; ++r) {
      Rng rng(derive_seed(seed, name, static_cast<std::uint64_t>(r)));
      std::vector<double> shuffled = original;
      rng.shuffle(shuffled);
      work.columns[*j] = std::move(shuffled);
      deltas.push_back(pooled_nrmse(work, model.predict(work)) - table.baseline_nrmse);
    }
    work.columns[*j] = original;
    const double mean = std::accumulate(deltas.begin(), deltas.end(), 0.0) / repeats;
    double ss = 0.0;
    for (double d : deltas) ss += (d - mean) * (d - mean);
    const double sd = repeats > 1 ? std::sqrt(ss / (repeats - 1)) : 0.0;
    table.entries.push_back({name, mean, sd, 0});
  }
  std::sort(table.entries.begin(), table.entries.end(), [](const auto& a, const auto& b) {
    if (a.importance != b.importance) return a.importance > b.importance;
    return a.feature < b.feature;
  });
  for (std::size_t i = 0; i < table.entries.size(); ++i) table.entries[i].rank = static_cast<int>(i) + 1;
  return table;
}

// ---------------------------------------------------------------------------
// Grouping.

/// Average ranks (ties share the mean of their positions), 1-based.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Spearman rank correlation; 0 when either input is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("spearman: length mismatch");
  if (a.size() < 2) return 0.0;
  const auto ra = average_ranks(a), rb = average_ranks(b);
  return pearson(ra, rb);
}

struct FeatureGroup {
  std::string representative;
  std::vector<std::string> members;  // representative first, then by importance
  double representative_importance = 0.0;
};

/// Walks features by descending importance. Each not-yet-grouped feature
/// with positive importance seeds a group holding every ungrouped feature
/// whose |rank correlation| with it reaches tau. Features with importance
/// <= 0 never seed a group, so the walk stops at the first of them.
inline std::vector<FeatureGroup> group_features(const ImportanceTable& imp, const KpiFrame& data,
                                                double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("grouping threshold tau must be in (0, 1]");
  for (const auto& e : imp.entries)
    if (!data.feature_index(e.feature))
      throw DataError("grouping data lacks feature '" + e.feature + "'");
  std::vector<FeatureGroup> groups;
  std::vector<bool> taken(imp.entries.size(), false);
  for (std::size_t s = 0; s < imp.entries.size(); ++s) {
    if (taken[s]) continue;
    const auto& seed = imp.entries[s];
    if (!(seed.importance > 0.0)) break;
    taken[s] = true;
    FeatureGroup g{seed.feature, {seed.feature}, seed.importance};
    const auto& a = data.column(seed.feature);
    for (std::size_t k = s + 1; k < imp.entries.size(); ++k) {
      if (taken[k]) continue;
      if (std::abs(spearman(a, data.column(imp.entries[k].feature))) >= tau) {
        taken[k] = true;
        g.members.push_back(imp.entries[k].feature);
      }
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Local error approximation.

/// N+1 quantile edges (linear interpolation between order statistics) with
/// duplicates collapsed. May return a single edge if all values are equal.
inline std::vector<double> quantile_edges(std::vector<double> values, int n_bins) {
  if (values.empty()) throw DegenerateError("quantile edges of an empty sample");
  if (n_bins < 1) throw ConfigError("n_bins must be >= 1");
  std::sort(values.begin(), values.end());
  std::vector<double> edges;
  edges.reserve(static_cast<std::size_t>(n_bins) + 1);
  const double last = static_cast<double>(values.size() - 1);
  for (int i = 0; i <= n_bins; ++i) {
    const double pos = last * i / n_bins;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    double q = values[lo] + frac * (values[hi] - values[lo]);
    if (i == n_bins) q = values.back();
    if (edges.empty() || q > edges.back()) edges.push_back(q);
  }
  return edges;
}

/// Bin index of `x` for edges e_0 < ... < e_B: bin i covers [e_i, e_{i+1}),
/// the last bin is closed, and values outside [e_0, e_B] clamp to the end bins.
inline std::size_t bin_of(double x, std::span<const double> edges) {
  const std::size_t bins = edges.size() - 1;
  if (bins <= 1) return 0;
  auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, x);
  return static_cast<std::size_t>(it - (edges.begin() + 1));
}

struct LeaProfile {
  std::string feature;
  int requested_bins = 0;
  std::vector<double> bin_edges;                 // effective bins = size() - 1
  std::vector<std::optional<double>> bin_errors;  // nullopt = empty bin
  std::vector<std::size_t> n_per_bin;
  double normalization_range = 1.0;

  std::size_t n_bins() const { return bin_errors.size(); }
  std::size_t n_samples() const {
    return std::accumulate(n_per_bin.begin(), n_per_bin.end(), std::size_t{0});
  }
};

/// Per-bin RMSE divided by `range`, for given edges.
inline LeaProfile lea_profile_from(std::string feature, std::span<const double> values,
                                   std::span<const double> truth, std::span<const double> pred,
                                   std::vector<double> edges, double range) {
  if (edges.size() < 2) throw DegenerateError("LEA needs at least two distinct bin edges");
  if (!(range > 0.0)) throw DegenerateError("LEA normalization range must be positive");
  LeaProfile p;
  p.feature = std::move(feature);
  p.bin_edges = std::move(edges);
  p.normalization_range = range;
  const std::size_t bins = p.bin_edges.size() - 1;
  std::vector<double> sse(bins, 0.0);
  p.n_per_bin.assign(bins, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t b = bin_of(values[i], p.bin_edges);
    const double d = pred[i] - truth[i];
    sse[b] += d * d;
    ++p.n_per_bin[b];
  }
  p.bin_errors.resize(bins);
  for (std::size_t b = 0; b < bins; ++b)
    if (p.n_per_bin[b] > 0)
      p.bin_errors[b] = std::sqrt(sse[b] / static_cast<double>(p.n_per_bin[b])) / range;
  return p;
}

inline double target_range(const KpiFrame& f) {
  if (f.empty()) throw DegenerateError("target range of an empty frame");
  auto [lo, hi] = std::minmax_element(f.target.begin(), f.target.end());
  return *hi - *lo;
}

/// LEA of `model` on `eval` along `feature`. Edges default to the quantiles
/// of the feature over `eval`; pass precomputed edges to compare splits on a
/// shared axis. Errors are normalized by the global target range of `eval`.
inline LeaProfile lea_profile(const TrainedModel& model, const KpiFrame& eval,
                              const std::string& feature, int n_bins,
                              std::optional<std::vector<double>> edges = std::nullopt) {
  if (n_bins < 2) throw ConfigError("LEA requires n_bins >= 2");
  if (eval.empty()) throw DegenerateError("LEA on an empty frame");
  const auto& values = eval.column(feature);
  std::vector<double> e = edges ? *edges : quantile_edges(values, n_bins);
  if (e.size() < 2)
    throw DegenerateError("feature '" + feature + "' is constant; no usable quantile edges");
  const double range = target_range(eval);
  if (!(range > 0.0)) throw DegenerateError("evaluation target range is zero");
  auto p = lea_profile_from(feature, values, eval.target, model.predict(eval), std::move(e), range);
  p.requested_bins = n_bins;
  return p;
}

struct LeaplotSplit {
  std::string name;
  const KpiFrame* frame;
};

/// One LEA profile per split, all on edges computed from the union of the
/// splits' feature values.
inline std::vector<LeaProfile> leaplot(const TrainedModel& model, std::span<const LeaplotSplit> splits,
                                       const std::string& feature, int n_bins) {
  if (n_bins < 2) throw ConfigError("LEAplot requires n_bins >= 2");
  std::vector<double> all;
  for (const auto& s : splits) {
    const auto& c = s.frame->column(feature);
    all.insert(all.end(), c.begin(), c.end());
  }
  const auto edges = quantile_edges(all, n_bins);
  std::vector<LeaProfile> out;
  for (const auto& s : splits) out.push_back(lea_profile(model, *s.frame, feature, n_bins, edges));
  return out;
}

inline void write_leaplot_csv(std::ostream& out, std::span<const std::string> split_names,
                              std::span<const LeaProfile> profiles) {
  out << "bin_low,bin_high,split,nrmse,n\n";
  for (std::size_t s = 0; s < profiles.size(); ++s) {
    const auto& p = profiles[s];
    for (std::size_t b = 0; b < p.n_bins(); ++b) {
      out << format_double(p.bin_edges[b]) << ',' << format_double(p.bin_edges[b + 1]) << ','
          << split_names[s] << ',';
      if (p.bin_errors[b]) out << format_double(*p.bin_errors[b]);
      out << ',' << p.n_per_bin[b] << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// LEAgram.

struct LeagramGrid {
  std::string feature;
  std::vector<Day> dates;
  std::vector<double> bin_edges;
  std::size_t requested_bins = 0;
  double normalization_range = 1.0;
  struct Cell {
    std::size_t date_index;
    std::size_t bin;
    double ne;  // mean signed normalized error of the samples in the cell
    std::size_t n;
  };
  std::vector<Cell> cells;  // ordered by (date, bin)

  std::size_t n_bins() const { return bin_edges.size() - 1; }
};

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Signed per-sample error over (target date x feature quantile). The bin
/// count is the smallest power of two covering the busiest date, so cells
/// typically hold one sample each. NE uses the global target range of
/// `eval`. When that range is zero (a single sample, say) the largest
/// absolute target is used instead, or 1 when that is zero too.
inline LeagramGrid leagram(const TrainedModel& model, const KpiFrame& eval, const std::string& feature) {
  if (eval.empty()) throw DegenerateError("LEAgram on an empty frame");
  const auto& values = eval.column(feature);
  const auto pred = model.predict(eval);
  std::map<Day, std::vector<std::size_t>> by_date;
  for (std::size_t i = 0; i < eval.size(); ++i) by_date[eval.target_date[i]].push_back(i);
  std::size_t busiest = 0;
  for (const auto& [d, rows] : by_date) busiest = std::max(busiest, rows.size());

  LeagramGrid g;
  g.feature = feature;
  g.requested_bins = next_power_of_two(busiest);
  g.bin_edges = quantile_edges(values, static_cast<int>(g.requested_bins));
  if (g.bin_edges.size() < 2) g.bin_edges.push_back(g.bin_edges.front());
  double range = target_range(eval);
  if (!(range > 0.0)) {
    range = 0.0;
    for (double t : eval.target) range = std::max(range, std::abs(t));
    if (!(range > 0.0)) range = 1.0;
  }
  g.normalization_range = range;
  for (const auto& [d, rows] : by_date) {
    const std::size_t di = g.dates.size();
    g.dates.push_back(d);
    std::map<std::size_t, std::pair<double, std::size_t>> acc;
    for (std::size_t i : rows) {
      auto& a = acc[bin_of(values[i], g.bin_edges)];
      a.first += normalized_error(eval.target[i], pred[i], range);
      ++a.second;
    }
    for (const auto& [b, a] : acc)
      g.cells.push_back({di, b, a.first / static_cast<double>(a.second), a.second});
  }
  return g;
}

inline void write_leagram_csv(std::ostream& out, const LeagramGrid& g) {
  out << "date,bin_low,bin_high,ne\n";
  for (const auto& c : g.cells)
    out << format_date(g.dates[c.date_index]) << ',' << format_double(g.bin_edges[c.bin]) << ','
        << format_double(g.bin_edges[c.bin + 1]) << ',' << format_double(c.ne) << '\n';
}

inline void write_importance_csv(std::ostream& out, const ImportanceTable& t) {
  out << "rank,feature,importance,sd\n";
  for (const auto& e : t.entries)
    out << e.rank << ',' << e.feature << ',' << format_double(e.importance) << ','
        << format_double(e.sd) << '\n';
}

inline nlohmann::json groups_to_json(std::span<const FeatureGroup> groups, double tau) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& g : groups)
    arr.push_back({{"representative", g.representative},
                   {"members", g.members},
                   {"representative_importance", g.representative_importance}});
  return {{"tau", tau}, {"groups", arr}};
}

}  // namespace leaf
