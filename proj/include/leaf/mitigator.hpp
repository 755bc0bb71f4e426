#pragma once

// Informed mitigation: turn the local error profile of the latest drifting
// samples into a forgetting + over-sampling plan for the training set, then
// retrain on the reconstructed set.
//
// Dispersion of the latest target picks the branch:
//   high (CoV > threshold): old rows are forgotten by sampling proportional to
//     the linear error weight of their bin; replacements are drawn with cubic
//     bin weights.
//   low: old rows in bins whose error exceeds the forget percentile of the
//     bin errors are forgotten; replacements are drawn with linear weights.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "leaf/core.hpp"
#include "leaf/dataset.hpp"
#include "leaf/explainer.hpp"
#include "leaf/metrics.hpp"
#include "leaf/models.hpp"

namespace leaf {

enum class Branch { high_dispersion, low_dispersion };

inline std::string to_string(Branch b) {
  return b == Branch::high_dispersion ? "high_dispersion" : "low_dispersion";
}

struct MitigationConfig {
  double cov_threshold = 1.0;
  double forget_percentile = 0.95;
  int weight_power_high = 3;
  int weight_power_low = 1;
  int n_groups = 1;
  bool keep_size = true;
  double removal_fraction = 0.25;  // high-dispersion forgetting budget, share of the training set
  int n_bins = 20;                 // LEA bins behind each plan
  // Bin edges come from the union of the training set and the latest samples
  // unless this is set, in which case only the latest samples define them.
  bool edges_from_latest_only = false;
  bool oversample_latest_only = false;

  void validate() const {
    if (!(cov_threshold > 0.0)) throw ConfigError("cov_threshold must be positive");
    if (!(forget_percentile > 0.0 && forget_percentile < 1.0))
      throw ConfigError("forget_percentile must be in (0, 1)");
    if (weight_power_high < 1 || weight_power_low < 1) throw ConfigError("weight powers must be >= 1");
    if (n_groups < 1) throw ConfigError("n_groups must be >= 1");
    if (!(removal_fraction > 0.0 && removal_fraction < 1.0))
      throw ConfigError("removal_fraction must be in (0, 1)");
    if (n_bins < 2) throw ConfigError("mitigation n_bins must be >= 2");
  }
};

struct MitigationPlan {
  std::string feature;
  Branch branch = Branch::low_dispersion;
  DispersionStat dispersion;
  std::vector<double> bin_edges;
  std::vector<std::optional<double>> bin_errors;
  std::vector<double> bin_weights;  // over-sampling distribution, sums to 1 (all 0 if empty)
  std::size_t budget = 0;           // removals requested for this plan
  std::vector<std::size_t> forgotten_rows;  // positions in the training set, ascending
  std::vector<std::int64_t> draws;          // pool row ids, in draw order
  std::vector<std::size_t> forgotten_per_bin;
  std::vector<std::size_t> draws_per_bin;
  bool empty = false;  // nothing to forget or draw

  std::size_t volume() const { return draws.size(); }
};

namespace mitigation_detail {

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline std::vector<double> power_weights(const std::vector<std::optional<double>>& errors, int power) {
  std::vector<double> w(errors.size(), 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < errors.size(); ++b)
    if (errors[b]) total += w[b] = std::pow(*errors[b], power);
  if (total > 0.0)
    for (auto& x : w) x /= total;
  return w;
}

}  // namespace mitigation_detail

/// Builds one round of forgetting and over-sampling against `train`.
///
/// `profile` must be computed on the latest samples, `disp` over their target.
/// `budget` overrides the default removal budget (used to split the volume
/// of multi-group rounds); in the low-dispersion branch the percentile set
/// is subsampled or topped up from the next highest-error bins to meet it.
inline MitigationPlan build_plan(const KpiFrame& train, const KpiFrame& pool, const LeaProfile& profile,
                                 const DispersionStat& disp, const MitigationConfig& cfg,
                                 std::uint64_t seed, std::optional<std::size_t> budget = std::nullopt) {
  cfg.validate();
  if (train.empty()) throw DegenerateError("mitigation needs a non-empty training set");
  const std::size_t bins = profile.n_bins();
  MitigationPlan plan;
  plan.feature = profile.feature;
  plan.dispersion = disp;
  plan.branch = disp.cov > cfg.cov_threshold ? Branch::high_dispersion : Branch::low_dispersion;
  plan.bin_edges = profile.bin_edges;
  plan.bin_errors = profile.bin_errors;
  plan.forgotten_per_bin.assign(bins, 0);
  plan.draws_per_bin.assign(bins, 0);

  const bool any_error = std::any_of(profile.bin_errors.begin(), profile.bin_errors.end(),
                                     [](const auto& e) { return e && *e > 0.0; });
  if (!any_error) {
    plan.bin_weights.assign(bins, 0.0);
    plan.empty = true;
    return plan;
  }
  const bool high = plan.branch == Branch::high_dispersion;
  plan.bin_weights =
      mitigation_detail::power_weights(profile.bin_errors, high ? cfg.weight_power_high : cfg.weight_power_low);

  const auto& train_values = train.column(profile.feature);
  std::vector<std::size_t> train_bin(train.size());
  std::vector<std::size_t> train_per_bin(bins, 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    train_bin[i] = bin_of(train_values[i], profile.bin_edges);
    ++train_per_bin[train_bin[i]];
  }

  Rng rng(derive_seed(seed, "mitigation-plan"));
  std::vector<std::size_t> forget;
  if (high) {
    plan.budget = budget.value_or(static_cast<std::size_t>(
        std::llround(cfg.removal_fraction * static_cast<double>(train.size()))));
    // Linear error weight per row; weighted sampling without replacement via
    // exponential keys, never emptying a bin.
    const auto linear = mitigation_detail::power_weights(profile.bin_errors, 1);
    std::vector<std::pair<double, std::size_t>> keyed;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const double w = linear[train_bin[i]];
      double u = rng.uniform();
      if (w <= 0.0) continue;
      while (u <= 0.0) u = rng.uniform();
      keyed.emplace_back(std::log(u) / w, i);
    }
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::size_t> left = train_per_bin;
    for (const auto& [key, i] : keyed) {
      if (forget.size() >= plan.budget) break;
      if (left[train_bin[i]] <= 1) continue;
      --left[train_bin[i]];
      forget.push_back(i);
    }
  } else {
    std::vector<double> defined;
    for (const auto& e : profile.bin_errors)
      if (e) defined.push_back(*e);
    const double cut = mitigation_detail::quantile(defined, cfg.forget_percentile);
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto& e = profile.bin_errors[train_bin[i]];
      if (e && *e > cut) forget.push_back(i);
    }
    plan.budget = budget.value_or(forget.size());
    if (forget.size() > plan.budget) {
      rng.shuffle(forget);
      forget.resize(plan.budget);
    } else if (forget.size() < plan.budget) {
      // A split budget larger than the percentile set is met from the next
      // highest-error bins, so multi-group rounds keep the total volume.
      std::vector<std::size_t> order(bins);
      std::iota(order.begin(), order.end(), 0);
      auto key = [&](std::size_t b) { return profile.bin_errors[b].value_or(-1.0); };
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
      std::vector<std::vector<std::size_t>> rest(bins);
      for (std::size_t i = 0; i < train.size(); ++i) {
        const auto& e = profile.bin_errors[train_bin[i]];
        if (!(e && *e > cut)) rest[train_bin[i]].push_back(i);
      }
      for (std::size_t b : order) {
        if (forget.size() >= plan.budget) break;
        rng.shuffle(rest[b]);
        const std::size_t take = std::min(rest[b].size(), plan.budget - forget.size());
        forget.insert(forget.end(), rest[b].begin(), rest[b].begin() + static_cast<std::ptrdiff_t>(take));
      }
    }
  }
  std::sort(forget.begin(), forget.end());
  for (std::size_t i : forget) ++plan.forgotten_per_bin[train_bin[i]];
  plan.forgotten_rows = std::move(forget);

  const std::size_t n_draws = cfg.keep_size ? plan.forgotten_rows.size() : plan.budget;
  if (n_draws == 0) {
    plan.empty = plan.forgotten_rows.empty();
    return plan;
  }

  const auto& pool_values = pool.column(profile.feature);
  std::vector<std::vector<std::size_t>> pool_by_bin(bins);
  for (std::size_t i = 0; i < pool.size(); ++i) pool_by_bin[bin_of(pool_values[i], profile.bin_edges)].push_back(i);
  std::vector<double> eligible(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b)
    if (!pool_by_bin[b].empty()) eligible[b] = plan.bin_weights[b];
  std::vector<double> cdf(bins);
  std::partial_sum(eligible.begin(), eligible.end(), cdf.begin());
  if (!(cdf.back() > 0.0))
    throw DegenerateError("over-sampling pool has no rows in any positively weighted bin");
  plan.draws.reserve(n_draws);
  for (std::size_t k = 0; k < n_draws; ++k) {
    const double u = rng.uniform() * cdf.back();
    std::size_t b = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (b >= bins) b = bins - 1;
    while (eligible[b] <= 0.0) --b;
    const auto& members = pool_by_bin[b];
    plan.draws.push_back(pool.row_id[members[rng.below(members.size())]]);
    ++plan.draws_per_bin[b];
  }
  return plan;
}

/// Training set after a plan, with provenance of every row.
struct MitigatedSet {
  KpiFrame frame;
  std::vector<std::uint8_t> drawn;                // 1 if the row came from over-sampling
  std::map<std::int64_t, std::size_t> draw_counts;  // pool row id -> times drawn
};

/// `train` minus the forgotten rows, plus one copy of the referenced pool
/// row per draw.
inline MitigatedSet apply_plan(const KpiFrame& train, const KpiFrame& pool, const MitigationPlan& plan) {
  for (std::size_t i : plan.forgotten_rows)
    if (i >= train.size()) throw DataError("plan forgets row " + std::to_string(i) + " beyond the training set");
  std::unordered_map<std::int64_t, std::size_t> pool_index;
  for (std::size_t i = 0; i < pool.size(); ++i) pool_index.emplace(pool.row_id[i], i);
  if (!plan.draws.empty() && pool.feature_names != train.feature_names)
    throw DataError("pool and training set schemas differ");

  MitigatedSet out;
  out.frame = train.empty_like();
  out.frame.reserve(train.size() + plan.draws.size());
  std::vector<bool> forget(train.size(), false);
  for (std::size_t i : plan.forgotten_rows) forget[i] = true;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (forget[i]) continue;
    out.frame.push_row_from(train, i);
    out.drawn.push_back(0);
  }
  for (std::int64_t id : plan.draws) {
    auto it = pool_index.find(id);
    if (it == pool_index.end()) throw DataError("plan draws unknown pool row id " + std::to_string(id));
    out.frame.push_row_from(pool, it->second);
    out.drawn.push_back(1);
    ++out.draw_counts[id];
  }
  return out;
}

struct MultiGroupResult {
  KpiFrame train;
  TrainedModel model;
  std::vector<MitigationPlan> audit;  // one plan per round
  std::size_t volume = 0;             // single-group resampling volume split across rounds
};

/// Iterative multi-group mitigation. The total number of replaced rows equals
/// that of a single-group plan on the first group, split evenly across
/// `cfg.n_groups` rounds (any shortfall carries to the next round). Each round
/// re-profiles the latest samples along the next group's representative and
/// acts on the previous round's output; the model is retrained once at the end.
inline MultiGroupResult mitigate_multigroup(const KpiFrame& prev_train, const KpiFrame& latest,
                                            const KpiFrame& pool, std::span<const FeatureGroup> groups,
                                            const TrainedModel& active, const RegressorSpec& model_spec,
                                            const MitigationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (groups.empty()) throw DegenerateError("no feature groups with positive importance");
  if (static_cast<std::size_t>(cfg.n_groups) > groups.size())
    throw ConfigError("n_groups (" + std::to_string(cfg.n_groups) + ") exceeds the " +
                      std::to_string(groups.size()) + " available feature group(s)");
  const DispersionStat disp = dispersion(latest.target);
  auto profile_for = [&](std::size_t g, const KpiFrame& current) -> std::optional<LeaProfile> {
    const std::string& f = groups[g].representative;
    try {
      if (cfg.edges_from_latest_only) return lea_profile(active, latest, f, cfg.n_bins);
      std::vector<double> ref = current.column(f);
      const auto& lv = latest.column(f);
      ref.insert(ref.end(), lv.begin(), lv.end());
      auto edges = quantile_edges(std::move(ref), cfg.n_bins);
      if (edges.size() < 2) return std::nullopt;
      return lea_profile(active, latest, f, cfg.n_bins, std::move(edges));
    } catch (const DegenerateError&) {
      return std::nullopt;
    }
  };
  const KpiFrame& source = cfg.oversample_latest_only ? latest : pool;
  auto round_seed = [&](std::size_t g) { return derive_seed(seed, "mitigation-round", g); };

  MultiGroupResult res;
  const auto first = profile_for(0, prev_train);
  if (!first) throw DegenerateError("first feature group has no usable LEA profile");
  MitigationPlan single = build_plan(prev_train, source, *first, disp, cfg, round_seed(0));
  res.volume = single.forgotten_rows.size();

  const std::size_t rounds = static_cast<std::size_t>(cfg.n_groups);
  KpiFrame current = prev_train;
  std::size_t carry = 0;
  for (std::size_t g = 0; g < rounds; ++g) {
    const std::size_t share = res.volume / rounds + (g < res.volume % rounds ? 1 : 0) + carry;
    MitigationPlan plan;
    if (rounds == 1) {
      plan = std::move(single);
    } else if (auto prof = g == 0 ? first : profile_for(g, current)) {
      plan = build_plan(current, source, *prof, disp, cfg, round_seed(g), share);
    } else {
      plan.feature = groups[g].representative;
      plan.dispersion = disp;
      plan.branch = disp.cov > cfg.cov_threshold ? Branch::high_dispersion : Branch::low_dispersion;
      plan.empty = true;
      plan.budget = share;
    }
    carry = share - std::min(share, plan.forgotten_rows.size());
    current = apply_plan(current, source, plan).frame;
    res.audit.push_back(std::move(plan));
  }
  res.train = std::move(current);
  res.model = train(model_spec, res.train);
  return res;
}

inline nlohmann::json plan_to_json(const MitigationPlan& p) {
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& e : p.bin_errors) errors.push_back(e ? nlohmann::json(*e) : nlohmann::json(nullptr));
  return {{"feature", p.feature},
          {"branch", to_string(p.branch)},
          {"dispersion", {{"mean", p.dispersion.mean}, {"sd", p.dispersion.sd}, {"cov", p.dispersion.cov}}},
          {"empty", p.empty},
          {"bin_edges", p.bin_edges},
          {"bin_errors", errors},
          {"bin_weights", p.bin_weights},
          {"budget", p.budget},
          {"forget_rule", p.branch == Branch::high_dispersion ? "sample_proportional_to_bin_error"
                                                              : "bins_above_error_percentile"},
          {"removed", p.forgotten_rows.size()},
          {"removed_per_bin", p.forgotten_per_bin},
          {"draws", p.draws.size()},
          {"draws_per_bin", p.draws_per_bin}};
}

}  // namespace leaf
