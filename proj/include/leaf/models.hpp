#pragma once

// Regressors behind one train/predict interface: k-nearest neighbours on
// standardized features and a randomized-tree ensemble.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "leaf/core.hpp"
#include "leaf/dataset.hpp"

namespace leaf {

enum class Family { knn, tree_ensemble };
enum class SplitRule { random_threshold, best_of_random };

inline std::string to_string(Family f) { return f == Family::knn ? "knn" : "tree_ensemble"; }
inline std::string to_string(SplitRule r) {
  return r == SplitRule::random_threshold ? "random_threshold" : "best_of_random";
}
inline Family parse_family(const std::string& s) {
  if (s == "knn") return Family::knn;
  if (s == "tree_ensemble" || s == "trees") return Family::tree_ensemble;
  throw ConfigError("unknown model family '" + s + "' (expected knn or tree_ensemble)");
}
inline SplitRule parse_split_rule(const std::string& s) {
  if (s == "random_threshold") return SplitRule::random_threshold;
  if (s == "best_of_random") return SplitRule::best_of_random;
  throw ConfigError("unknown split rule '" + s + "'");
}

struct RegressorSpec {
  Family family = Family::tree_ensemble;
  // knn
  int k = 5;
  // tree_ensemble
  int n_trees = 100;
  int max_depth = 12;
  int min_leaf = 2;
  double feature_subsample = 1.0;
  SplitRule split_rule = SplitRule::random_threshold;

  std::uint64_t seed = 0;

  void validate() const {
    if (family == Family::knn) {
      if (k < 1) throw ConfigError("knn requires k >= 1");
    } else {
      if (n_trees < 1) throw ConfigError("tree_ensemble requires n_trees >= 1");
      if (max_depth < 1) throw ConfigError("tree_ensemble requires max_depth >= 1");
      if (min_leaf < 1) throw ConfigError("tree_ensemble requires min_leaf >= 1");
      if (!(feature_subsample > 0.0 && feature_subsample <= 1.0))
        throw ConfigError("feature_subsample must be in (0, 1]");
    }
  }

  friend bool operator==(const RegressorSpec&, const RegressorSpec&) = default;
};

inline nlohmann::json spec_to_json(const RegressorSpec& s) {
  nlohmann::json hp;
  if (s.family == Family::knn) {
    hp = {{"k", s.k}};
  } else {
    hp = {{"n_trees", s.n_trees},
          {"max_depth", s.max_depth},
          {"min_leaf", s.min_leaf},
          {"feature_subsample", s.feature_subsample},
          {"split_rule", to_string(s.split_rule)}};
  }
  return {{"family", to_string(s.family)}, {"hyperparameters", hp}, {"seed", s.seed}};
}

inline RegressorSpec spec_from_json(const nlohmann::json& j) {
  RegressorSpec s;
  s.family = parse_family(j.at("family").get<std::string>());
  const auto hp = j.value("hyperparameters", nlohmann::json::object());
  s.k = hp.value("k", s.k);
  s.n_trees = hp.value("n_trees", s.n_trees);
  s.max_depth = hp.value("max_depth", s.max_depth);
  s.min_leaf = hp.value("min_leaf", s.min_leaf);
  s.feature_subsample = hp.value("feature_subsample", s.feature_subsample);
  if (hp.contains("split_rule")) s.split_rule = parse_split_rule(hp.at("split_rule").get<std::string>());
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

struct Standardization {
  double mean = 0.0;
  double sd = 1.0;
  bool constant = false;  // passed through unscaled

  double apply(double x) const { return constant ? x : (x - mean) / sd; }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const {
    int n = 0;
    while (nodes[n].feature >= 0)
      n = x[nodes[n].feature] <= nodes[n].threshold ? nodes[n].left : nodes[n].right;
    return nodes[n].value;
  }
};

class TrainedModel;
inline TrainedModel train(const RegressorSpec& spec, const KpiFrame& data,
                          std::span<const double> weights = {});

/// Immutable fitted regressor. Predictions are a pure function of the
/// training inputs and the query.
class TrainedModel {
 public:
  static constexpr int kSchemaVersion = 1;

  const RegressorSpec& spec() const { return spec_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<Standardization>& standardization() const { return scaling_; }
  std::size_t n_training_rows() const { return n_train_; }

  /// One prediction per row of `rows`, in order. Columns are matched by name.
  std::vector<double> predict(const KpiFrame& rows) const {
    std::vector<const std::vector<double>*> cols;
    std::string missing;
    for (const auto& name : feature_names_) {
      auto j = rows.feature_index(name);
      if (!j) {
        missing += (missing.empty() ? "" : ", ") + name;
        continue;
      }
      cols.push_back(&rows.columns[*j]);
    }
    if (!missing.empty()) throw DataError("schema mismatch: missing feature column(s): " + missing);
    std::vector<double> out(rows.size());
    std::vector<double> x(feature_names_.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < cols.size(); ++j) x[j] = scaling_[j].apply((*cols[j])[i]);
      out[i] = predict_standardized(x);
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["spec"] = spec_to_json(spec_);
    j["feature_names"] = feature_names_;
    j["n_training_rows"] = n_train_;
    auto& sc = j["standardization"] = nlohmann::json::array();
    for (const auto& s : scaling_) sc.push_back({{"mean", s.mean}, {"sd", s.sd}, {"constant", s.constant}});
    if (spec_.family == Family::knn) {
      j["reference_x"] = ref_x_;
      j["reference_y"] = ref_y_;
    } else {
      auto& trees = j["trees"] = nlohmann::json::array();
      for (const auto& t : trees_) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
        trees.push_back(std::move(nodes));
      }
    }
    return j;
  }

  static TrainedModel from_json(const nlohmann::json& j) {
    const int version = j.at("schema_version").get<int>();
    if (version != kSchemaVersion)
      throw DataError("unsupported model schema_version " + std::to_string(version));
    TrainedModel m;
    m.spec_ = spec_from_json(j.at("spec"));
    m.feature_names_ = j.at("feature_names").get<std::vector<std::string>>();
    m.n_train_ = j.at("n_training_rows").get<std::size_t>();
    for (const auto& s : j.at("standardization"))
      m.scaling_.push_back({s.at("mean").get<double>(), s.at("sd").get<double>(),
                            s.at("constant").get<bool>()});
    if (m.scaling_.size() != m.feature_names_.size())
      throw DataError("model standardization does not match its feature list");
    if (m.spec_.family == Family::knn) {
      m.ref_x_ = j.at("reference_x").get<std::vector<double>>();
      m.ref_y_ = j.at("reference_y").get<std::vector<double>>();
      if (m.ref_x_.size() != m.ref_y_.size() * m.feature_names_.size())
        throw DataError("knn reference set has inconsistent shape");
    } else {
      for (const auto& t : j.at("trees")) {
        Tree tree;
        for (const auto& n : t)
          tree.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                                n.at(3).get<int>(), n.at(4).get<double>()});
        m.trees_.push_back(std::move(tree));
      }
    }
    return m;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file '" + path + "'");
    out << to_json().dump() << '\n';
  }

  static TrainedModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file '" + path + "'");
    return from_json(nlohmann::json::parse(in));
  }

 private:
  friend TrainedModel train(const RegressorSpec&, const KpiFrame&, std::span<const double>);

  double predict_standardized(std::span<const double> x) const {
    if (spec_.family == Family::knn) return predict_knn(x);
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict(x);
    return s / static_cast<double>(trees_.size());
  }

  double predict_knn(std::span<const double> x) const {
    const std::size_t p = feature_names_.size();
    const std::size_t n = ref_y_.size();
    std::vector<std::pair<double, std::size_t>> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        const double diff = ref_x_[i * p + j] - x[j];
        s += diff * diff;
      }
      d[i] = {s, i};
    }
    const std::size_t k = std::min<std::size_t>(spec_.k, n);
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += ref_y_[d[i].second];
    return s / static_cast<double>(k);
  }

  RegressorSpec spec_;
  std::vector<std::string> feature_names_;
  std::vector<Standardization> scaling_;
  std::size_t n_train_ = 0;
  std::vector<double> ref_x_;  // knn: row-major standardized reference features
  std::vector<double> ref_y_;
  std::vector<Tree> trees_;
};

namespace model_detail {

/// Grows one tree over rows `idx` of the row-major matrix `x`.
class TreeBuilder {
 public:
  TreeBuilder(const RegressorSpec& spec, const std::vector<double>& x, const std::vector<double>& y,
              std::size_t p, std::uint64_t seed)
      : spec_(spec), x_(x), y_(y), p_(p), rng_(seed) {}

  Tree build(std::vector<std::size_t> idx) {
    tree_.nodes.clear();
    idx_ = std::move(idx);
    grow(0, idx_.size(), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = -1.0;
  };

  double at(std::size_t row, std::size_t j) const { return x_[row * p_ + j]; }

  int grow(std::size_t begin, std::size_t end, int depth) {
    const std::size_t n = end - begin;
    double sum = 0.0;
    double ymin = y_[idx_[begin]], ymax = ymin;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = y_[idx_[i]];
      sum += v;
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
    const int node = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back({-1, 0.0, -1, -1, sum / static_cast<double>(n)});
    const std::size_t min_leaf = static_cast<std::size_t>(spec_.min_leaf);
    if (depth >= spec_.max_depth || n < 2 * min_leaf || ymin == ymax) return node;

    const Split split = find_split(begin, end, sum);
    if (split.feature < 0) return node;

    auto mid = std::partition(idx_.begin() + static_cast<std::ptrdiff_t>(begin),
                              idx_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t r) {
                                return at(r, static_cast<std::size_t>(split.feature)) <= split.threshold;
                              });
    const std::size_t m = static_cast<std::size_t>(mid - idx_.begin());
    const int left = grow(begin, m, depth + 1);
    const int right = grow(m, end, depth + 1);
    tree_.nodes[node].feature = split.feature;
    tree_.nodes[node].threshold = split.threshold;
    tree_.nodes[node].left = left;
    tree_.nodes[node].right = right;
    return node;
  }

  Split find_split(std::size_t begin, std::size_t end, double total) {
    const std::size_t n = end - begin;
    const std::size_t min_leaf = static_cast<std::size_t>(spec_.min_leaf);
    const std::size_t want = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(spec_.feature_subsample * static_cast<double>(p_))));
    std::vector<std::size_t> order(p_);
    std::iota(order.begin(), order.end(), 0);
    Split best;
    std::size_t evaluated = 0;
    // Partial Fisher-Yates: draw features until `want` non-constant ones are seen.
    for (std::size_t k = 0; k < p_ && evaluated < want; ++k) {
      std::swap(order[k], order[k + rng_.below(p_ - k)]);
      const std::size_t j = order[k];
      double lo = at(idx_[begin], j), hi = lo;
      for (std::size_t i = begin; i < end; ++i) {
        const double v = at(idx_[i], j);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (!(hi > lo)) continue;
      ++evaluated;
      if (spec_.split_rule == SplitRule::random_threshold) {
        const double thr = rng_.uniform(lo, hi);
        double sl = 0.0;
        std::size_t nl = 0;
        for (std::size_t i = begin; i < end; ++i) {
          if (at(idx_[i], j) <= thr) {
            sl += y_[idx_[i]];
            ++nl;
          }
        }
        const std::size_t nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double sr = total - sl;
        const double score = sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr);
        if (score > best.score) best = {static_cast<int>(j), thr, score};
      } else {
        std::vector<std::pair<double, double>> xs;
        xs.reserve(n);
        for (std::size_t i = begin; i < end; ++i) xs.emplace_back(at(idx_[i], j), y_[idx_[i]]);
        std::sort(xs.begin(), xs.end());
        double sl = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
          sl += xs[i].second;
          const std::size_t nl = i + 1, nr = n - nl;
          if (xs[i].first == xs[i + 1].first || nl < min_leaf || nr < min_leaf) continue;
          const double sr = total - sl;
          const double score = sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr);
          if (score > best.score) {
            double thr = 0.5 * (xs[i].first + xs[i + 1].first);
            if (!(thr < xs[i + 1].first)) thr = xs[i].first;
            best = {static_cast<int>(j), thr, score};
          }
        }
      }
    }
    return best;
  }

  const RegressorSpec& spec_;
  const std::vector<double>& x_;
  const std::vector<double>& y_;
  std::size_t p_;
  Rng rng_;
  std::vector<std::size_t> idx_;
  Tree tree_;
};

inline bool is_uniform(std::span<const double> w) {
  return std::all_of(w.begin(), w.end(), [&](double v) { return v == w.front(); });
}

/// Draws n indices with replacement, P(i) proportional to w[i].
inline std::vector<std::size_t> weighted_resample(std::span<const double> w, std::size_t n, Rng& rng) {
  std::vector<double> cdf(w.size());
  std::partial_sum(w.begin(), w.end(), cdf.begin());
  const double total = cdf.back();
  std::vector<std::size_t> out(n);
  for (auto& o : out) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cdf.begin());
    if (i >= w.size()) i = w.size() - 1;
    while (w[i] <= 0.0) --i;  // u landed on a zero-width step boundary
    o = i;
  }
  return out;
}

}  // namespace model_detail

/// Fits a regressor. Empty `weights` means uniform. Non-uniform weights are
/// realized by resampling the rows (with replacement, proportional to weight)
/// back to the original row count before fitting.
inline TrainedModel train(const RegressorSpec& spec, const KpiFrame& data,
                          std::span<const double> weights) {
  spec.validate();
  const std::size_t n = data.size();
  if (n == 0) throw DegenerateError("cannot train on an empty frame");
  if (data.n_features() == 0) throw DataError("cannot train without feature columns");
  for (std::size_t i = 0; i < n; ++i)
    if (!data.labeled[i]) throw DataError("training frame contains unlabeled rows");
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  if (!weights.empty()) {
    if (weights.size() != n) throw DataError("weight vector length differs from row count");
    bool positive = false;
    for (double w : weights) {
      if (!std::isfinite(w) || w < 0.0) throw DataError("weights must be finite and nonnegative");
      positive = positive || w > 0.0;
    }
    if (!positive) throw DataError("all sample weights are zero");
    if (!model_detail::is_uniform(weights)) {
      Rng rng(derive_seed(spec.seed, "weighted-resample"));
      rows = model_detail::weighted_resample(weights, n, rng);
    }
  }
  if (spec.family == Family::knn && static_cast<std::size_t>(spec.k) > n)
    throw DataError("knn k exceeds the number of training rows");

  TrainedModel m;
  m.spec_ = spec;
  m.feature_names_ = data.feature_names;
  m.n_train_ = n;
  const std::size_t p = data.n_features();
  for (std::size_t j = 0; j < p; ++j) {
    double mean = 0.0;
    for (std::size_t r : rows) mean += data.columns[j][r];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r : rows) ss += (data.columns[j][r] - mean) * (data.columns[j][r] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (sd > 0.0 && std::isfinite(sd))
      m.scaling_.push_back({mean, sd, false});
    else
      m.scaling_.push_back({mean, 1.0, true});
  }
  std::vector<double> x(n * p), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) x[i * p + j] = m.scaling_[j].apply(data.columns[j][rows[i]]);
    y[i] = data.target[rows[i]];
  }
  if (spec.family == Family::knn) {
    m.ref_x_ = std::move(x);
    m.ref_y_ = std::move(y);
  } else {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    m.trees_.reserve(static_cast<std::size_t>(spec.n_trees));
    for (int t = 0; t < spec.n_trees; ++t) {
      model_detail::TreeBuilder builder(spec, x, y, p,
                                        derive_seed(spec.seed, "tree", static_cast<std::uint64_t>(t)));
      m.trees_.push_back(builder.build(all));
    }
  }
  return m;
}

}  // namespace leaf
