#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "leaf/leaf.hpp"

namespace testing_support {

/// Supervised frame built from columns. Row i lands on target date
/// `first + i / rows_per_day` (all on one date when rows_per_day is 0) for
/// station "s<i % rows_per_day>".
inline leaf::KpiFrame table(const std::vector<std::string>& names, const std::vector<std::vector<double>>& cols,
                            const std::vector<double>& target, std::size_t rows_per_day = 0,
                            leaf::Day first = leaf::Day(17532)) {
  leaf::KpiFrame f;
  f.feature_names = names;
  f.columns = cols;
  f.target = target;
  f.horizon_days = 1;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const std::size_t day = rows_per_day ? i / rows_per_day : 0;
    const std::size_t st = rows_per_day ? i % rows_per_day : i;
    f.station.push_back("s" + std::to_string(st));
    f.date.push_back(first + static_cast<int>(day) - 1);
    f.target_date.push_back(first + static_cast<int>(day));
    f.labeled.push_back(1);
    f.row_id.push_back(static_cast<std::int64_t>(i));
  }
  return f;
}

/// Memorizing model: 1-nearest-neighbour over the given frame, so it
/// reproduces every training target exactly.
inline leaf::TrainedModel memorizer(const leaf::KpiFrame& f) {
  leaf::RegressorSpec s;
  s.family = leaf::Family::knn;
  s.k = 1;
  return leaf::train(s, f);
}

inline leaf::RegressorSpec small_forest(std::uint64_t seed = 1, int trees = 20) {
  leaf::RegressorSpec s;
  s.n_trees = trees;
  s.max_depth = 8;
  s.seed = seed;
  return s;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("leaf-test-" + tag + "-" + std::to_string(leaf::hash_string(tag) & 0xffffff));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str(const std::string& name = "") const { return (path / name).string(); }
};

}  // namespace testing_support
