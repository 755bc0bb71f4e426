#include <gtest/gtest.h>

#include "leaf/pipeline.hpp"
#include "leaf/synth.hpp"
#include "support.hpp"

using namespace leaf;
using testing_support::TempDir;

namespace {

RunRequest small_request(const std::string& data_path) {
  auto spec = preset("sudden-shock", 4);
  spec.n_stations = 5;
  spec.span_days = 180;
  spec.shocks[0].onset_day = 100;
  save_csv(data_path, generate(spec).frame);
  RunRequest req;
  req.data_path = data_path;
  req.schemes = {"static", "periodic:14", "triggered", "leaf:1"};
  req.config.horizon_days = 7;
  req.config.model = testing_support::small_forest(2, 8);
  req.config.importance_repeats = 2;
  return req;
}

}  // namespace

TEST(Pipeline, WritesArtifactsAndManifest) {
  TempDir dir("pipeline-a");
  const auto req = small_request(dir.str("data.csv"));
  const auto out = run_experiment(req, dir.path / "run");
  EXPECT_TRUE(out.ok());
  ASSERT_EQ(out.reports.size(), 4u);
  for (const auto& f : out.written) EXPECT_TRUE(std::filesystem::exists(dir.path / "run" / f)) << f;
  EXPECT_TRUE(std::filesystem::exists(dir.path / "run" / "trace_periodic_14.csv"));
  const auto m = nlohmann::json::parse(read_file(dir.path / "run" / "manifest.json"));
  EXPECT_EQ(m.at("data").at("digest"), file_digest(req.data_path));
  for (const auto& r : out.reports) EXPECT_EQ(r.causality_violations, 0u);
}

TEST(Pipeline, ManifestRerunIsByteIdentical) {
  TempDir dir("pipeline-b");
  const auto req = small_request(dir.str("data.csv"));
  const auto first = run_experiment(req, dir.path / "one");
  const auto again =
      request_from_manifest(nlohmann::json::parse(read_file(dir.path / "one" / "manifest.json")));
  const auto second = run_experiment(again, dir.path / "two");
  ASSERT_EQ(first.written, second.written);
  for (const auto& f : first.written)
    EXPECT_EQ(read_file(dir.path / "one" / f), read_file(dir.path / "two" / f)) << f;
}

TEST(Pipeline, ManifestDetectsChangedData) {
  TempDir dir("pipeline-c");
  const auto req = small_request(dir.str("data.csv"));
  run_experiment(req, dir.path / "run");
  const auto m = nlohmann::json::parse(read_file(dir.path / "run" / "manifest.json"));
  write_text(req.data_path, read_file(req.data_path) + "\n");
  EXPECT_THROW(request_from_manifest(m), DataError);
}

TEST(Pipeline, ErrorsBeforeAnySchemeRuns) {
  TempDir dir("pipeline-d");
  auto req = small_request(dir.str("data.csv"));
  req.schemes = {"static", "leaf:0"};
  EXPECT_THROW(run_experiment(req, dir.path / "run"), ConfigError);
  EXPECT_FALSE(std::filesystem::exists(dir.path / "run"));
  req.schemes = {"static"};
  req.data_path = dir.str("missing.csv");
  EXPECT_THROW(run_experiment(req, dir.path / "run"), DataError);
}

TEST(Pipeline, SchemeStems) {
  EXPECT_EQ(scheme_file_stem("periodic:7"), "periodic_7");
  EXPECT_EQ(scheme_file_stem("leaf:3"), "leaf_3");
}
