#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "leaf/pipeline.hpp"
#include "support.hpp"

using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string output;
};

Result cli(const std::string& args, const TempDir& dir) {
  const std::string log = dir.str("cli.log");
  const std::string cmd = std::string(LEAF_CLI) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, leaf::read_file(log)};
}

void small_dataset(const TempDir& dir, const std::string& name = "data") {
  leaf::write_text(dir.path / "scenario.json",
                   R"({"n_stations": 4, "span_days": 160, "shocks": [{"onset_day": 90, "magnitude": 0.5, "recovery_days": 40}]})");
  const auto r = cli("synth --preset sudden-shock --config " + dir.str("scenario.json") + " --out " + dir.str(name), dir);
  ASSERT_EQ(r.code, 0) << r.output;
}

const std::string kFast = " --horizon 7 --trees 5 --repeats 1";

}  // namespace

TEST(Cli, UnknownPresetIsAUsageError) {
  TempDir dir("cli-preset");
  const auto r = cli("synth --preset tsunami --out " + dir.str("x"), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("sudden-shock"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("no-drift"), std::string::npos);
}

TEST(Cli, SynthIsReproducible) {
  TempDir dir("cli-synth");
  ASSERT_EQ(cli("synth --preset lossy --seed 3 --out " + dir.str("a"), dir).code, 0);
  ASSERT_EQ(cli("synth --preset lossy --seed 3 --out " + dir.str("b"), dir).code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir.path / "a")) {
    ++files;
    EXPECT_EQ(leaf::read_file(e.path()), leaf::read_file(dir.path / "b" / e.path().filename()));
  }
  EXPECT_EQ(files, 2u);
  const auto gt = nlohmann::json::parse(leaf::read_file(dir.path / "a" / "ground_truth.json"));
  EXPECT_EQ(gt.at("preset"), "lossy");
  EXPECT_EQ(gt.at("drift_days").size(), 2u);
}

TEST(Cli, RunRejectsBadInputs) {
  TempDir dir("cli-run-bad");
  EXPECT_EQ(cli("run --data " + dir.str("missing.csv") + " --out " + dir.str("o"), dir).code, 2);
  small_dataset(dir);
  const auto r = cli("run --data " + dir.str("data/dataset.csv") + " --schemes static,leaf:0 --out " + dir.str("o"), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("leaf"), std::string::npos);
  EXPECT_EQ(cli("run --data " + dir.str("data/dataset.csv") + " --target nope --out " + dir.str("o"), dir).code, 2);
  EXPECT_EQ(cli("frobnicate", dir).code, 2);
}

TEST(Cli, RunThenReportAndRerunFromManifest) {
  TempDir dir("cli-run");
  small_dataset(dir);
  const auto r = cli("run --data " + dir.str("data/dataset.csv") + " --schemes static,periodic:10,triggered,leaf:1" +
                         kFast + " --svg --out " + dir.str("one"),
                     dir);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("periodic:10"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir.path / "one" / "traces.svg"));
  const auto again = cli("run --manifest " + dir.str("one/manifest.json") + " --out " + dir.str("two"), dir);
  ASSERT_EQ(again.code, 0) << again.output;
  for (const char* f : {"comparison.csv", "trace_static.csv", "trace_leaf_1.csv", "trace_triggered.csv"})
    EXPECT_EQ(leaf::read_file(dir.path / "one" / f), leaf::read_file(dir.path / "two" / f)) << f;
  const auto rep = cli("report --run " + dir.str("one"), dir);
  EXPECT_EQ(rep.code, 0);
  EXPECT_NE(rep.output.find("triggered"), std::string::npos);
}

TEST(Cli, ExplainWritesSharedEdgeLeaplots) {
  TempDir dir("cli-explain");
  small_dataset(dir);
  const std::string base = "explain --data " + dir.str("data/dataset.csv") + kFast;
  EXPECT_EQ(cli(base + " --bins 1 --out " + dir.str("e"), dir).code, 2);
  const auto r = cli(base + " --drift-date 2018-04-01 --bins 50 --svg --out " + dir.str("e"), dir);
  ASSERT_EQ(r.code, 0) << r.output;
  std::vector<std::string> edges;
  for (const char* split : {"train", "before", "during"}) {
    std::ifstream in(dir.path / "e" / ("leaplot_" + std::string(split) + ".csv"));
    ASSERT_TRUE(in) << split;
    std::string line, cols;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto c = line.find(',', line.find(',') + 1);
      cols += line.substr(0, c) + ";";
    }
    edges.push_back(cols);
  }
  EXPECT_EQ(edges[0], edges[1]);
  EXPECT_EQ(edges[1], edges[2]);
  for (const char* f : {"importance.csv", "groups.json", "leagram.csv", "leaplot.svg", "leagram.svg"})
    EXPECT_TRUE(fs::exists(dir.path / "e" / f)) << f;
}

TEST(Cli, MitigateWritesAuditAndModel) {
  TempDir dir("cli-mitigate");
  small_dataset(dir);
  const auto r = cli("mitigate --data " + dir.str("data/dataset.csv") + kFast +
                         " --train-end 2018-03-20 --latest-end 2018-04-20 --out " + dir.str("m"),
                     dir);
  ASSERT_EQ(r.code, 0) << r.output;
  const auto audit = nlohmann::json::parse(leaf::read_file(dir.path / "m" / "audit.json"));
  EXPECT_EQ(audit.at("rounds").size(), 1u);
  EXPECT_NO_THROW(leaf::TrainedModel::load(dir.str("m/model.json")));
  EXPECT_TRUE(fs::exists(dir.path / "m" / "train_mitigated.csv"));
}
