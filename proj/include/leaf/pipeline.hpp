#pragma once

// File-level experiment runs: load a dataset, run the requested schemes,
// write traces, reports, the comparison table and a manifest that reproduces
// the run exactly.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "leaf/core.hpp"
#include "leaf/dataset.hpp"
#include "leaf/harness.hpp"

namespace leaf {

inline constexpr int kManifestVersion = 1;

struct RunRequest {
  std::string data_path;
  CsvSchema schema;
  std::vector<std::string> schemes = {"static", "periodic:30", "triggered", "leaf:1"};
  HarnessConfig config;
};

struct RunOutcome {
  std::vector<SchemeReport> reports;
  Comparison comparison;
  std::vector<std::string> written;   // file names relative to the output directory
  std::vector<std::string> failures;  // "scheme: message"
  bool ok() const { return failures.empty(); }
};

/// "periodic:7" -> "periodic_7", safe as a file-name component.
inline std::string scheme_file_stem(const std::string& scheme) {
  std::string s = scheme;
  for (char& c : s)
    if (c == ':' || c == '/' || c == '\\') c = '_';
  return s;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string file_digest(const std::filesystem::path& p) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_string(read_file(p))));
  return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + p.string() + "'");
}

inline nlohmann::json schema_to_json(const CsvSchema& s) {
  return {{"station", s.station}, {"date", s.date}, {"target", s.target}, {"features", s.features}};
}

inline CsvSchema schema_from_json(const nlohmann::json& j) {
  CsvSchema s;
  s.station = j.value("station", s.station);
  s.date = j.value("date", s.date);
  s.target = j.value("target", s.target);
  s.features = j.value("features", s.features);
  return s;
}

inline nlohmann::json manifest_json(const RunRequest& req, const std::string& digest,
                                    const std::vector<std::string>& outputs) {
  return {{"manifest_version", kManifestVersion},
          {"data", {{"path", std::filesystem::absolute(req.data_path).string()}, {"digest", digest}}},
          {"schema", schema_to_json(req.schema)},
          {"schemes", req.schemes},
          {"config", harness_config_to_json(req.config)},
          {"outputs", outputs}};
}

/// Rebuilds the request recorded in a manifest and checks that the dataset
/// on disk is still the one the manifest was written for.
inline RunRequest request_from_manifest(const nlohmann::json& m) {
  if (m.value("manifest_version", 0) != kManifestVersion)
    throw ConfigError("unsupported manifest version");
  RunRequest req;
  req.data_path = m.at("data").at("path").get<std::string>();
  req.schema = schema_from_json(m.at("schema"));
  req.schemes = m.at("schemes").get<std::vector<std::string>>();
  req.config = harness_config_from_json(m.at("config"));
  const std::string want = m.at("data").at("digest").get<std::string>();
  if (file_digest(req.data_path) != want)
    throw DataError("dataset '" + req.data_path + "' changed since the manifest was written");
  return req;
}

/// Runs every scheme and writes the artifacts into `out_dir`. Configuration
/// and data errors are raised before any scheme runs; a failure inside one
/// scheme is recorded and the remaining schemes still run.
inline RunOutcome run_experiment(const RunRequest& req, const std::filesystem::path& out_dir) {
  req.config.validate();
  if (req.schemes.empty()) throw ConfigError("no schemes requested");
  std::vector<Scheme> schemes;
  for (const auto& s : req.schemes) schemes.push_back(Scheme::parse(s));
  if (!std::filesystem::exists(req.data_path)) throw DataError("dataset '" + req.data_path + "' not found");
  const std::string digest = file_digest(req.data_path);
  const KpiFrame data = load_csv(req.data_path, req.schema);
  Experiment ex(data, req.schema.target, req.config);

  std::filesystem::create_directories(out_dir);
  RunOutcome out;
  for (const auto& scheme : schemes) {
    const std::string name = scheme.name();
    try {
      SchemeReport rep = ex.run(scheme);
      const std::string stem = scheme_file_stem(name);
      std::ostringstream trace;
      write_error_series_csv(trace, rep.trace);
      write_text(out_dir / ("trace_" + stem + ".csv"), trace.str());
      write_text(out_dir / ("report_" + stem + ".json"), report_to_json(rep).dump(2) + "\n");
      out.written.push_back("trace_" + stem + ".csv");
      out.written.push_back("report_" + stem + ".json");
      out.reports.push_back(std::move(rep));
    } catch (const Error& e) {
      out.failures.push_back(name + ": " + e.what());
    }
  }
  if (!out.reports.empty()) {
    out.comparison = compare(out.reports);
    std::ostringstream csv;
    write_comparison_csv(csv, out.comparison);
    write_text(out_dir / "comparison.csv", csv.str());
    write_text(out_dir / "comparison.json", comparison_to_json(out.comparison).dump(2) + "\n");
    out.written.push_back("comparison.csv");
    out.written.push_back("comparison.json");
  }
  write_text(out_dir / "manifest.json", manifest_json(req, digest, out.written).dump(2) + "\n");
  out.written.push_back("manifest.json");
  return out;
}

}  // namespace leaf
