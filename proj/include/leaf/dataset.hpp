#pragma once

// Tabular multi-station KPI data, CSV ingestion and horizon-aligned slicing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "leaf/core.hpp"

namespace leaf {

/// Column-major table of KPI observations keyed by (station, date).
///
/// A raw frame has target_date == date on every row. A supervised frame
/// (see make_supervised) pairs the features observed on `date` with the
/// target observed on `target_date = date + horizon_days`.
///
/// Missing data is represented by absent rows. Station identifiers are opaque
/// tokens used for keying and never enter a model as a feature.
struct KpiFrame {
  std::vector<std::string> feature_names;
  std::string target_name = "target";
  int horizon_days = 0;

  std::vector<std::string> station;
  std::vector<Day> date;
  std::vector<Day> target_date;
  std::vector<std::vector<double>> columns;  // columns[feature][row]
  std::vector<double> target;
  std::vector<std::uint8_t> labeled;
  std::vector<std::int64_t> row_id;  // provenance: origin row in the source frame

  std::size_t size() const { return date.size(); }
  bool empty() const { return date.empty(); }
  std::size_t n_features() const { return feature_names.size(); }

  std::optional<std::size_t> feature_index(std::string_view name) const {
    for (std::size_t j = 0; j < feature_names.size(); ++j)
      if (feature_names[j] == name) return j;
    return std::nullopt;
  }

  const std::vector<double>& column(std::string_view name) const {
    auto j = feature_index(name);
    if (!j) throw DataError("unknown feature column '" + std::string(name) + "'");
    return columns[*j];
  }

  /// Frame with the same schema and no rows.
  KpiFrame empty_like() const {
    KpiFrame out;
    out.feature_names = feature_names;
    out.target_name = target_name;
    out.horizon_days = horizon_days;
    out.columns.resize(feature_names.size());
    return out;
  }

  void reserve(std::size_t n) {
    station.reserve(n);
    date.reserve(n);
    target_date.reserve(n);
    for (auto& c : columns) c.reserve(n);
    target.reserve(n);
    labeled.reserve(n);
    row_id.reserve(n);
  }

  /// Appends row `i` of `src` (which must share this frame's schema).
  void push_row_from(const KpiFrame& src, std::size_t i) {
    station.push_back(src.station[i]);
    date.push_back(src.date[i]);
    target_date.push_back(src.target_date[i]);
    for (std::size_t j = 0; j < columns.size(); ++j) columns[j].push_back(src.columns[j][i]);
    target.push_back(src.target[i]);
    labeled.push_back(src.labeled[i]);
    row_id.push_back(src.row_id[i]);
  }

  KpiFrame select(std::span<const std::size_t> rows) const {
    KpiFrame out = empty_like();
    out.reserve(rows.size());
    for (std::size_t i : rows) out.push_row_from(*this, i);
    return out;
  }

  KpiFrame filter(const std::function<bool(std::size_t)>& keep) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < size(); ++i)
      if (keep(i)) rows.push_back(i);
    return select(rows);
  }

  /// Row-major feature vector of row `i`.
  std::vector<double> row_features(std::size_t i) const {
    std::vector<double> x(columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j) x[j] = columns[j][i];
    return x;
  }

  std::pair<Day, Day> date_span() const {
    if (empty()) throw DegenerateError("date span of an empty frame");
    auto [lo, hi] = std::minmax_element(date.begin(), date.end());
    return {*lo, *hi};
  }

  /// Distinct target dates in increasing order.
  std::vector<Day> target_dates() const {
    std::vector<Day> d = target_date;
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
    return d;
  }

  /// Checks the dense-schema, finiteness and key-uniqueness invariants.
  /// Frames produced by over-sampling legitimately repeat keys, so
  /// uniqueness is opt-in.
  void validate(bool unique_keys = true) const {
    const std::size_t n = size();
    if (station.size() != n || target_date.size() != n || target.size() != n ||
        labeled.size() != n || row_id.size() != n || columns.size() != feature_names.size())
      throw DataError("frame columns have inconsistent lengths");
    for (const auto& c : columns) {
      if (c.size() != n) throw DataError("frame columns have inconsistent lengths");
      for (double v : c)
        if (!std::isfinite(v)) throw DataError("non-finite feature value");
    }
    for (std::size_t i = 0; i < n; ++i)
      if (labeled[i] && !std::isfinite(target[i])) throw DataError("non-finite target value");
    if (unique_keys) {
      std::set<std::pair<std::string_view, std::int32_t>> seen;
      for (std::size_t i = 0; i < n; ++i)
        if (!seen.emplace(station[i], date[i].value).second)
          throw DataError("duplicate (station, date) key (" + station[i] + ", " +
                          format_date(date[i]) + ")");
    }
  }
};

// ---------------------------------------------------------------------------
// CSV I/O.

/// Column roles for CSV ingestion. An empty feature list means "every column
/// that is not station, date or target".
struct CsvSchema {
  std::string station = "station";
  std::string date = "date";
  std::string target = "target";
  std::vector<std::string> features;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parses a KPI CSV stream. Every malformed row is reported (by file line
/// number, header = line 1) in one DataError.
inline KpiFrame read_csv(std::istream& in, const CsvSchema& schema = {}) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV is empty (no header row)");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  std::vector<std::string> header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);

  auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    return std::nullopt;
  };
  const auto station_col = find_col(schema.station);
  const auto date_col = find_col(schema.date);
  const auto target_col = find_col(schema.target);
  if (!station_col) throw DataError("CSV header lacks station column '" + schema.station + "'");
  if (!date_col) throw DataError("CSV header lacks date column '" + schema.date + "'");
  if (!target_col) throw DataError("CSV header lacks target column '" + schema.target + "'");

  KpiFrame frame;
  frame.target_name = schema.target;
  std::vector<std::size_t> feature_cols;
  if (schema.features.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (c != *station_col && c != *date_col && c != *target_col) {
        feature_cols.push_back(c);
        frame.feature_names.push_back(header[c]);
      }
  } else {
    for (const auto& f : schema.features) {
      auto c = find_col(f);
      if (!c) throw DataError("CSV header lacks feature column '" + f + "'");
      feature_cols.push_back(*c);
      frame.feature_names.push_back(f);
    }
  }
  if (feature_cols.empty()) throw DataError("CSV has no feature columns");
  frame.columns.resize(feature_cols.size());

  std::vector<std::string> problems;
  std::map<std::pair<std::string, std::int32_t>, std::size_t> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    const std::string where = "row " + std::to_string(line_no);
    if (cells.size() != header.size()) {
      problems.push_back(where + ": expected " + std::to_string(header.size()) + " cells, got " +
                         std::to_string(cells.size()));
      continue;
    }
    std::string st = detail::trim(cells[*station_col]);
    Day d;
    try {
      d = parse_date(detail::trim(cells[*date_col]));
    } catch (const DataError& e) {
      problems.push_back(where + ": " + e.what());
      continue;
    }
    bool ok = true;
    std::vector<double> values(feature_cols.size());
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      const std::string cell = detail::trim(cells[feature_cols[j]]);
      if (!parse_double(cell, values[j])) {
        problems.push_back(where + ": unparseable cell '" + cell + "' in column '" +
                           frame.feature_names[j] + "'");
        ok = false;
      } else if (!std::isfinite(values[j])) {
        problems.push_back(where + ": non-finite value in column '" + frame.feature_names[j] +
                           "'");
        ok = false;
      }
    }
    double tv = 0.0;
    bool has_target = false;
    const std::string tcell = detail::trim(cells[*target_col]);
    if (!tcell.empty()) {
      if (!parse_double(tcell, tv)) {
        problems.push_back(where + ": unparseable cell '" + tcell + "' in column '" +
                           schema.target + "'");
        ok = false;
      } else if (!std::isfinite(tv)) {
        problems.push_back(where + ": non-finite value in column '" + schema.target + "'");
        ok = false;
      } else {
        has_target = true;
      }
    }
    auto [it, inserted] = seen.emplace(std::make_pair(st, d.value), line_no);
    if (!inserted) {
      problems.push_back(where + ": duplicate (station, date) key (" + st + ", " +
                         format_date(d) + "), first seen on row " + std::to_string(it->second));
      ok = false;
    }
    if (!ok) continue;
    frame.station.push_back(std::move(st));
    frame.date.push_back(d);
    frame.target_date.push_back(d);
    for (std::size_t j = 0; j < values.size(); ++j) frame.columns[j].push_back(values[j]);
    frame.target.push_back(has_target ? tv : 0.0);
    frame.labeled.push_back(has_target ? 1 : 0);
    frame.row_id.push_back(static_cast<std::int64_t>(frame.size() - 1));
  }
  if (!problems.empty()) {
    std::string msg = "CSV rejected (" + std::to_string(problems.size()) + " problem(s)):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }
  return frame;
}

inline KpiFrame load_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path + "'");
  return read_csv(in, schema);
}

/// Writes station,date,<features...>,target with shortest round-trip floats.
/// Supervised frames additionally carry a target_date column.
inline void write_csv(std::ostream& out, const KpiFrame& frame) {
  out << "station,date";
  if (frame.horizon_days > 0) out << ",target_date";
  for (const auto& f : frame.feature_names) out << ',' << f;
  out << ',' << frame.target_name << '\n';
  for (std::size_t i = 0; i < frame.size(); ++i) {
    out << frame.station[i] << ',' << format_date(frame.date[i]);
    if (frame.horizon_days > 0) out << ',' << format_date(frame.target_date[i]);
    for (const auto& c : frame.columns) out << ',' << format_double(c[i]);
    out << ',';
    if (frame.labeled[i]) out << format_double(frame.target[i]);
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const KpiFrame& frame) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write CSV file '" + path + "'");
  write_csv(out, frame);
}

// ---------------------------------------------------------------------------
// Transformations.

/// Adds day_of_week (Monday = 0), month (1-12) and year derived from each
/// row's feature date.
inline KpiFrame add_temporal_features(const KpiFrame& frame) {
  static const std::vector<std::string> names = {"day_of_week", "month", "year"};
  for (const auto& n : names)
    if (frame.feature_index(n) || n == frame.target_name)
      throw DataError("temporal feature '" + n + "' collides with an existing column");
  KpiFrame out = frame;
  for (const auto& n : names) out.feature_names.push_back(n);
  std::vector<double> dow(frame.size()), month(frame.size()), year(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const auto ymd = to_civil(frame.date[i]);
    dow[i] = day_of_week(frame.date[i]);
    month[i] = static_cast<unsigned>(ymd.month());
    year[i] = static_cast<int>(ymd.year());
  }
  out.columns.push_back(std::move(dow));
  out.columns.push_back(std::move(month));
  out.columns.push_back(std::move(year));
  return out;
}

/// Pairs features of (station, t) with the target of (station, t + horizon).
/// Rows whose partner is absent or unlabeled are dropped. Output rows keep the
/// input order and get fresh row ids 0..n-1.
inline KpiFrame make_supervised(const KpiFrame& frame, int horizon_days) {
  if (horizon_days < 1) throw ConfigError("horizon_days must be >= 1");
  if (frame.horizon_days != 0) throw DataError("frame is already supervised");
  std::unordered_map<std::string, std::unordered_map<std::int32_t, std::size_t>> index;
  for (std::size_t i = 0; i < frame.size(); ++i) index[frame.station[i]][frame.date[i].value] = i;

  KpiFrame out = frame.empty_like();
  out.horizon_days = horizon_days;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const auto& by_date = index[frame.station[i]];
    auto it = by_date.find((frame.date[i] + horizon_days).value);
    if (it == by_date.end() || !frame.labeled[it->second]) continue;
    out.push_row_from(frame, i);
    out.target_date.back() = frame.date[it->second];
    out.target.back() = frame.target[it->second];
    out.labeled.back() = 1;
    out.row_id.back() = static_cast<std::int64_t>(out.size() - 1);
  }
  if (out.empty())
    throw DegenerateError("no (station, date) pair exists at horizon " +
                          std::to_string(horizon_days) + " days");
  return out;
}

/// Closed day range [end - length + 1, end].
struct TrainWindow {
  Day end;
  int length_days = 14;

  Day first() const { return end - (length_days - 1); }
  bool contains(Day d) const { return d >= first() && d <= end; }
};

/// Rows whose feature date lies in the window, all stations.
inline KpiFrame slice(const KpiFrame& frame, const TrainWindow& window) {
  if (window.length_days < 1) throw ConfigError("window length must be >= 1");
  KpiFrame out = frame.filter([&](std::size_t i) { return window.contains(frame.date[i]); });
  if (out.empty())
    throw DegenerateError("empty slice for window ending " + format_date(window.end));
  return out;
}

/// Rows whose target date lies in the window. Used by the simulation, where
/// a training window is defined in terms of already-observed labels.
inline KpiFrame slice_by_target(const KpiFrame& frame, const TrainWindow& window) {
  if (window.length_days < 1) throw ConfigError("window length must be >= 1");
  KpiFrame out =
      frame.filter([&](std::size_t i) { return window.contains(frame.target_date[i]); });
  if (out.empty())
    throw DegenerateError("empty slice for target window ending " + format_date(window.end));
  return out;
}

}  // namespace leaf
