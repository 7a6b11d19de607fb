#pragma once

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "toscca/long_view.hpp"

namespace toscca {

// Long-format CSV: header row with an id column, a time column, and one
// column per feature. Plain comma separation, '.' decimal point.

enum class MissingCellPolicy { reject, drop_row };

struct CsvSchema {
  std::string id_column = "id";
  std::string time_column = "time";
  std::vector<std::string> feature_columns;  // empty = all remaining columns
  MissingCellPolicy missing = MissingCellPolicy::reject;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::optional<double> parse_double(const std::string& s) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
  if (b == e) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(b, e, value);
  if (ec != std::errc() || ptr != e) return std::nullopt;
  return value;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline LongView ingest_long_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw Error("ingest_long_csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw Error("ingest_long_csv: empty file '" + path + "'");
  const auto header = detail::split_csv_line(line);

  auto col_of = [&](const std::string& name) -> Index {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<Index>(i);
    throw Error("ingest_long_csv: missing column '" + name + "' in '" + path + "'");
  };

  const Index id_col = col_of(schema.id_column);
  const Index time_col = col_of(schema.time_column);

  std::vector<Index> feat_cols;
  std::vector<std::string> feat_names;
  if (schema.feature_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (static_cast<Index>(i) == id_col || static_cast<Index>(i) == time_col) continue;
      feat_cols.push_back(static_cast<Index>(i));
      feat_names.push_back(header[i]);
    }
  } else {
    for (const auto& name : schema.feature_columns) {
      feat_cols.push_back(col_of(name));
      feat_names.push_back(name);
    }
  }
  if (feat_cols.empty()) throw Error("ingest_long_csv: no feature columns in '" + path + "'");

  std::vector<std::string> ids;
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw Error("ingest_long_csv: line " + std::to_string(line_no) + " has " +
                  std::to_string(fields.size()) + " fields, expected " +
                  std::to_string(header.size()));
    const auto t = detail::parse_double(fields[static_cast<std::size_t>(time_col)]);
    if (!t)
      throw Error("ingest_long_csv: non-numeric time at line " + std::to_string(line_no));
    std::vector<double> row(feat_cols.size());
    bool drop = false;
    for (std::size_t j = 0; j < feat_cols.size(); ++j) {
      const std::string& cell = fields[static_cast<std::size_t>(feat_cols[j])];
      const auto v = detail::parse_double(cell);
      if (!v) {
        const bool empty = cell.find_first_not_of(" \t") == std::string::npos;
        if (empty && schema.missing == MissingCellPolicy::drop_row) {
          drop = true;
          break;
        }
        throw Error("ingest_long_csv: " + std::string(empty ? "missing" : "non-numeric") +
                    " value at line " + std::to_string(line_no) + ", column '" +
                    feat_names[j] + "'");
      }
      row[j] = *v;
    }
    if (drop) continue;
    ids.push_back(fields[static_cast<std::size_t>(id_col)]);
    times.push_back(*t);
    rows.push_back(std::move(row));
  }

  const Index n = static_cast<Index>(rows.size());
  MatrixXd values(n, static_cast<Index>(feat_cols.size()));
  VectorXd tvec(n);
  for (Index r = 0; r < n; ++r) {
    tvec[r] = times[static_cast<std::size_t>(r)];
    for (Index j = 0; j < values.cols(); ++j)
      values(r, j) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
  }

  // Duplicate (subject, time) pairs are rejected, not averaged.
  {
    std::set<std::pair<std::string, double>> seen;
    for (Index r = 0; r < n; ++r) {
      if (!seen.insert({ids[static_cast<std::size_t>(r)], tvec[r]}).second)
        throw Error("ingest_long_csv: duplicate timestamp " + detail::format_double(tvec[r]) +
                    " for subject '" + ids[static_cast<std::size_t>(r)] + "'");
    }
  }

  return LongView::make_sorted(std::move(values), std::move(ids), std::move(tvec),
                               std::move(feat_names));
}

// Mirrors the ingest schema; doubles use shortest round-trip formatting so
// ingest(export(v)) reproduces values bit-exactly.
inline void export_long_csv(const LongView& view, const std::string& path,
                            const CsvSchema& schema = {}) {
  std::ofstream out(path);
  if (!out) throw Error("export_long_csv: cannot open '" + path + "' for writing");
  out << schema.id_column << ',' << schema.time_column;
  for (const auto& name : view.feature_names) out << ',' << name;
  out << '\n';
  for (Index r = 0; r < view.rows(); ++r) {
    out << view.subject_ids[static_cast<std::size_t>(r)] << ','
        << detail::format_double(view.times[r]);
    for (Index j = 0; j < view.cols(); ++j)
      out << ',' << detail::format_double(view.values(r, j));
    out << '\n';
  }
  if (!out) throw Error("export_long_csv: write failed for '" + path + "'");
}

// Event table CSV: header `id,event_time`, one row per subject.
inline EventTable ingest_event_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("ingest_event_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("ingest_event_csv: empty file '" + path + "'");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "id" || header[1] != "event_time")
    throw Error("ingest_event_csv: expected header 'id,event_time' in '" + path + "'");
  EventTable events;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() < 2)
      throw Error("ingest_event_csv: malformed line " + std::to_string(line_no));
    const auto t = detail::parse_double(fields[1]);
    if (!t)
      throw Error("ingest_event_csv: non-numeric event_time at line " +
                  std::to_string(line_no));
    if (!events.emplace(fields[0], *t).second)
      throw Error("ingest_event_csv: duplicate event for subject '" + fields[0] + "'");
  }
  return events;
}

inline void export_event_csv(const EventTable& events, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("export_event_csv: cannot open '" + path + "' for writing");
  out << "id,event_time\n";
  for (const auto& [id, t] : events) out << id << ',' << detail::format_double(t) << '\n';
}

}  // namespace toscca
