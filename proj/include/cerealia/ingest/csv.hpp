#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/numeric_text.hpp"
#include "cerealia/core/series.hpp"
#include "cerealia/core/time.hpp"

namespace cerealia::ingest {

struct CsvFormat {
  char delimiter = ',';
  std::string timestamp_column = "timestamp";
  std::string timestamp_format = kIsoUtcPattern;
  /// CSV column names, one per schema attribute in schema order. Empty means
  /// "the columns carry the schema attribute names".
  std::vector<std::string> attribute_columns;
  /// Match a header cell when it starts with the configured name; exports
  /// often carry units in a legacy encoding after the name.
  bool match_column_prefix = false;
  /// Rejected rows tolerated before the file is considered broken; at least
  /// one reject is always tolerated.
  double max_reject_ratio = 0.05;
};

struct CsvReject {
  std::size_t line = 0;  // 1-based physical line number
  std::string reason;
};

struct CsvParseResult {
  WeatherSeries series;
  std::vector<CsvReject> rejects;
  std::size_t data_rows = 0;
};

namespace detail {

inline std::string unquote(std::string_view field) {
  field = trim(field);
  if (field.size() >= 2 && field.front() == '"' && field.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < field.size(); ++i) {
      out.push_back(field[i]);
      if (field[i] == '"' && i + 2 < field.size() && field[i + 1] == '"') ++i;
    }
    return out;
  }
  return std::string(field);
}

/// Splits one record, honoring double-quoted fields.
inline std::vector<std::string> split_record(std::string_view line, char delimiter) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == delimiter && !quoted) {
      fields.push_back(unquote(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  fields.push_back(unquote(line.substr(start)));
  return fields;
}

}  // namespace detail

inline CsvParseResult parse_csv(std::istream& in, const CsvFormat& format, const AttributeSchema& schema) {
  const auto& columns = format.attribute_columns.empty() ? schema.names() : format.attribute_columns;
  if (columns.size() != schema.arity()) {
    throw Error(Errc::format, "attribute column list does not match schema arity");
  }
  if (std::find(columns.begin(), columns.end(), format.timestamp_column) != columns.end()) {
    throw Error(Errc::format, "timestamp column '" + format.timestamp_column + "' is also an attribute column");
  }

  std::string line;
  std::size_t line_no = 0;
  // Header, skipping a UTF-8 byte-order mark.
  if (!std::getline(in, line)) throw Error(Errc::format, "CSV has no header row");
  ++line_no;
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = detail::split_record(line, format.delimiter);
  auto find_column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find_if(header.begin(), header.end(), [&](const std::string& cell) {
      return format.match_column_prefix ? cell.rfind(name, 0) == 0 : cell == name;
    });
    if (it == header.end()) throw Error(Errc::format, "missing required column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ts_col = find_column(format.timestamp_column);
  std::vector<std::size_t> value_cols;
  for (const auto& c : columns) value_cols.push_back(find_column(c));

  CsvParseResult result;
  result.series.schema = schema;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++result.data_rows;
    const auto fields = detail::split_record(line, format.delimiter);
    if (fields.size() != header.size()) {
      result.rejects.push_back({line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                             std::to_string(fields.size())});
      continue;
    }
    WeatherSample sample;
    try {
      sample.timestamp = parse_timestamp(fields[ts_col], format.timestamp_format);
    } catch (const Error&) {
      result.rejects.push_back({line_no, "unparseable timestamp '" + fields[ts_col] + "'"});
      continue;
    }
    sample.values.reserve(value_cols.size());
    std::optional<std::string> bad;
    for (std::size_t j = 0; j < value_cols.size(); ++j) {
      const auto& field = fields[value_cols[j]];
      if (trim(field).empty()) {
        sample.values.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const auto v = parse_double(field);
      if (!v || std::isinf(*v)) {
        bad = "unparseable value '" + field + "' in column '" + columns[j] + "'";
        break;
      }
      sample.values.push_back(*v);
    }
    if (bad) {
      result.rejects.push_back({line_no, *bad});
      continue;
    }
    if (!result.series.samples.empty() && sample.timestamp <= result.series.samples.back().timestamp) {
      result.rejects.push_back({line_no, "non-increasing timestamp"});
      continue;
    }
    result.series.samples.push_back(std::move(sample));
  }

  const auto allowed = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(format.max_reject_ratio * static_cast<double>(result.data_rows))));
  if (result.rejects.size() > allowed) {
    throw Error(Errc::format, std::to_string(result.rejects.size()) + " of " + std::to_string(result.data_rows) +
                                  " rows rejected (first at line " + std::to_string(result.rejects.front().line) +
                                  ": " + result.rejects.front().reason + ")");
  }
  return result;
}

/// Layout of the Jena (Beutenberg) weather export: "Date Time" as
/// dd.mm.yyyy HH:MM:SS, one column per beutenberg_schema() attribute.
inline CsvFormat beutenberg_csv_format() {
  CsvFormat f;
  f.timestamp_column = "Date Time";
  f.timestamp_format = "%d.%m.%Y %H:%M:%S";
  f.match_column_prefix = true;
  f.attribute_columns = {"T (",     "Tpot (",  "Tdew (",  "Tlog (",  "VPact (", "VPmax (",  "p (",
                         "VPdef (", "rh (",    "sh (",    "H2OC (",  "rho (",   "wv (",     "wd (",
                         "max. wv (", "rain (", "raining (", "SWDR (", "PAR (",  "CO2 ("};
  return f;
}

inline CsvParseResult parse_csv(const std::string& path, const CsvFormat& format, const AttributeSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open CSV '" + path + "'");
  return parse_csv(in, format, schema);
}

inline void write_csv(std::ostream& out, const WeatherSeries& series, const CsvFormat& format = {}) {
  const auto& columns = format.attribute_columns.empty() ? series.schema.names() : format.attribute_columns;
  out << format.timestamp_column;
  for (const auto& c : columns) out << format.delimiter << c;
  out << '\n';
  for (const auto& s : series.samples) {
    out << format_timestamp(s.timestamp, format.timestamp_format.c_str());
    for (double v : s.values) {
      out << format.delimiter;
      if (!std::isnan(v)) out << format_double(v);
    }
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const WeatherSeries& series, const CsvFormat& format = {}) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write CSV '" + path + "'");
  write_csv(out, series, format);
  if (!out) throw Error(Errc::io, "failed writing CSV '" + path + "'");
}

}  // namespace cerealia::ingest
