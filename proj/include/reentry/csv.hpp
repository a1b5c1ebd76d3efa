// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal header-keyed CSV reading/writing. Quoted fields with embedded
// commas and doubled quotes are supported; multi-line fields are not.

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "reentry/error.hpp"

namespace reentry::csv {

using Row = std::map<std::string, std::string>;

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

/// Reads all rows keyed by the header line. Blank lines and lines starting
/// with '#' are skipped.
inline std::vector<Row> read(std::istream& in) {
  std::vector<Row> rows;
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto cells = split_line(t);
    if (header.empty()) {
      header = std::move(cells);
      continue;
    }
    if (cells.size() != header.size())
      throw input_error("MalformedCsv", "expected " + std::to_string(header.size()) +
                                            " columns, got " + std::to_string(cells.size()));
    Row row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = std::move(cells[i]);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<Row> read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("FileNotFound", path);
  return read(in);
}

inline const std::string& field(const Row& row, const std::string& name) {
  const auto it = row.find(name);
  if (it == row.end() || it->second.empty()) throw FieldError("MissingField", name);
  return it->second;
}

/// Full-precision numeric parse; the whole cell must be consumed.
inline double to_double(const std::string& text, const std::string& field_name) {
  const auto t = trim(text);
  double v = 0.0;
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  if (!t.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || t.empty()) throw FieldError("MalformedNumber", field_name);
  return v;
}

inline long long to_int(const std::string& text, const std::string& field_name) {
  const auto t = trim(text);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw FieldError("MalformedNumber", field_name);
  return v;
}

/// Shortest text that round-trips to the same double.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace reentry::csv
