// Copyright 2026 The vrd25 Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// CSV and flat key=value text helpers. CSV files are header-first, UTF-8,
// LF line endings; fields containing separators or quotes are double-quoted.

#ifndef VRD25_TEXT_IO_HPP_
#define VRD25_TEXT_IO_HPP_

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include "vrd25/core.hpp"

namespace vrd25 {

// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Fixed six-decimal rendering used by reports.
inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed,
                           digits);
  return std::string(buf, res.ptr);
}

inline std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_escape(fields[i]);
  }
  line += '\n';
  return line;
}

// Parsed CSV table with header-driven column lookup. Errors name the file,
// the 1-based line and the column.
class CsvTable {
 public:
  static CsvTable parse(std::string_view text, std::string source) {
    CsvTable t;
    t.source_ = std::move(source);
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_has_content = false;
    int line = 1;
    int row_line = 1;
    auto end_row = [&]() {
      row.push_back(field);
      field.clear();
      if (row_has_content || row.size() > 1 || !row[0].empty()) {
        if (t.header_.empty() && t.rows_.empty() && !t.have_header_) {
          t.header_ = row;
          t.have_header_ = true;
        } else {
          t.rows_.push_back(row);
          t.lines_.push_back(row_line);
        }
      }
      row.clear();
      row_has_content = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
      const char c = text[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            field += '"';
            ++i;
          } else {
            in_quotes = false;
          }
        } else {
          if (c == '\n') ++line;
          field += c;
        }
        continue;
      }
      if (c == '"') {
        in_quotes = true;
        row_has_content = true;
      } else if (c == ',') {
        row.push_back(field);
        field.clear();
        row_has_content = true;
      } else if (c == '\r') {
        // tolerated on input
      } else if (c == '\n') {
        end_row();
        ++line;
        row_line = line;
      } else {
        field += c;
        row_has_content = true;
      }
    }
    if (in_quotes) {
      throw ValidationError(t.source_ + ":" + std::to_string(row_line) +
                            ": unterminated quoted field");
    }
    if (!field.empty() || !row.empty()) end_row();
    if (!t.have_header_) {
      throw ValidationError(t.source_ + ": missing header row");
    }
    for (std::size_t i = 0; i < t.header_.size(); ++i) {
      t.index_[t.header_[i]] = static_cast<int>(i);
    }
    for (std::size_t r = 0; r < t.rows_.size(); ++r) {
      if (t.rows_[r].size() != t.header_.size()) {
        throw ValidationError(t.source_ + ":" + std::to_string(t.lines_[r]) +
                              ": expected " + std::to_string(t.header_.size()) +
                              " fields, found " +
                              std::to_string(t.rows_[r].size()));
      }
    }
    return t;
  }

  static CsvTable read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  const std::vector<std::string>& header() const { return header_; }
  std::size_t size() const { return rows_.size(); }
  const std::string& source() const { return source_; }
  int line(std::size_t r) const { return lines_[r]; }

  bool has(std::string_view column) const {
    return index_.count(std::string(column)) > 0;
  }

  std::optional<int> column(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  void require(const std::vector<std::string>& columns) const {
    for (const auto& c : columns) {
      if (!has(c)) {
        throw ValidationError(source_ + ": missing column '" + c + "'");
      }
    }
  }

  const std::string& at(std::size_t r, std::string_view col) const {
    auto it = index_.find(std::string(col));
    if (it == index_.end()) {
      throw ValidationError(source_ + ": missing column '" + std::string(col) +
                            "'");
    }
    return rows_[r][it->second];
  }

  const std::string& at(std::size_t r, int col) const { return rows_[r][col]; }

  [[noreturn]] void fail(std::size_t r, std::string_view col,
                         const std::string& what) const {
    throw ValidationError(source_ + ":" + std::to_string(lines_[r]) +
                          ": column '" + std::string(col) + "': " + what);
  }

  long long as_int(std::size_t r, std::string_view col) const {
    const std::string& s = at(r, col);
    long long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      fail(r, col, "expected integer, got '" + s + "'");
    }
    return v;
  }

  double as_double(std::size_t r, std::string_view col) const {
    const std::string& s = at(r, col);
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      fail(r, col, "expected number, got '" + s + "'");
    }
    return v;
  }

  std::optional<double> as_optional_double(std::size_t r,
                                           std::string_view col) const {
    if (at(r, col).empty()) return std::nullopt;
    return as_double(r, col);
  }

  bool as_bool(std::size_t r, std::string_view col) const {
    const std::string& s = at(r, col);
    if (s == "1" || s == "true") return true;
    if (s == "0" || s == "false") return false;
    fail(r, col, "expected 0/1, got '" + s + "'");
  }

  std::optional<DepthPredicate> as_depth(std::size_t r, std::string_view col,
                                         bool allow_empty) const {
    const std::string& s = at(r, col);
    if (s.empty()) {
      if (allow_empty) return std::nullopt;
      fail(r, col, "missing depth predicate");
    }
    const long long c = as_int(r, col);
    if (c < 0 || c > 3) {
      fail(r, col, "invalid depth predicate code " + s);
    }
    return static_cast<DepthPredicate>(c);
  }

  std::optional<OcclusionPredicate> as_occlusion(std::size_t r,
                                                 std::string_view col) const {
    const std::string& s = at(r, col);
    if (s.empty()) return std::nullopt;
    const long long c = as_int(r, col);
    if (c < 0 || c > 3) {
      fail(r, col, "invalid occlusion predicate code " + s);
    }
    return static_cast<OcclusionPredicate>(c);
  }

 private:
  std::string source_;
  bool have_header_ = false;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<int> lines_;
  std::unordered_map<std::string, int> index_;
};

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes through a sibling temp file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path,
                              std::string_view contents) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Flat key=value configuration. '#' starts a comment; blank lines ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, std::string source) {
    KeyValueConfig cfg;
    cfg.source_ = std::move(source);
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) {
        line.erase(hash);
      }
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ValidationError(cfg.source_ + ":" + std::to_string(lineno) +
                              ": expected key=value");
      }
      cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static KeyValueConfig read(const std::filesystem::path& path) {
    return parse(read_text_file(path), path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, std::string fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    double v = 0;
    const std::string& s = it->second;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ValidationError(source_ + ": key '" + key +
                            "' expects a number, got '" + s + "'");
    }
    return v;
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    long long v = 0;
    const std::string& s = it->second;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ValidationError(source_ + ": key '" + key +
                            "' expects an integer, got '" + s + "'");
    }
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "1" || it->second == "true") return true;
    if (it->second == "0" || it->second == "false") return false;
    throw ValidationError(source_ + ": key '" + key + "' expects 0/1");
  }

  // Rejects keys outside `known` so typos in config files are not silent.
  void check_known(const std::vector<std::string>& known) const {
    for (const auto& [k, v] : values_) {
      bool ok = false;
      for (const auto& n : known) ok = ok || n == k;
      if (!ok) throw ValidationError(source_ + ": unknown key '" + k + "'");
    }
  }

 private:
  std::string source_;
  std::map<std::string, std::string> values_;
};

}  // namespace vrd25

#endif  // VRD25_TEXT_IO_HPP_
