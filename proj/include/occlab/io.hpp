#pragma once

// Output writers: RFC 4180 CSV (header row, CRLF, '.' decimals from
// to_chars so the locale never leaks in) and JSON Lines.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "occlab/config.hpp"
#include "occlab/error.hpp"

namespace occlab {

using Json = nlohmann::ordered_json;

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path, std::ios::binary) {
    require(static_cast<bool>(out_), ErrorKind::io, "cannot write " + path.string());
    columns_ = header.size();
    row(header);
  }

  void row(const std::vector<std::string>& fields) {
    require(fields.size() == columns_, ErrorKind::io, "CSV row has the wrong number of fields");
    for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << csv_field(fields[i]);
    out_ << "\r\n";
  }

 private:
  std::ofstream out_;
  std::size_t columns_ = 0;
};

inline std::string cell(double v) { return format_real(v); }
inline std::string cell(std::int64_t v) { return std::to_string(v); }
inline std::string cell(std::uint64_t v) { return std::to_string(v); }
inline std::string cell(int v) { return std::to_string(v); }
inline std::string cell(bool v) { return v ? "true" : "false"; }
inline std::string cell(const std::string& v) { return v; }
inline std::string cell(const char* v) { return v; }

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    require(static_cast<bool>(out_), ErrorKind::io, "cannot write " + path.string());
  }
  void write(const Json& record) { out_ << record.dump(-1, ' ', false, Json::error_handler_t::replace) << "\n"; }

 private:
  std::ofstream out_;
};

// Non-finite reals become strings; JSON has no literal for them.
inline Json json_real(double v) {
  if (std::isfinite(v)) return v;
  return format_real(v);
}

inline Json json_reals(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(json_real(x));
  return a;
}

}  // namespace occlab
