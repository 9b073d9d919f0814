#pragma once

// Flat sectioned key = value files (a TOML subset): top-level keys, then
// [section] blocks. Values are strings, booleans, integers, reals or flat
// arrays of those. One experiment per file.

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "occlab/error.hpp"

namespace occlab {

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

struct ConfigValue {
  enum class Type { boolean, integer, real, string, array } type = Type::string;
  std::string text;  // integers keep their digits so 64-bit seeds survive
  double real = 0.0;
  bool boolean = false;
  std::vector<ConfigValue> items;

  std::string canonical() const {
    switch (type) {
      case Type::boolean: return boolean ? "true" : "false";
      case Type::integer: return text;
      case Type::real: {
        std::string s = format_real(real);
        if (s.find_first_of(".eni") == std::string::npos) s += ".0";
        return s;
      }
      case Type::string: {
        std::string s = "\"";
        for (char c : text) {
          if (c == '"' || c == '\\') s += '\\';
          s += c;
        }
        return s + "\"";
      }
      case Type::array: {
        std::string s = "[";
        for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + items[i].canonical();
        return s + "]";
      }
    }
    return {};
  }
};

class Config {
 public:
  // Keys that steer execution but do not change results; excluded from the
  // digest.
  static inline const std::set<std::string> execution_keys{"workers", "output_dir"};

  static Config parse(std::string_view text, const std::string& source = "<config>") {
    Config cfg;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream is{std::string(text)};
    std::string line;
    while (std::getline(is, line)) {
      ++line_no;
      const std::string where = source + ":" + std::to_string(line_no);
      std::string_view v = strip_comment(line);
      v = trim(v);
      if (v.empty()) continue;
      if (v.front() == '[') {
        require(v.back() == ']' && v.size() > 2, ErrorKind::validation, where + ": malformed section header");
        section = std::string(trim(v.substr(1, v.size() - 2)));
        require(valid_name(section), ErrorKind::validation, where + ": invalid section name '" + section + "'");
        continue;
      }
      const auto eq = v.find('=');
      require(eq != std::string_view::npos, ErrorKind::validation, where + ": expected key = value");
      const std::string name(trim(v.substr(0, eq)));
      require(valid_name(name), ErrorKind::validation, where + ": invalid key '" + name + "'");
      const std::string key = section.empty() ? name : section + "." + name;
      require(!cfg.values_.count(key), ErrorKind::validation, key + ": duplicate key");
      std::string_view rest = trim(v.substr(eq + 1));
      cfg.values_[key] = parse_value(rest, key);
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  // Top-level keys first, then sections; keys sorted in each.
  std::string canonical(bool include_execution = true) const {
    std::string out, current = "\x01";
    auto emit = [&](bool top) {
      for (const auto& [key, val] : values_) {
        const auto dot = key.find('.');
        if ((dot == std::string::npos) != top) continue;
        if (top && !include_execution && execution_keys.count(key)) continue;
        const std::string sec = top ? "" : key.substr(0, dot);
        if (!top && sec != current) {
          out += (out.empty() ? "[" : "\n[") + sec + "]\n";
          current = sec;
        }
        out += (top ? key : key.substr(dot + 1)) + " = " + val.canonical() + "\n";
      }
    };
    emit(true);
    emit(false);
    return out;
  }

  std::string digest() const {
    const std::string text = canonical(false);
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    require(EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) == 1, ErrorKind::io,
            "SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (unsigned i = 0; i < len; ++i) s += hex[md[i] >> 4], s += hex[md[i] & 15];
    return s;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::vector<std::string> keys() const {
    std::vector<std::string> k;
    for (const auto& kv : values_) k.push_back(kv.first);
    return k;
  }
  void erase(const std::string& key) { values_.erase(key); }
  // `literal` is parsed like a value in the file.
  void set(const std::string& key, std::string_view literal) { values_[key] = parse_value(literal, key); }

  const ConfigValue& at(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), ErrorKind::validation, key + ": missing required key");
    return it->second;
  }

  std::string get_string(const std::string& key) const {
    const auto& v = at(key);
    require(v.type == ConfigValue::Type::string, ErrorKind::validation, key + ": expected a string");
    return v.text;
  }
  std::string get_string(const std::string& key, const std::string& dflt) const {
    return has(key) ? get_string(key) : dflt;
  }

  double get_real(const std::string& key) const { return as_real(at(key), key); }
  double get_real(const std::string& key, double dflt) const { return has(key) ? get_real(key) : dflt; }

  std::int64_t get_int(const std::string& key) const {
    const auto& v = at(key);
    require(v.type == ConfigValue::Type::integer, ErrorKind::validation, key + ": expected an integer");
    std::int64_t out = 0;
    const auto res = std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
    require(res.ec == std::errc{}, ErrorKind::validation, key + ": integer out of range");
    return out;
  }
  std::int64_t get_int(const std::string& key, std::int64_t dflt) const { return has(key) ? get_int(key) : dflt; }

  std::uint64_t get_uint(const std::string& key) const {
    const auto& v = at(key);
    require(v.type == ConfigValue::Type::integer && v.text.front() != '-', ErrorKind::validation,
            key + ": expected a nonnegative integer");
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
    require(res.ec == std::errc{}, ErrorKind::validation, key + ": integer out of range");
    return out;
  }

  bool get_bool(const std::string& key, bool dflt) const {
    if (!has(key)) return dflt;
    const auto& v = at(key);
    require(v.type == ConfigValue::Type::boolean, ErrorKind::validation, key + ": expected true or false");
    return v.boolean;
  }

  std::vector<double> get_reals(const std::string& key) const {
    const auto& v = at(key);
    require(v.type == ConfigValue::Type::array, ErrorKind::validation, key + ": expected an array");
    std::vector<double> out;
    for (const auto& item : v.items) out.push_back(as_real(item, key));
    return out;
  }

  std::vector<std::string> get_strings(const std::string& key) const {
    const auto& v = at(key);
    require(v.type == ConfigValue::Type::array, ErrorKind::validation, key + ": expected an array");
    std::vector<std::string> out;
    for (const auto& item : v.items) {
      require(item.type == ConfigValue::Type::string, ErrorKind::validation, key + ": expected an array of strings");
      out.push_back(item.text);
    }
    return out;
  }

  // Rejects keys outside `allowed` (typos would otherwise be silently ignored).
  void check_known(const std::set<std::string>& allowed) const {
    for (const auto& kv : values_)
      require(allowed.count(kv.first) > 0, ErrorKind::validation, kv.first + ": unknown key");
  }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  }

  static std::string_view strip_comment(std::string_view s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '\\' && quoted) ++i;
      else if (s[i] == '"') quoted = !quoted;
      else if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static bool valid_name(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    });
  }

  static double as_real(const ConfigValue& v, const std::string& key) {
    if (v.type == ConfigValue::Type::real) return v.real;
    if (v.type == ConfigValue::Type::integer) {
      double out = 0;
      std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
      return out;
    }
    fail(ErrorKind::validation, key + ": expected a number");
  }

  static ConfigValue parse_scalar(std::string_view s, const std::string& key) {
    ConfigValue v;
    require(!s.empty(), ErrorKind::validation, key + ": missing value");
    if (s.front() == '"') {
      require(s.size() >= 2 && s.back() == '"', ErrorKind::validation, key + ": unterminated string");
      v.type = ConfigValue::Type::string;
      for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        if (s[i] == '\\' && i + 2 < s.size()) ++i;
        v.text += s[i];
      }
      return v;
    }
    if (s == "true" || s == "false") {
      v.type = ConfigValue::Type::boolean;
      v.boolean = s == "true";
      return v;
    }
    const bool integral = std::all_of(s.begin() + (s.front() == '-' || s.front() == '+'), s.end(),
                                      [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) &&
                          s.size() > static_cast<std::size_t>(s.front() == '-' || s.front() == '+');
    if (integral) {
      v.type = ConfigValue::Type::integer;
      v.text = std::string(s.front() == '+' ? s.substr(1) : s);
      // normalize "-0" and leading zeros
      const bool neg = v.text.front() == '-';
      std::string digits = v.text.substr(neg);
      digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size() - 1));
      v.text = (neg && digits != "0" ? "-" : "") + digits;
      return v;
    }
    v.type = ConfigValue::Type::real;
    const char* b = s.data() + (s.front() == '+');
    const auto res = std::from_chars(b, s.data() + s.size(), v.real);
    require(res.ec == std::errc{} && res.ptr == s.data() + s.size(), ErrorKind::validation,
            key + ": cannot parse value '" + std::string(s) + "'");
    return v;
  }

  static ConfigValue parse_value(std::string_view s, const std::string& key) {
    s = trim(s);
    if (!s.empty() && s.front() == '[') {
      require(s.back() == ']', ErrorKind::validation, key + ": unterminated array");
      ConfigValue v;
      v.type = ConfigValue::Type::array;
      std::string_view body = trim(s.substr(1, s.size() - 2));
      bool quoted = false;
      std::size_t start = 0;
      for (std::size_t i = 0; i <= body.size(); ++i) {
        if (i < body.size() && body[i] == '\\' && quoted) {
          ++i;
          continue;
        }
        if (i < body.size() && body[i] == '"') quoted = !quoted;
        if (i == body.size() || (body[i] == ',' && !quoted)) {
          const auto item = trim(body.substr(start, i - start));
          if (!item.empty()) v.items.push_back(parse_scalar(item, key));
          else require(i == body.size(), ErrorKind::validation, key + ": empty array element");
          start = i + 1;
        }
      }
      return v;
    }
    return parse_scalar(s, key);
  }

  std::map<std::string, ConfigValue> values_;
};

}  // namespace occlab
