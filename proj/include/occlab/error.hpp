#pragma once

#include <stdexcept>
#include <string>

namespace occlab {

// Error categories. The CLI maps validation/usage errors to exit code 2 and
// everything else to exit code 3.
enum class ErrorKind {
  validation,
  domain,
  range,
  bracket,
  regime,
  invalid_grid,
  invalid_scale,
  degenerate_scale,
  insufficient_data,
  insufficient_horizon,
  censoring,
  resource,
  io,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::domain: return "domain";
    case ErrorKind::range: return "range";
    case ErrorKind::bracket: return "bracket";
    case ErrorKind::regime: return "regime";
    case ErrorKind::invalid_grid: return "invalid-grid";
    case ErrorKind::invalid_scale: return "invalid-scale";
    case ErrorKind::degenerate_scale: return "degenerate-scale";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::insufficient_horizon: return "insufficient-horizon";
    case ErrorKind::censoring: return "censoring";
    case ErrorKind::resource: return "resource";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  // The message without the category prefix.
  const std::string& detail() const noexcept { return detail_; }
  bool is_usage() const noexcept { return kind_ == ErrorKind::validation; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace occlab
