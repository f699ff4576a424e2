#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fxisort {

enum class ErrorKind {
  dimension,
  domain,
  contract,
  degenerate,
  resolution,
  configuration,
  io,
  schema,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::domain: return "domain";
    case ErrorKind::contract: return "contract";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::resolution: return "resolution";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::io: return "io";
    case ErrorKind::schema: return "schema";
  }
  return "unknown";
}

// Every failure raised by the library carries a kind so the CLI can emit a
// machine-readable error record.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace fxisort
