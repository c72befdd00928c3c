#pragma once

#include <stdexcept>
#include <string>

namespace matchkit {

// Error taxonomy shared by the library and the CLI exit-code mapping.
enum class ErrorKind {
  schema,      // malformed input files, missing columns
  validation,  // well-formed input violating a data invariant
  numeric,     // estimation failure (no local support, degenerate design)
  domain,      // argument outside an operation's domain
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error schema_error(std::string msg) { return {ErrorKind::schema, std::move(msg)}; }
inline Error validation_error(std::string msg) { return {ErrorKind::validation, std::move(msg)}; }
inline Error numeric_error(std::string msg) { return {ErrorKind::numeric, std::move(msg)}; }
inline Error domain_error(std::string msg) { return {ErrorKind::domain, std::move(msg)}; }

}  // namespace matchkit
