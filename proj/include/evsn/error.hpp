#pragma once

#include <stdexcept>
#include <string>

namespace evsn {

enum class ErrorKind {
  shape,       // incompatible dimensions
  domain,      // argument outside a function's mathematical domain
  contract,    // caller broke a precondition
  degenerate,  // input too degenerate for the algorithm
  data,        // malformed or inconsistent input data
  io,          // filesystem failures
  config,      // invalid configuration values
  numeric,     // non-finite values produced during computation
};

const char* to_string(ErrorKind kind) noexcept;

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

}  // namespace evsn
