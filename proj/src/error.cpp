#include "evsn/error.hpp"

namespace evsn {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::shape: return "shape error";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::contract: return "contract error";
    case ErrorKind::degenerate: return "degenerate input";
    case ErrorKind::data: return "data error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::config: return "config error";
    case ErrorKind::numeric: return "numeric failure";
  }
  return "error";
}

}  // namespace evsn
