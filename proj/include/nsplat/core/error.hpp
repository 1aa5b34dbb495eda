#pragma once

#include <stdexcept>
#include <string>

namespace nsplat {

// Error taxonomy mirrored by the CLI exit-code contract:
// validation -> 2, transport -> 3, numeric -> 4.
enum class ErrorKind {
  validation,
  transport,
  numeric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  int exit_code() const {
    switch (kind_) {
      case ErrorKind::validation: return 2;
      case ErrorKind::transport: return 3;
      case ErrorKind::numeric: return 4;
    }
    return 4;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_validation(const std::string& msg) {
  throw Error(ErrorKind::validation, msg);
}
[[noreturn]] inline void throw_transport(const std::string& msg) {
  throw Error(ErrorKind::transport, msg);
}
[[noreturn]] inline void throw_numeric(const std::string& msg) {
  throw Error(ErrorKind::numeric, msg);
}

}  // namespace nsplat
