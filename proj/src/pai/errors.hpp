#pragma once

#include <stdexcept>
#include <string>

namespace pai {

// Error categories map one-to-one onto CLI exit codes and C API status values:
// 1 check/verification failure, 2 usage/config error, 3 I/O error,
// 4 numerical failure.
enum class ErrorCode : int {
  check = 1,
  config = 2,
  io = 3,
  numeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

}  // namespace pai
