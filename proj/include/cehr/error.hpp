#pragma once

#include <stdexcept>
#include <string>

namespace cehr {

enum class ErrorCode {
  InvalidArgument,  // caller broke a precondition
  Io,               // file missing or unreadable
  Data,             // input data violates a format or invariant
  Grammar,          // token sequence outside the representation language
  NotAvailable,     // metric undefined for this input (single class, empty cohort, ...)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace cehr
