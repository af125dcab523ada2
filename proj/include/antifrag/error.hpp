#pragma once

#include <stdexcept>
#include <string>

namespace antifrag {

enum class ErrorCode {
  invalid_input,
  invalid_spec,
  unsupported,
  validation,
  aborted,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

// Warnings go to stderr unless a sink is installed (tests capture them).
using WarningSink = void (*)(const std::string&);
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace antifrag
