#pragma once

#include <stdexcept>
#include <string>

namespace dermxai {

// Values mirror dx_status in dermxai.h.
enum class ErrorCode {
  kInvalidArgument = 1,
  kNotFound = 2,
  kParse = 3,
  kData = 4,
  kCapability = 5,
  kNumeric = 6,
  kIo = 7,
  kInternal = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorCode::kInvalidArgument, what);
}

}  // namespace dermxai
