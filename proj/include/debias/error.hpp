#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace debias {

enum class ErrorCode {
  kEmptyCaption,
  kFixedPadTooLarge,
  kIndexOutOfRange,
  kShapeMismatch,
  kContextOverflow,
  kDegenerateBatch,
  kRankTooLarge,
  kSpecInvalid,
  kCorpusEmpty,
  kResumeMismatch,
  kInvalidArgument,
  kIo,
  kParse,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every recoverable failure in the library is reported through this type so
// callers (and the CLI) can switch on the code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace debias
