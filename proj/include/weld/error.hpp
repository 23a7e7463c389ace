#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace weld {

enum class ErrorCode {
  kInvalidArgument,
  kNoGrooveFound,
  kNoCandidateLines,
  kAmbiguousSeam,
  kDepthHole,
  kShapeMismatch,
  kDegenerateContour,
  kNoArcDetected,
  kInsufficientMotion,
  kDegenerateTarget,
  kInvalidConfig,
  kOutOfOrderFrame,
  kTooFewFrames,
  kUnknownSession,
  kCorruptRecord,
  kParseError,
  kIo,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the engine carries a code and the pipeline stage
// that raised it ("groove", "edges", "track", ...). Stage may be empty for
// errors that are not tied to a pipeline step.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string stage, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  ErrorCode code_;
  std::string stage_;
};

[[noreturn]] void fail(ErrorCode code, std::string stage, const std::string& message);

}  // namespace weld
