#include "weld/error.hpp"

namespace weld {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNoGrooveFound: return "NoGrooveFound";
    case ErrorCode::kNoCandidateLines: return "NoCandidateLines";
    case ErrorCode::kAmbiguousSeam: return "AmbiguousSeam";
    case ErrorCode::kDepthHole: return "DepthHole";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kDegenerateContour: return "DegenerateContour";
    case ErrorCode::kNoArcDetected: return "NoArcDetected";
    case ErrorCode::kInsufficientMotion: return "InsufficientMotion";
    case ErrorCode::kDegenerateTarget: return "DegenerateTarget";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kOutOfOrderFrame: return "OutOfOrderFrame";
    case ErrorCode::kTooFewFrames: return "TooFewFrames";
    case ErrorCode::kUnknownSession: return "UnknownSession";
    case ErrorCode::kCorruptRecord: return "CorruptRecord";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string stage, const std::string& message)
    : std::runtime_error(message), code_(code), stage_(std::move(stage)) {}

void fail(ErrorCode code, std::string stage, const std::string& message) {
  throw Error(code, std::move(stage), message);
}

}  // namespace weld
