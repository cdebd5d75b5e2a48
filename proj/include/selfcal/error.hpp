#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace selfcal {

enum class ErrorCode {
  InvalidConfig,
  InvalidButtonCount,
  MixedSignalKinds,
  SessionComplete,
  NoValidHypothesis,
  PreconditionViolation,
  SingleClass,
  DimensionMismatch,
  TooFewPoints,
  EmptyClip,
  EmbedderFailure,
  MalformedSignal,
  UnknownSession,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidButtonCount: return "InvalidButtonCount";
    case ErrorCode::MixedSignalKinds: return "MixedSignalKinds";
    case ErrorCode::SessionComplete: return "SessionComplete";
    case ErrorCode::NoValidHypothesis: return "NoValidHypothesis";
    case ErrorCode::PreconditionViolation: return "PreconditionViolation";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::EmptyClip: return "EmptyClip";
    case ErrorCode::EmbedderFailure: return "EmbedderFailure";
    case ErrorCode::MalformedSignal: return "MalformedSignal";
    case ErrorCode::UnknownSession: return "UnknownSession";
  }
  return "Unknown";
}

// Every engine failure carries a machine-readable code so the service can map
// it onto an HTTP status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace selfcal
