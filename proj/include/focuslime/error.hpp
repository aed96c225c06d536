#pragma once

#include <stdexcept>
#include <string>

namespace focuslime {

enum class ErrorCode {
  ContractViolation,
  BudgetExhausted,
  NetworkError,
  UnparseableResponse,
  DegenerateFocus,
  InsufficientSamples,
  NoEvidence,
  ConfigError,
  IoError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ContractViolation: return "CONTRACT_VIOLATION";
    case ErrorCode::BudgetExhausted: return "BUDGET_EXHAUSTED";
    case ErrorCode::NetworkError: return "NETWORK_ERROR";
    case ErrorCode::UnparseableResponse: return "UNPARSEABLE_RESPONSE";
    case ErrorCode::DegenerateFocus: return "DEGENERATE_FOCUS";
    case ErrorCode::InsufficientSamples: return "INSUFFICIENT_SAMPLES";
    case ErrorCode::NoEvidence: return "NO_EVIDENCE";
    case ErrorCode::ConfigError: return "CONFIG_ERROR";
    case ErrorCode::IoError: return "IO_ERROR";
  }
  return "UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace focuslime
