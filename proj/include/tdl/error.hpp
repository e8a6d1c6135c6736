#pragma once

#include <stdexcept>
#include <string>

namespace tdl {

enum class ErrorCode {
  RankDeficient,
  DimensionMismatch,
  ZeroVector,
  DegenerateMap,
  InsufficientBackground,
  InvalidConfig,
  ShapeMismatch,
  AdapterUnavailable,
  MissingCam,
  InvalidManifest,
  NonFiniteLoss,
  EmptyDataset,
  InfeasibleConfig,
  FormatError,
  IoError,
};

const char* error_name(ErrorCode code);

/* Domain error carrying the name of the failing contract. The CLI prints
 * error_name(code()) and exits with status 1. */
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tdl
