#include "tdl/error.hpp"

namespace tdl {

const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DegenerateMap: return "DegenerateMap";
    case ErrorCode::InsufficientBackground: return "InsufficientBackground";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::AdapterUnavailable: return "AdapterUnavailable";
    case ErrorCode::MissingCam: return "MissingCam";
    case ErrorCode::InvalidManifest: return "InvalidManifest";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InfeasibleConfig: return "InfeasibleConfig";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace tdl
