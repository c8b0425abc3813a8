#include "hbuq/error.hpp"

namespace hbuq {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kNonPositiveDefinite: return "NonPositiveDefinite";
    case ErrorKind::kNonConvergence: return "NonConvergence";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kInsufficientData: return "InsufficientData";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kSchemaError: return "SchemaError";
    case ErrorKind::kDegenerateFit: return "DegenerateFit";
    case ErrorKind::kInfeasibleStart: return "InfeasibleStart";
    case ErrorKind::kIndefiniteHessian: return "IndefiniteHessian";
    case ErrorKind::kSingularBlock: return "SingularBlock";
    case ErrorKind::kTooFewSegments: return "TooFewSegments";
    case ErrorKind::kExcessiveRejection: return "ExcessiveRejection";
    case ErrorKind::kImproperDensity: return "ImproperDensity";
    case ErrorKind::kIoError: return "IoError";
    case ErrorKind::kMissingArtifacts: return "MissingArtifacts";
  }
  return "Unknown";
}

}  // namespace hbuq
