#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hbuq {

enum class ErrorKind {
  kDimensionMismatch,
  kNonPositiveDefinite,
  kNonConvergence,
  kInvalidConfig,
  kInsufficientData,
  kParseError,
  kSchemaError,
  kDegenerateFit,
  kInfeasibleStart,
  kIndefiniteHessian,
  kSingularBlock,
  kTooFewSegments,
  kExcessiveRejection,
  kImproperDensity,
  kIoError,
  kMissingArtifacts,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace hbuq
