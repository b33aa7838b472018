#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aphase {

enum class ErrorKind {
  InvalidArgument,
  StepSizeUnderflow,
  NonFinite,
  SingularPropagator,
  OffManifold,
  DegenerateAngle,
  OutsideTube,
  NonHyperbolic,
  HorizonTooShort,
  ConstantsInfeasible,
  NoContraction,
  BoundViolated,
  InconsistentH,
  ChartExceeded,
  SelfMapViolated,
  NonConvergent,
  VerificationFailed,
  ConfigError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure in the library is reported through this type; `kind()`
/// identifies the originating condition, `what()` carries the diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace aphase
