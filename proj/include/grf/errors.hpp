#pragma once

#include <stdexcept>
#include <string>

namespace grf {

// Bad input: configs, algebras, metrics. Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(const std::string& kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(kind) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

// Numerical breakdown during a run. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(kind) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define GRF_DECLARE_ERROR(Name, Base)                                    \
  class Name : public Base {                                             \
   public:                                                               \
    explicit Name(const std::string& what) : Base(#Name, what) {}        \
  };

GRF_DECLARE_ERROR(NonInvertiblePairing, ValidationError)
GRF_DECLARE_ERROR(InvalidLieAlgebra, ValidationError)
GRF_DECLARE_ERROR(SingularBasis, ValidationError)
GRF_DECLARE_ERROR(DegenerateSubspace, ValidationError)
GRF_DECLARE_ERROR(ForbiddenRank, ValidationError)
GRF_DECLARE_ERROR(NotAPseudometric, ValidationError)
GRF_DECLARE_ERROR(NonPositiveHalfDensity, ValidationError)
GRF_DECLARE_ERROR(ConfigParseError, ValidationError)

GRF_DECLARE_ERROR(RetractionDiverged, NumericalError)
GRF_DECLARE_ERROR(StepUnderflow, NumericalError)
GRF_DECLARE_ERROR(PositivityLost, NumericalError)
GRF_DECLARE_ERROR(DegenerateMetric, NumericalError)
GRF_DECLARE_ERROR(EigensolverStalled, NumericalError)

#undef GRF_DECLARE_ERROR

}  // namespace grf
