#pragma once

#include <stdexcept>
#include <string>

namespace nlslab {

// Error taxonomy mirrored by the CLI exit codes:
//   ValidationError -> 2, NumericalError -> 3, MissingInputError -> 4.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoBoundStateError : NumericalError {
  explicit NoBoundStateError(const std::string& what) : NumericalError(what) {}
};

struct NewtonDivergenceError : NumericalError {
  double last_residual;
  explicit NewtonDivergenceError(const std::string& what, double residual)
      : NumericalError(what + " (last residual " + std::to_string(residual) + ")"),
        last_residual(residual) {}
};

struct BranchRadiusError : ValidationError {
  explicit BranchRadiusError(const std::string& what) : ValidationError(what) {}
};

struct OutsideSmallDataRadiusError : ValidationError {
  explicit OutsideSmallDataRadiusError(const std::string& what) : ValidationError(what) {}
};

struct ResonantPotentialError : NumericalError {
  explicit ResonantPotentialError(const std::string& what) : NumericalError(what) {}
};

struct NonFiniteFieldError : NumericalError {
  explicit NonFiniteFieldError(const std::string& what) : NumericalError(what) {}
};

}  // namespace nlslab
