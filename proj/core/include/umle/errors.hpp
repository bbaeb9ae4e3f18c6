#pragma once

#include <stdexcept>
#include <string>

namespace umle {

// Error taxonomy used across the library. CLI maps ConfigError -> exit 2 and
// NonFiniteGradient -> exit 3; everything else is a generic failure.

struct UmleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : UmleError {
  using UmleError::UmleError;
};

struct DatasetEmpty : UmleError {
  using UmleError::UmleError;
};

struct PatchTooLarge : UmleError {
  using UmleError::UmleError;
};

struct InvalidKernelSpec : UmleError {
  using UmleError::UmleError;
};

struct PyramidShapeError : UmleError {
  using UmleError::UmleError;
};

struct CheckpointCorrupt : UmleError {
  using UmleError::UmleError;
};

struct ConfigMismatch : UmleError {
  using UmleError::UmleError;
};

struct ConfigError : UmleError {
  using UmleError::UmleError;
};

struct ImageTooSmall : UmleError {
  using UmleError::UmleError;
};

struct InvalidCount : UmleError {
  using UmleError::UmleError;
};

struct NonFiniteGradient : UmleError {
  NonFiniteGradient(const std::string& param_name, long iteration)
      : UmleError("non-finite gradient in '" + param_name + "' at iteration " +
                  std::to_string(iteration)),
        param(param_name),
        iteration(iteration) {}
  std::string param;
  long iteration = -1;
};

}  // namespace umle
