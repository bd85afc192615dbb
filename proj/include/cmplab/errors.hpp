#pragma once

#include <stdexcept>
#include <string>

namespace cmplab {

// Tensor shapes do not conform for an operation.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An index (class target, chain step, segment id) is out of range.
struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A documented API precondition was violated by the caller.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values appeared where finite ones are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A crop step was requested but every retained segment is support.
struct NoCroppableSegments : std::runtime_error {
  NoCroppableSegments() : std::runtime_error("no croppable non-support segment remains") {}
};

// Bad generator or training configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training diverged; carries the last-good checkpoint location.
struct DivergenceError : NumericError {
  DivergenceError(const std::string& msg, std::string checkpoint)
      : NumericError(msg), checkpoint_path(std::move(checkpoint)) {}
  std::string checkpoint_path;
};

}  // namespace cmplab
