#pragma once

#include <stdexcept>
#include <string>

namespace pinch {

// Shape, domain, or precondition violation on a library call.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad experiment configuration: unknown key, unparsable or out-of-range value.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Optimization produced a non-finite value.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint, corpus, or metrics file problem.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pinch
