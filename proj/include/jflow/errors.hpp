#pragma once

#include <stdexcept>
#include <string>

namespace jflow {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when an operation needs a positive definite form and gets a
/// degenerate one.
struct NotKahler : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The flow's adaptive step fell below dt_min.
struct StepStalled : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvexityLost : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnsupportedBackend : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace jflow
