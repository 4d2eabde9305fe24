#pragma once

#include <stdexcept>
#include <string>

namespace milgan {

/// Shape or dimension mismatch between tensors / sequence channels.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// NaN or Inf produced (or consumed) where finite values are required.
struct NumericalFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dataset, config or checkpoint content is malformed or inconsistent.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Sampling cannot proceed: every candidate entity has been used.
struct VocabExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A storyline is impossible under the policy (zero-probability step).
struct InvalidTrajectory : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace milgan
