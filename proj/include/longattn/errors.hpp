#pragma once

#include <stdexcept>
#include <string>

namespace longattn {

/// Incompatible extents between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A forward operation produced NaN or Inf from finite inputs.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of the differentiation tape (stale tape, non-scalar loss, ...).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid or unknown configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed, mismatched, or missing checkpoint.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace longattn
