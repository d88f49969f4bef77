#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace fedst {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes; message names both shapes.
struct DimensionError : Error {
  using Error::Error;
};

/// Invalid configuration value (bad window, bad ratio, unknown key, ...).
struct ConfigError : Error {
  using Error::Error;
};

/// Non-finite values, overflow, or numerically degenerate input.
struct NumericError : Error {
  using Error::Error;
};

/// An all-sentinel softmax row; carries the offending row.
struct DegenerateRowError : NumericError {
  DegenerateRowError(Eigen::Index row_index, const std::string& what)
      : NumericError(what), row(row_index) {}
  Eigen::Index row;
};

/// Misuse of a stateful contract: stale caches, out-of-order messages,
/// indices outside an agreed basis.
struct ProtocolError : Error {
  using Error::Error;
};

/// Malformed input file; message carries the line number where known.
struct IngestError : Error {
  using Error::Error;
};

inline std::string shapeStr(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace fedst
