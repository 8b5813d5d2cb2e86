#pragma once

#include <stdexcept>
#include <string>

namespace pipcfr {

// Shape conflicts between tensor operands. Message always names both shapes.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed input files (CSV, config). Message carries row/column location.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a training loss turns non-finite; carries a JSON snapshot of
// the offending batch so the failure can be reproduced offline.
struct NumericalAbort : std::runtime_error {
  explicit NumericalAbort(const std::string& message, std::string snapshot_json)
      : std::runtime_error(message), snapshot(std::move(snapshot_json)) {}
  std::string snapshot;
};

}  // namespace pipcfr
