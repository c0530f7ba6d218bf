#pragma once

#include <stdexcept>
#include <string>

namespace pje {

/// Invalid parameters or configuration (CLI exit code 2).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Index or geometric argument outside the admissible range.
struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Grid layout mismatch between fields, boxes or translations.
struct GridError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values, divergence or iteration caps hit.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File system failures (CLI exit code 3).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pje
