#pragma once

#include <stdexcept>
#include <string>

namespace ccnn {

// Bad shapes, widths or hyperparameters supplied by the caller.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API called in the wrong order or with stale state (e.g. backward without forward).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf encountered in a value that must stay finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset content violates its contract (labels outside {0,1}, missing classes, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file: IDX, CSV or checkpoint JSON.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ccnn
