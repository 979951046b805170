#pragma once

#include <stdexcept>
#include <string>

namespace scbench {

// Malformed configuration, spec file or command-line value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, truncated or inconsistent input data (IDX files, weight containers).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scbench
