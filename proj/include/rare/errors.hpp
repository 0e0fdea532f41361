#pragma once

#include <stdexcept>
#include <string>

namespace rare {

// Invalid configuration, flag value, or precondition violation.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/dimension mismatch between tensors or graph components.
struct dim_error : std::runtime_error {
  explicit dim_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file; message carries the file and line number.
struct parse_error : std::runtime_error {
  explicit parse_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or other numeric failure during training.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rare
