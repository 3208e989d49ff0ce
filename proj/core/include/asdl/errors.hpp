#pragma once

#include <stdexcept>
#include <string>

namespace asdl {

// Configuration problems (bad keys, malformed config files, invalid
// hyper-parameters). The CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Data problems (missing artifacts, malformed inputs, shape mismatches,
// numerical divergence). The CLI maps these to exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace asdl
