#pragma once

#include <stdexcept>
#include <string>

namespace rmc {

// Bad arguments, malformed configs, shape mismatches. The CLI maps these to exit 2.
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed or unsupported files (datasets, checkpoints, configs).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw UsageError(msg);
}

}  // namespace rmc
