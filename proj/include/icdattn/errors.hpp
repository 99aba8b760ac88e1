#pragma once

#include <stdexcept>
#include <string>

namespace icdattn {

// Bad input data (files, corpora, checkpoints). CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad invocation (flags, parameter ranges). CLI maps this to exit code 1.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace icdattn
