#pragma once

#include <stdexcept>
#include <string>

namespace wsseg {

/// Malformed or inconsistent input data (files, headers, shapes).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Training produced a non-finite loss or gradient.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace wsseg
