#pragma once

#include <stdexcept>
#include <string>

namespace curec {

// Process-level error classes. The CLI maps them onto exit codes:
// ConfigError -> 2, DataError -> 3, NumericError -> 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-fatal diagnostics go to stderr so stdout stays deterministic.
void warn(const std::string& msg);

// SHA-256 hex digest of a byte buffer (frozen-parameter contract checks,
// checkpoint integrity).
std::string sha256_hex(const void* data, size_t len);

}  // namespace curec
