#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

// Contract checks. Violated preconditions throw std::invalid_argument,
// I/O and environment failures throw std::runtime_error; the CLI maps
// both to nonzero exit codes.
#define TTC_REQUIRE(cond, msg)                   \
  do {                                           \
    if (!(cond)) {                               \
      std::ostringstream oss_;                   \
      oss_ << msg;                               \
      throw std::invalid_argument(oss_.str());   \
    }                                            \
  } while (0)

#define TTC_REQUIRE_IO(cond, msg)                \
  do {                                           \
    if (!(cond)) {                               \
      std::ostringstream oss_;                   \
      oss_ << msg;                               \
      throw std::runtime_error(oss_.str());      \
    }                                            \
  } while (0)

namespace ttc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ttc
