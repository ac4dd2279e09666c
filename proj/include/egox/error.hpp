#pragma once

#include <stdexcept>
#include <string>

namespace egox {

/// Single exception type for every recoverable failure in the library.
/// Messages are one line so the CLI can forward them unchanged.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace egox
