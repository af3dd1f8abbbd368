#pragma once

#include <stdexcept>
#include <string>

namespace mma {

/// Error type thrown by every operation in this library. The message always
/// names the failing operation or file location.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace mma
