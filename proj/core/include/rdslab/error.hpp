#pragma once

#include <stdexcept>
#include <string>

namespace rdslab {

/// Every failure surfaced by the library is an Error carrying a short,
/// stable message prefix ("space mismatch", "degenerate noise", ...) that
/// callers and tests may match on.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rdslab
