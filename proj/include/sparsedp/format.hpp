#pragma once

#include <charconv>
#include <string>

namespace sparsedp {

// Shortest decimal representation that parses back to the same double.
inline std::string shortest(double value) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

}  // namespace sparsedp
