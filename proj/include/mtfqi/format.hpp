#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace mtfqi {

// Shortest decimal string that parses back to the same double. Used wherever
// output must be byte-reproducible (CSV, SVG, file headers).
inline std::string format_double(double value) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

}  // namespace mtfqi
