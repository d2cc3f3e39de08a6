#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace fdnet::detail {

/// Shortest decimal that round-trips the exact double; locale-free and
/// deterministic, used for every CSV cell the CLI emits.
inline std::string format_double(double v) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

}  // namespace fdnet::detail
