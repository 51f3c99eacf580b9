#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace atnl {

struct KeyValue {
  std::string key;
  std::string value;
};

/// Parse "key = value" lines. '#' starts a comment, blank lines are skipped,
/// surrounding whitespace is trimmed, values may contain internal spaces.
/// Malformed lines raise ConfigError.
std::vector<KeyValue> parse_key_values(const std::string& text);

/// Round-trip-exact decimal form of a double.
std::string format_double(double v);

/// Strict scalar parsers; the key name is only used in error messages.
double parse_double(const std::string& key, const std::string& value);
std::uint64_t parse_uint(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

}  // namespace atnl
