#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fcurve::text {

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char sep);
/// Splits on runs of spaces and tabs.
std::vector<std::string_view> tokens(std::string_view s);
std::string_view trim(std::string_view s);

/// SHA-256 hex digest.
std::string sha256_hex(std::string_view bytes);

}  // namespace fcurve::text
