#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace scdr {

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

/// Parses a full string as a double; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view text);

}  // namespace scdr
