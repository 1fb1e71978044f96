#pragma once

#include <string_view>

#include <json.hpp>

namespace memore::toml {

/// Parses the TOML subset used by service configs into a JSON tree:
/// tables, arrays of tables, dotted and quoted keys, basic and literal
/// strings, integers, floats, booleans, arrays and inline tables.
/// Dates and multi-line strings are not supported.
/// Throws Error(InvalidConfig) with the line number on malformed input.
nlohmann::json parse(std::string_view text);

}  // namespace memore::toml
