#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace csbm {

// Shortest round-trip-stable text for CSV and JSON cells: 12 significant digits, inf/nan spelled out.
std::string format_number(double v);
// Quotes a CSV cell when it contains a comma, quote or newline.
std::string csv_field(std::string_view s);
// 64-bit FNV-1a, printed as 16 hex digits.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace csbm
