#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pyxray/bytes.hpp"

namespace pyxray {

/// A printable ASCII run found in raw bytes.
struct text_run {
    std::uint64_t offset = 0;
    std::string text;
};

/// Printable runs of at least `min_length` characters (the classic `strings`
/// scan: 0x20..0x7E plus tab).
std::vector<text_run> printable_strings(byte_view data, std::size_t min_length = 5);

/// 0x20..0x7E, tab, LF, CR.
constexpr bool is_printable(std::uint8_t b) noexcept {
    return (b >= 0x20 && b <= 0x7E) || b == '\t' || b == '\n' || b == '\r';
}

/// Fraction of printable bytes; 0 for empty input.
double printable_ratio(byte_view data) noexcept;

/// UTF-8 decode with U+FFFD substitution for invalid sequences.
std::string lossy_utf8(byte_view data);

bool is_valid_utf8(byte_view data) noexcept;

/// Printable ASCII passes through; backslash and every other byte become
/// `\\` / `\xNN`, so the rendering can always be reversed.
std::string escape_bytes(byte_view data);
byte_buffer unescape_bytes(std::string_view text);

std::string to_lower_ascii(std::string_view text);
bool icontains(std::string_view haystack, std::string_view needle);
bool istarts_with(std::string_view text, std::string_view prefix);

std::string hex_encode(byte_view data);

} // namespace pyxray
