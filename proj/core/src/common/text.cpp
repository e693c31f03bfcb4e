#include "pyxray/text.hpp"

#include <algorithm>
#include <cctype>

namespace pyxray {

std::vector<text_run> printable_strings(byte_view data, std::size_t min_length) {
    std::vector<text_run> out;
    std::size_t start = 0;
    std::size_t len = 0;
    auto flush = [&](std::size_t end) {
        if (len >= min_length && len > 0) {
            out.push_back({start, std::string(as_chars(data.subspan(start, end - start)))});
        }
        len = 0;
    };
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::uint8_t b = data[i];
        if ((b >= 0x20 && b <= 0x7E) || b == '\t') {
            if (len == 0) start = i;
            ++len;
        } else {
            flush(i);
        }
    }
    flush(data.size());
    return out;
}

double printable_ratio(byte_view data) noexcept {
    if (data.empty()) return 0.0;
    auto n = std::count_if(data.begin(), data.end(), is_printable);
    return static_cast<double>(n) / static_cast<double>(data.size());
}

namespace {

// Length of the valid UTF-8 sequence starting at i, or 0.
std::size_t utf8_sequence(byte_view d, std::size_t i) noexcept {
    std::uint8_t b = d[i];
    if (b < 0x80) return 1;
    std::size_t n;
    std::uint32_t cp;
    if ((b & 0xE0) == 0xC0) { n = 2; cp = b & 0x1F; }
    else if ((b & 0xF0) == 0xE0) { n = 3; cp = b & 0x0F; }
    else if ((b & 0xF8) == 0xF0) { n = 4; cp = b & 0x07; }
    else return 0;
    if (i + n > d.size()) return 0;
    for (std::size_t k = 1; k < n; ++k) {
        if ((d[i + k] & 0xC0) != 0x80) return 0;
        cp = (cp << 6) | (d[i + k] & 0x3F);
    }
    // overlongs, surrogates, out of range
    if ((n == 2 && cp < 0x80) || (n == 3 && cp < 0x800) || (n == 4 && cp < 0x10000)) return 0;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
    return n;
}

} // namespace

bool is_valid_utf8(byte_view data) noexcept {
    for (std::size_t i = 0; i < data.size();) {
        auto n = utf8_sequence(data, i);
        if (n == 0) return false;
        i += n;
    }
    return true;
}

std::string lossy_utf8(byte_view data) {
    std::string out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size();) {
        auto n = utf8_sequence(data, i);
        if (n == 0) {
            out += "\xEF\xBF\xBD";
            ++i;
        } else {
            out.append(reinterpret_cast<const char*>(data.data() + i), n);
            i += n;
        }
    }
    return out;
}

std::string escape_bytes(byte_view data) {
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size());
    for (auto b : data) {
        if (b == '\\') {
            out += "\\\\";
        } else if (b >= 0x20 && b <= 0x7E) {
            out += static_cast<char>(b);
        } else {
            out += "\\x";
            out += hex[b >> 4];
            out += hex[b & 0xF];
        }
    }
    return out;
}

byte_buffer unescape_bytes(std::string_view text) {
    byte_buffer out;
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\\' && i + 1 < text.size()) {
            if (text[i + 1] == '\\') {
                out.push_back('\\');
                ++i;
                continue;
            }
            if (text[i + 1] == 'x' && i + 3 < text.size() && nibble(text[i + 2]) >= 0 && nibble(text[i + 3]) >= 0) {
                out.push_back(static_cast<std::uint8_t>(nibble(text[i + 2]) * 16 + nibble(text[i + 3])));
                i += 3;
                continue;
            }
        }
        out.push_back(static_cast<std::uint8_t>(text[i]));
    }
    return out;
}

std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool icontains(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return true;
    auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(), [](char a, char b) {
        return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
    });
    return it != haystack.end();
}

bool istarts_with(std::string_view text, std::string_view prefix) {
    return text.size() >= prefix.size() && icontains(text.substr(0, prefix.size()), prefix);
}

std::string hex_encode(byte_view data) {
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data) {
        out += hex[b >> 4];
        out += hex[b & 0xF];
    }
    return out;
}

} // namespace pyxray
