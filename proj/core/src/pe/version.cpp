#include <optional>

#include "pyxray/pe/image.hpp"

namespace pyxray::pe {

namespace {

constexpr std::uint32_t fixed_signature = 0xFEEF04BD;

struct block {
    std::size_t value_offset = 0;
    std::size_t value_length = 0; // raw field
    std::uint16_t type = 0;
    std::u16string key;
    std::size_t children = 0;
    std::size_t end = 0;
};

std::size_t align4(std::size_t v) { return (v + 3) & ~std::size_t{3}; }

std::optional<block> read_block(byte_view d, std::size_t off, std::size_t limit) {
    if (off + 6 > limit) return std::nullopt;
    std::size_t length = load_u16le(d, off);
    if (length < 6 || off + length > limit) return std::nullopt;
    block b;
    b.end = off + length;
    b.value_length = load_u16le(d, off + 2);
    b.type = load_u16le(d, off + 4);
    std::size_t p = off + 6;
    for (;;) {
        if (p + 2 > b.end) return std::nullopt;
        char16_t c = load_u16le(d, p);
        p += 2;
        if (c == 0) break;
        b.key.push_back(c);
    }
    b.value_offset = align4(p);
    std::size_t value_bytes = b.type == 1 ? b.value_length * 2 : b.value_length;
    b.children = std::min(align4(b.value_offset + value_bytes), b.end);
    if (b.value_offset > b.end) b.value_offset = b.end;
    return b;
}

std::string utf16_to_utf8(std::u16string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::uint32_t cp = s[i];
        if (cp >= 0xD800 && cp <= 0xDBFF && i + 1 < s.size() && s[i + 1] >= 0xDC00 && s[i + 1] <= 0xDFFF) {
            cp = 0x10000 + ((cp - 0xD800) << 10) + (s[i + 1] - 0xDC00);
            ++i;
        } else if (cp >= 0xD800 && cp <= 0xDFFF) {
            cp = 0xFFFD;
        }
        if (cp < 0x80) {
            out += static_cast<char>(cp);
        } else if (cp < 0x800) {
            out += static_cast<char>(0xC0 | (cp >> 6));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        } else if (cp < 0x10000) {
            out += static_cast<char>(0xE0 | (cp >> 12));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        } else {
            out += static_cast<char>(0xF0 | (cp >> 18));
            out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
        }
    }
    return out;
}

template <typename F>
void for_each_child(byte_view d, const block& parent, F&& fn) {
    std::size_t p = parent.children;
    while (p < parent.end) {
        auto child = read_block(d, p, parent.end);
        if (!child) break;
        fn(*child);
        p = align4(child->end);
    }
}

} // namespace

const std::string* version_info::find(std::string_view key) const noexcept {
    for (const auto& [k, v] : strings) {
        if (k == key) return &v;
    }
    return nullptr;
}

version_info parse_version_info(const pe_image& image) {
    version_info out;
    if (!image.version_resource) return out;
    byte_view d(*image.version_resource);
    try {
        auto root = read_block(d, 0, d.size());
        if (!root || root->key != u"VS_VERSION_INFO") return out;
        out.exists = true;
        if (root->value_length >= 52 && root->value_offset + 52 <= root->end &&
            load_u32le(d, root->value_offset) == fixed_signature) {
            auto split = [](std::uint32_t ms, std::uint32_t ls) {
                return std::array<std::uint16_t, 4>{static_cast<std::uint16_t>(ms >> 16), static_cast<std::uint16_t>(ms),
                                                    static_cast<std::uint16_t>(ls >> 16), static_cast<std::uint16_t>(ls)};
            };
            fixed_version f;
            std::size_t v = root->value_offset;
            f.file_version = split(load_u32le(d, v + 8), load_u32le(d, v + 12));
            f.product_version = split(load_u32le(d, v + 16), load_u32le(d, v + 20));
            out.fixed = f;
        }
        for_each_child(d, *root, [&](const block& info) {
            if (info.key != u"StringFileInfo") return;
            for_each_child(d, info, [&](const block& table) {
                for_each_child(d, table, [&](const block& entry) {
                    std::u16string value;
                    for (std::size_t p = entry.value_offset; p + 2 <= entry.end; p += 2) {
                        char16_t c = load_u16le(d, p);
                        if (c == 0) break;
                        value.push_back(c);
                    }
                    out.strings.emplace_back(utf16_to_utf8(entry.key), utf16_to_utf8(value));
                });
            });
        });
    } catch (const bounds_error&) {
        // keep what was decoded before the damage
    }
    return out;
}

} // namespace pyxray::pe
