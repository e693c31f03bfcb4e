#include "pyxray/pyc/pyc.hpp"

#include <fmt/format.h>

#include "pyxray/text.hpp"

namespace pyxray::pyc {

namespace {

struct magic_range {
    std::uint16_t first;
    std::uint16_t last;
    py_version version;
    std::uint16_t release;
};

constexpr magic_range magic_table[] = {
    {62061, 62131, {2, 5}, 62131}, {62151, 62161, {2, 6}, 62161}, {62171, 62211, {2, 7}, 62211},
    {3000, 3131, {3, 0}, 3131},    {3141, 3151, {3, 1}, 3151},    {3160, 3180, {3, 2}, 3180},
    {3190, 3230, {3, 3}, 3230},    {3250, 3310, {3, 4}, 3310},    {3320, 3351, {3, 5}, 3351},
    {3360, 3379, {3, 6}, 3379},    {3390, 3399, {3, 7}, 3394},    {3400, 3419, {3, 8}, 3413},
    {3420, 3429, {3, 9}, 3425},    {3430, 3449, {3, 10}, 3439},   {3450, 3499, {3, 11}, 3495},
    {3500, 3549, {3, 12}, 3531},   {3550, 3599, {3, 13}, 3571},   {3600, 3649, {3, 14}, 3627},
};

} // namespace

std::optional<py_version> version_for_magic(const pyc_magic& magic) noexcept {
    if (magic[2] != '\r' || magic[3] != '\n') return std::nullopt;
    const std::uint16_t n = static_cast<std::uint16_t>(magic[0] | (magic[1] << 8));
    for (const auto& r : magic_table) {
        if (n >= r.first && n <= r.last) return r.version;
    }
    return std::nullopt;
}

std::optional<pyc_magic> release_magic(py_version v) noexcept {
    for (const auto& r : magic_table) {
        if (r.version == v) {
            return pyc_magic{static_cast<std::uint8_t>(r.release & 0xFF), static_cast<std::uint8_t>(r.release >> 8), '\r', '\n'};
        }
    }
    return std::nullopt;
}

pyc_header parse_pyc_header(byte_view data) {
    if (data.size() < 4) throw pyc_error(pyc_errc::bad_magic, "pyc shorter than its magic");
    pyc_header h;
    std::copy_n(data.begin(), 4, h.magic.begin());
    if (h.magic[2] != '\r' || h.magic[3] != '\n') {
        throw pyc_error(pyc_errc::bad_magic, fmt::format("bad pyc magic {}", hex_encode(h.magic)));
    }
    h.magic_number = static_cast<std::uint16_t>(h.magic[0] | (h.magic[1] << 8));
    h.version = version_for_magic(h.magic);

    // unknown magics are assumed to use the current 16-byte layout
    const bool modern = !h.version || *h.version >= py_version{3, 7};
    const bool has_size = !h.version || *h.version >= py_version{3, 3};
    h.size = modern ? 16 : (has_size ? 12 : 8);
    if (data.size() < h.size) {
        throw pyc_error(pyc_errc::truncated_header, fmt::format("pyc header needs {} bytes, have {}", h.size, data.size()));
    }
    if (modern) {
        h.flags = load_u32le(data, 4);
        if (*h.flags & 1) {
            hash_invalidation hi;
            std::copy_n(data.begin() + 8, 8, hi.hash.begin());
            hi.checked = (*h.flags & 2) != 0;
            h.invalidation = hi;
        } else {
            h.invalidation = timestamp_invalidation{load_u32le(data, 8), load_u32le(data, 12)};
        }
    } else {
        h.invalidation = timestamp_invalidation{load_u32le(data, 4), has_size ? load_u32le(data, 8) : 0u};
    }
    return h;
}

pyc_module parse_pyc(byte_view data) {
    pyc_module m;
    m.header = parse_pyc_header(data);
    if (!m.header.version) {
        throw pyc_error(pyc_errc::bad_magic, fmt::format("unknown pyc magic {}", m.header.magic_number));
    }
    if (!is_supported(*m.header.version)) {
        throw pyc_error(pyc_errc::unsupported_version,
                        fmt::format("pyc for Python {} is outside the supported 3.5-3.11 window", m.header.version->str()));
    }
    marshal_options opt;
    opt.version = m.header.version;
    opt.base_offset = m.header.size;
    auto root = parse_marshal(data.subspan(m.header.size), opt);
    const auto* code = std::get_if<code_ptr>(&root->data);
    if (!code) throw marshal_error(m.header.size, marshal_errc::invalid_value, "pyc body is not a code object");
    m.code = *code;
    return m;
}

byte_buffer synthesize_pyc_header(const pyc_magic& magic) {
    byte_buffer out(magic.begin(), magic.end());
    auto v = version_for_magic(magic);
    std::size_t size = (!v || *v >= py_version{3, 7}) ? 16 : (*v >= py_version{3, 3} ? 12 : 8);
    out.resize(size, 0);
    return out;
}

} // namespace pyxray::pyc
