#include <algorithm>

#include "pyxray/archive/archive.hpp"
#include "pyxray/text.hpp"

namespace pyxray::archive {

namespace {

struct candidate {
    cookie_info info;
    bool exact = false; // TOC ends right where the cookie starts
};

std::optional<candidate> decode(byte_view file, std::uint64_t pos, cookie_version version) {
    const std::size_t size = version == cookie_version::v20 ? cookie_size_v20 : cookie_size_v21;
    if (!fits(file.size(), pos, size)) return std::nullopt;
    cookie_info c;
    c.offset = pos;
    c.version = version;
    c.package_length = load_u32be(file, pos + 8);
    c.toc_offset = load_u32be(file, pos + 12);
    c.toc_length = load_u32be(file, pos + 16);
    c.py_version = load_u32be(file, pos + 20);
    if (c.package_length < size || c.package_length > c.end()) return std::nullopt;
    if (std::uint64_t{c.toc_offset} + c.toc_length > c.package_length) return std::nullopt;
    if (c.package_start() + c.toc_offset + c.toc_length > c.offset) return std::nullopt;
    if (version == cookie_version::v21_plus) {
        auto lib = file.subspan(pos + 24, 64);
        auto nul = std::find(lib.begin(), lib.end(), 0);
        auto name = lib.first(static_cast<std::size_t>(nul - lib.begin()));
        if (!std::all_of(name.begin(), name.end(), [](std::uint8_t b) { return b >= 0x20 && b < 0x7F; })) {
            return std::nullopt;
        }
        c.library_name = std::string(as_chars(name));
    }
    candidate out{c, std::uint64_t{c.toc_offset} + c.toc_length + size == c.package_length};
    return out;
}

} // namespace

std::optional<pyc::py_version> cookie_info::python_version() const noexcept {
    if (py_version >= 100) return pyc::py_version{static_cast<int>(py_version / 100), static_cast<int>(py_version % 100)};
    if (py_version >= 10) return pyc::py_version{static_cast<int>(py_version / 10), static_cast<int>(py_version % 10)};
    return std::nullopt;
}

std::optional<cookie_info> find_cookie(byte_view file) {
    if (file.size() < cookie_magic.size()) return std::nullopt;
    auto it = file.end();
    while (true) {
        auto found = std::find_end(file.begin(), it, cookie_magic.begin(), cookie_magic.end());
        if (found == it) return std::nullopt;
        const std::uint64_t pos = static_cast<std::uint64_t>(found - file.begin());
        auto modern = decode(file, pos, cookie_version::v21_plus);
        auto legacy = decode(file, pos, cookie_version::v20);
        if (modern && modern->exact) return modern->info;
        if (legacy && legacy->exact) return legacy->info;
        if (modern) return modern->info;
        if (legacy) return legacy->info;
        // implausible fields: keep looking further back
        it = found + static_cast<std::ptrdiff_t>(cookie_magic.size()) - 1;
        if (found == file.begin()) return std::nullopt;
    }
}

} // namespace pyxray::archive
