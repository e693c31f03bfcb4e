#include <algorithm>

#include <fmt/format.h>

#include "pyxray/archive/archive.hpp"
#include "pyxray/text.hpp"

namespace pyxray::archive {

std::vector<indicator> archive_indicators(const std::optional<cookie_info>& cookie,
                                          const std::vector<std::string>& whole_file_strings) {
    std::vector<indicator> out;
    if (!cookie) return out;
    const auto at = fmt::format("0x{:x}", cookie->offset);
    out.push_back(make_indicator("PYINSTALLER_STRUCTURE_FOUND", at,
                                 fmt::format("{} cookie, Python {}, {} byte package",
                                             cookie->version == cookie_version::v20 ? "legacy" : "modern",
                                             cookie->py_version, cookie->package_length)));
    bool fingerprint = std::any_of(whole_file_strings.begin(), whole_file_strings.end(), [](const std::string& s) {
        return s.find("PyInstaller") != std::string::npos || s.find("pyi_") != std::string::npos;
    });
    if (!fingerprint) {
        out.push_back(make_indicator("FINGERPRINT_STRIPPED", at,
                                     "archive cookie intact but no PyInstaller or pyi_ strings anywhere in the file"));
    }
    sort_by_id(out);
    return out;
}

namespace {

constexpr std::string_view type_codes = "bzZmMsdxolLnpa";
constexpr std::uint32_t max_plausible_entry = toc_entry_header_size + 4096;

// A TOC-shaped record at pos; returns its length.
std::optional<std::uint32_t> plausible_entry(byte_view file, std::uint64_t pos, std::uint64_t limit) {
    if (!fits(limit, pos, toc_entry_header_size)) return std::nullopt;
    std::uint32_t len = load_u32be(file, pos);
    if (len < toc_entry_header_size + 2 || len > max_plausible_entry || (len % 16 != 0 && len % 16 != 2) || !fits(limit, pos, len)) {
        return std::nullopt;
    }
    std::uint8_t flag = file[pos + 16];
    if (flag > 1 || type_codes.find(static_cast<char>(file[pos + 17])) == std::string_view::npos) return std::nullopt;
    std::uint32_t clen = load_u32be(file, pos + 8);
    std::uint32_t ulen = load_u32be(file, pos + 12);
    if (flag == 0 && clen != ulen) return std::nullopt;
    auto name = file.subspan(pos + toc_entry_header_size, len - toc_entry_header_size);
    auto nul = std::find(name.begin(), name.end(), 0);
    if (nul == name.begin() || nul == name.end()) return std::nullopt;
    if (!std::all_of(name.begin(), nul, [](std::uint8_t b) { return b >= 0x20 && b < 0x7F; })) return std::nullopt;
    if (!std::all_of(nul, name.end(), [](std::uint8_t b) { return b == 0; })) return std::nullopt;
    return len;
}

std::size_t chain_length(byte_view file, std::uint64_t pos, std::uint64_t limit) {
    std::size_t n = 0;
    while (auto len = plausible_entry(file, pos, limit)) {
        ++n;
        pos += *len;
    }
    return n;
}

} // namespace

std::optional<mutation_hint> scan_mutated_archive(byte_view file) {
    // cookie-shaped trailer with the magic replaced
    for (std::size_t size : {cookie_size_v21, cookie_size_v20}) {
        if (file.size() < size) continue;
        const std::uint64_t pos = file.size() - size;
        std::uint32_t pkg = load_u32be(file, pos + 8);
        std::uint32_t toc_off = load_u32be(file, pos + 12);
        std::uint32_t toc_len = load_u32be(file, pos + 16);
        if (pkg < size || pkg > file.size() || std::uint64_t{toc_off} + toc_len + size != pkg || toc_len == 0) continue;
        const std::uint64_t toc_at = file.size() - pkg + toc_off;
        std::size_t n = chain_length(file, toc_at, toc_at + toc_len);
        if (n > 0) {
            return mutation_hint{pos, n, fmt::format("cookie-shaped trailer without magic, {} TOC entries", n)};
        }
    }
    for (std::uint64_t pos = 0; pos + toc_entry_header_size <= file.size(); ++pos) {
        if (file[pos] != 0 || file[pos + 1] != 0) continue; // entry lengths stay below 64 KiB
        std::size_t n = chain_length(file, pos, file.size());
        if (n >= mutation_min_chain) {
            return mutation_hint{pos, n, fmt::format("{} chained TOC-shaped records", n)};
        }
    }
    return std::nullopt;
}

} // namespace pyxray::archive
