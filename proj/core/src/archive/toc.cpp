#include <algorithm>

#include <fmt/format.h>
#include <zlib.h>

#include "pyxray/archive/archive.hpp"
#include "pyxray/text.hpp"

namespace pyxray::archive {

toc_listing parse_toc(byte_view file, const cookie_info& cookie, std::size_t max_entries) {
    const std::uint64_t size = cookie.size();
    if (cookie.package_length < size || cookie.package_length > cookie.end() || cookie.end() > file.size() ||
        std::uint64_t{cookie.toc_offset} + cookie.toc_length > cookie.package_length) {
        throw archive_error(archive_errc::toc_out_of_bounds, "cookie geometry does not fit the file");
    }
    const std::uint64_t start = cookie.package_start() + cookie.toc_offset;
    const std::uint64_t end = start + cookie.toc_length;
    if (end > cookie.offset) {
        throw archive_error(archive_errc::toc_out_of_bounds, "table of contents overlaps the cookie");
    }

    toc_listing out;
    std::uint64_t pos = start;
    while (pos < end) {
        if (out.entries.size() >= max_entries) {
            out.capped = true;
            break;
        }
        if (end - pos < toc_entry_header_size) {
            ++out.rejected;
            break;
        }
        const std::uint32_t length = load_u32be(file, pos);
        if (length < toc_entry_header_size || length > end - pos) {
            // no trustworthy way to find the next record
            ++out.rejected;
            break;
        }
        toc_entry e;
        e.position = pos;
        e.entry_length = length;
        e.data_offset = load_u32be(file, pos + 4);
        e.compressed_length = load_u32be(file, pos + 8);
        e.uncompressed_length = load_u32be(file, pos + 12);
        const std::uint8_t flag = file[pos + 16];
        e.type_code = static_cast<char>(file[pos + 17]);
        auto name_field = file.subspan(pos + toc_entry_header_size, length - toc_entry_header_size);
        auto nul = std::find(name_field.begin(), name_field.end(), 0);
        pos += length;

        bool ok = nul != name_field.end() && flag <= 1;
        e.compressed = flag == 1;
        if (ok && !e.compressed && e.compressed_length != e.uncompressed_length) ok = false;
        if (ok && cookie.package_start() + e.data_offset + e.compressed_length > cookie.offset) ok = false;
        if (!ok) {
            ++out.rejected;
            continue;
        }
        e.raw_name.assign(name_field.begin(), nul);
        e.name = lossy_utf8(e.raw_name);
        out.entries.push_back(std::move(e));
    }
    return out;
}

void extraction_budget::charge(std::uint64_t n) {
    std::uint64_t cur = used_.load();
    do {
        if (n > limit_ || cur > limit_ - n) {
            throw archive_error(archive_errc::decompression_bomb,
                                fmt::format("inflated output would exceed {} bytes", limit_));
        }
    } while (!used_.compare_exchange_weak(cur, cur + n));
}

std::uint64_t extraction_budget::remaining() const noexcept {
    auto u = used_.load();
    return u >= limit_ ? 0 : limit_ - u;
}

byte_buffer inflate_zlib(byte_view stream, std::uint64_t max_output) {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw archive_error(archive_errc::inflate_error, "inflateInit failed");
    struct closer {
        z_stream* s;
        ~closer() { inflateEnd(s); }
    } guard{&zs};

    byte_buffer out;
    std::uint8_t chunk[16384];
    std::size_t fed = 0;
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        if (zs.avail_in == 0 && fed < stream.size()) {
            auto n = std::min<std::size_t>(stream.size() - fed, 1u << 30);
            zs.next_in = const_cast<Bytef*>(stream.data() + fed);
            zs.avail_in = static_cast<uInt>(n);
            fed += n;
        }
        zs.next_out = chunk;
        zs.avail_out = sizeof(chunk);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc == Z_NEED_DICT || rc == Z_DATA_ERROR || rc == Z_MEM_ERROR || rc == Z_STREAM_ERROR) {
            throw archive_error(archive_errc::inflate_error,
                                fmt::format("corrupt zlib stream: {}", zs.msg ? zs.msg : "error"));
        }
        std::size_t produced = sizeof(chunk) - zs.avail_out;
        if (out.size() + produced > max_output) {
            throw archive_error(archive_errc::decompression_bomb,
                                fmt::format("inflated stream exceeds {} bytes", max_output));
        }
        out.insert(out.end(), chunk, chunk + produced);
        if (rc == Z_BUF_ERROR || (rc == Z_OK && produced == 0 && zs.avail_in == 0 && fed == stream.size())) {
            throw archive_error(archive_errc::inflate_error, "zlib stream is truncated");
        }
    }
    return out;
}

byte_buffer extract_entry(byte_view file, const cookie_info& cookie, const toc_entry& entry, extraction_budget* budget) {
    const std::uint64_t at = cookie.package_start() + entry.data_offset;
    if (cookie.package_length > cookie.end() || !fits(file.size(), at, entry.compressed_length)) {
        throw archive_error(archive_errc::entry_out_of_bounds, fmt::format("entry {} lies outside the file", entry.name));
    }
    auto raw = file.subspan(at, entry.compressed_length);
    if (budget) budget->charge(entry.uncompressed_length);
    if (!entry.compressed) {
        if (raw.size() != entry.uncompressed_length) {
            throw archive_error(archive_errc::length_mismatch, fmt::format("entry {} stored size differs", entry.name));
        }
        return byte_buffer(raw.begin(), raw.end());
    }
    byte_buffer out;
    try {
        out = inflate_zlib(raw, std::uint64_t{entry.uncompressed_length});
    } catch (const archive_error& e) {
        if (e.code() != archive_errc::decompression_bomb) throw;
        throw archive_error(archive_errc::length_mismatch,
                            fmt::format("entry {} inflates past its declared {} bytes", entry.name, entry.uncompressed_length));
    }
    if (out.size() != entry.uncompressed_length) {
        throw archive_error(archive_errc::length_mismatch, fmt::format("entry {} inflated to {} bytes, expected {}",
                                                                       entry.name, out.size(), entry.uncompressed_length));
    }
    return out;
}

} // namespace pyxray::archive
