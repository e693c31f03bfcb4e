#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pyxray/bytes.hpp"
#include "pyxray/indicator.hpp"
#include "pyxray/pyc/pyc.hpp"

namespace pyxray::archive {

enum class archive_errc {
    toc_out_of_bounds,
    entry_out_of_bounds,
    inflate_error,
    length_mismatch,
    bad_pyz_magic,
    decompression_bomb,
};

class archive_error : public error {
public:
    archive_error(archive_errc code, const std::string& what) : error(what), code_(code) {}
    archive_errc code() const noexcept { return code_; }

private:
    archive_errc code_;
};

inline constexpr std::array<std::uint8_t, 8> cookie_magic = {'M', 'E', 'I', 014, 013, 012, 013, 016};
inline constexpr std::size_t cookie_size_v20 = 24;
inline constexpr std::size_t cookie_size_v21 = 88;
inline constexpr std::size_t toc_entry_header_size = 18;
inline constexpr std::size_t max_toc_entries = 10'000;
inline constexpr std::uint64_t max_inflated_bytes = 256ull << 20;

enum class cookie_version { v20, v21_plus };

struct cookie_info {
    std::uint64_t offset = 0;
    cookie_version version = cookie_version::v21_plus;
    std::uint32_t package_length = 0;
    std::uint32_t toc_offset = 0;
    std::uint32_t toc_length = 0;
    std::uint32_t py_version = 0; // major*100+minor, or major*10+minor in old writers
    std::string library_name;

    std::size_t size() const noexcept { return version == cookie_version::v20 ? cookie_size_v20 : cookie_size_v21; }
    std::uint64_t end() const noexcept { return offset + size(); }
    // may underflow for hand-built cookies; parse_toc checks
    std::uint64_t package_start() const noexcept { return end() - package_length; }
    std::optional<pyc::py_version> python_version() const noexcept;
};

/// Backward scan for the cookie magic over the whole file. Candidates whose
/// fields are implausible are skipped.
std::optional<cookie_info> find_cookie(byte_view file);

struct toc_entry {
    std::uint32_t entry_length = 0;
    std::uint32_t data_offset = 0; // relative to the package start
    std::uint32_t compressed_length = 0;
    std::uint32_t uncompressed_length = 0;
    bool compressed = false;
    char type_code = 0;
    std::string name; // lossy UTF-8
    byte_buffer raw_name;
    std::uint64_t position = 0; // file offset of the entry record
};

struct toc_listing {
    std::vector<toc_entry> entries;
    std::size_t rejected = 0;
    bool capped = false; // stopped at the entry limit
};

toc_listing parse_toc(byte_view file, const cookie_info& cookie, std::size_t max_entries = max_toc_entries);

/// Shared cap on inflated output across one file's extraction.
class extraction_budget {
public:
    explicit extraction_budget(std::uint64_t max_bytes = max_inflated_bytes) : limit_(max_bytes) {}

    /// Throws decompression_bomb when the charge would cross the limit.
    void charge(std::uint64_t n);
    std::uint64_t used() const noexcept { return used_.load(); }
    std::uint64_t remaining() const noexcept;

private:
    std::uint64_t limit_;
    std::atomic<std::uint64_t> used_{0};
};

/// zlib (RFC 1950) inflate producing at most `max_output` bytes; more than
/// that is decompression_bomb.
byte_buffer inflate_zlib(byte_view stream, std::uint64_t max_output);

byte_buffer extract_entry(byte_view file, const cookie_info& cookie, const toc_entry& entry,
                          extraction_budget* budget = nullptr);

inline constexpr std::array<std::uint8_t, 4> pyz_magic = {'P', 'Y', 'Z', 0};

struct pyz_entry {
    std::int64_t type_code = 0;
    std::uint32_t offset = 0;
    std::uint32_t length = 0;
};

struct pyz_archive {
    std::array<std::uint8_t, 4> magic{};
    pyc::pyc_magic pyc_magic{};
    std::uint32_t toc_offset = 0;
    std::map<std::string, pyz_entry> toc;
    std::size_t rejected = 0; // out-of-blob or malformed TOC rows
};

pyz_archive parse_pyz(byte_view blob);

/// Inflated marshal body of one module (no pyc header).
byte_buffer extract_pyz_module(byte_view blob, const pyz_entry& entry, extraction_budget* budget = nullptr);

/// Cookie present -> PYINSTALLER_STRUCTURE_FOUND, plus FINGERPRINT_STRIPPED
/// when no string mentions PyInstaller or pyi_.
std::vector<indicator> archive_indicators(const std::optional<cookie_info>& cookie,
                                          const std::vector<std::string>& whole_file_strings);

struct mutation_hint {
    std::uint64_t offset = 0;
    std::size_t chained_entries = 0;
    std::string reason;
};

/// Heuristic for archives whose cookie magic was altered: a cookie-shaped
/// trailer, or a run of chained TOC-shaped records.
std::optional<mutation_hint> scan_mutated_archive(byte_view file);

inline constexpr std::size_t mutation_min_chain = 3;

} // namespace pyxray::archive
