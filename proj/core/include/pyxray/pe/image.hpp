#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pyxray/bytes.hpp"
#include "pyxray/indicator.hpp"

namespace pyxray::pe {

enum class pe_errc { not_mz, truncated, bad_pe_signature };

class pe_error : public error {
public:
    pe_error(pe_errc code, const std::string& what) : error(what), code_(code) {}
    pe_errc code() const noexcept { return code_; }

private:
    pe_errc code_;
};

inline constexpr std::uint16_t optional_magic_pe32 = 0x10b;
inline constexpr std::uint16_t optional_magic_pe32_plus = 0x20b;
inline constexpr std::uint16_t dll_dynamic_base = 0x0040;
inline constexpr std::uint32_t scn_initialized_data = 0x00000040;

struct dos_header {
    std::array<std::uint8_t, 64> raw{};
    std::uint32_t e_lfanew = 0;
};

struct coff_header {
    std::uint16_t machine = 0;
    std::uint16_t number_of_sections = 0;
    std::uint32_t time_date_stamp = 0;
    std::uint32_t pointer_to_symbol_table = 0;
    std::uint32_t number_of_symbols = 0;
    std::uint16_t size_of_optional_header = 0;
    std::uint16_t characteristics = 0;
};

struct data_directory {
    std::uint32_t rva = 0;
    std::uint32_t size = 0;
};

struct optional_header {
    std::uint16_t magic = 0;
    std::uint8_t major_linker_version = 0;
    std::uint8_t minor_linker_version = 0;
    std::uint32_t size_of_code = 0;
    std::uint32_t size_of_initialized_data = 0;
    std::uint32_t size_of_uninitialized_data = 0;
    std::uint32_t address_of_entry_point = 0;
    std::uint32_t base_of_code = 0;
    std::uint32_t base_of_data = 0; // PE32 only
    std::uint64_t image_base = 0;
    std::uint32_t section_alignment = 0;
    std::uint32_t file_alignment = 0;
    std::uint16_t major_os_version = 0;
    std::uint16_t minor_os_version = 0;
    std::uint16_t major_image_version = 0;
    std::uint16_t minor_image_version = 0;
    std::uint16_t major_subsystem_version = 0;
    std::uint16_t minor_subsystem_version = 0;
    std::uint32_t win32_version_value = 0;
    std::uint32_t size_of_image = 0;
    std::uint32_t size_of_headers = 0;
    std::uint32_t checksum = 0;
    std::uint16_t subsystem = 0;
    std::uint16_t dll_characteristics = 0;
    std::uint64_t size_of_stack_reserve = 0;
    std::uint64_t size_of_stack_commit = 0;
    std::uint64_t size_of_heap_reserve = 0;
    std::uint64_t size_of_heap_commit = 0;
    std::uint32_t loader_flags = 0;
    std::uint32_t number_of_rva_and_sizes = 0;
    std::vector<data_directory> data_directories;
    // whatever SizeOfOptionalHeader covers beyond the decoded fields
    byte_buffer trailing;

    bool is_pe32_plus() const noexcept { return magic == optional_magic_pe32_plus; }
};

struct section_entry {
    std::array<std::uint8_t, 8> raw_name{};
    std::string name; // trailing NULs stripped, escape_bytes rendering
    std::uint32_t virtual_size = 0;
    std::uint32_t virtual_address = 0;
    std::uint32_t raw_size = 0;
    std::uint32_t raw_offset = 0;
    std::uint32_t pointer_to_relocations = 0;
    std::uint32_t pointer_to_linenumbers = 0;
    std::uint16_t number_of_relocations = 0;
    std::uint16_t number_of_linenumbers = 0;
    std::uint32_t characteristics = 0;

    byte_range raw_range() const noexcept { return {raw_offset, raw_size}; }
};

struct icon_summary {
    std::size_t count = 0;
    std::string sha256; // over the concatenated RT_ICON payloads, empty when count == 0
};

/// A leaf of the RT_VERSION / RT_ICON subtrees.
struct resource_leaf {
    std::uint32_t type_id = 0;
    std::uint32_t name_id = 0; // 0 for string-named entries
    std::uint32_t language_id = 0;
    std::uint32_t data_rva = 0;
    std::uint32_t size = 0;
    std::optional<std::uint64_t> file_offset;
};

struct pe_image {
    dos_header dos;
    byte_buffer dos_stub;   // [64, e_lfanew), stub plus rich region
    byte_range rich_region; // from the DanS anchor (or 0x80) up to e_lfanew
    coff_header coff;
    optional_header optional;
    std::uint64_t checksum_offset = 0;
    std::vector<section_entry> sections;
    std::vector<resource_leaf> resources;
    std::optional<byte_buffer> version_resource;
    icon_summary icons;
    byte_range overlay;
    std::uint64_t file_size = 0;
    std::uint32_t computed_checksum = 0;
    // degraded-but-survivable findings (unreadable resource tree and so on)
    std::vector<std::string> warnings;
};

/// Parses headers, section table and the version/icon resources. Structural
/// damage past the section table degrades fields instead of throwing.
pe_image parse_pe(byte_view file);

/// Headers re-encoded from the parsed fields: DOS header, stub, signature,
/// COFF, optional header and section table.
byte_buffer serialize_headers(const pe_image& image);

/// Standard word-sum checksum. Files that do not parse as PE are summed with
/// no field skipped.
std::uint32_t compute_pe_checksum(byte_view file);
std::uint32_t compute_pe_checksum(byte_view file, std::uint64_t checksum_offset);

enum class checksum_status { match, mismatch, absent };
checksum_status verify_checksum(const pe_image& image);

struct rich_entry {
    std::uint16_t product_id = 0;
    std::uint16_t build_id = 0;
    std::uint32_t count = 0;
    bool operator==(const rich_entry&) const = default;
};

struct rich_header {
    bool present = false;
    std::uint32_t xor_key = 0;
    std::vector<rich_entry> entries;
    bool region_is_zeroed = false;
    std::uint64_t offset = 0; // of the DanS anchor when present
    std::optional<std::uint32_t> computed_key;
};

rich_header parse_rich_header(const pe_image& image);

struct fixed_version {
    std::array<std::uint16_t, 4> file_version{};
    std::array<std::uint16_t, 4> product_version{};
};

struct version_info {
    bool exists = false;
    std::optional<fixed_version> fixed;
    std::vector<std::pair<std::string, std::string>> strings;

    const std::string* find(std::string_view key) const noexcept;
};

version_info parse_version_info(const pe_image& image);

std::vector<indicator> pe_indicators(const pe_image& image, const rich_header& rich, const version_info& version);

std::string format_version(const std::array<std::uint16_t, 4>& v);

} // namespace pyxray::pe
