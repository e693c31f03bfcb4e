#include <algorithm>
#include <cstring>

#include <fmt/format.h>

#include "pyxray/digest.hpp"
#include "pyxray/pe/image.hpp"
#include "pyxray/text.hpp"

namespace pyxray::pe {

namespace {

constexpr std::size_t dos_size = 64;
constexpr std::size_t coff_size = 20;
constexpr std::size_t section_header_size = 40;
constexpr std::size_t fixed_pe32 = 96;
constexpr std::size_t fixed_pe32_plus = 112;
constexpr std::uint32_t rt_icon = 3;
constexpr std::uint32_t rt_version = 16;
constexpr std::size_t max_dir_entries = 4096;
constexpr std::size_t max_leaves = 4096;

[[noreturn]] void truncated(std::string_view what) {
    throw pe_error(pe_errc::truncated, fmt::format("truncated PE: {} extends past end of file", what));
}

optional_header read_optional(byte_view blob) {
    optional_header h;
    byte_reader r(blob);
    h.magic = r.u16le();
    h.major_linker_version = r.u8();
    h.minor_linker_version = r.u8();
    h.size_of_code = r.u32le();
    h.size_of_initialized_data = r.u32le();
    h.size_of_uninitialized_data = r.u32le();
    h.address_of_entry_point = r.u32le();
    h.base_of_code = r.u32le();
    bool plus = h.is_pe32_plus();
    if (plus) {
        h.image_base = r.u64le();
    } else {
        h.base_of_data = r.u32le();
        h.image_base = r.u32le();
    }
    h.section_alignment = r.u32le();
    h.file_alignment = r.u32le();
    h.major_os_version = r.u16le();
    h.minor_os_version = r.u16le();
    h.major_image_version = r.u16le();
    h.minor_image_version = r.u16le();
    h.major_subsystem_version = r.u16le();
    h.minor_subsystem_version = r.u16le();
    h.win32_version_value = r.u32le();
    h.size_of_image = r.u32le();
    h.size_of_headers = r.u32le();
    h.checksum = r.u32le();
    h.subsystem = r.u16le();
    h.dll_characteristics = r.u16le();
    if (plus) {
        h.size_of_stack_reserve = r.u64le();
        h.size_of_stack_commit = r.u64le();
        h.size_of_heap_reserve = r.u64le();
        h.size_of_heap_commit = r.u64le();
    } else {
        h.size_of_stack_reserve = r.u32le();
        h.size_of_stack_commit = r.u32le();
        h.size_of_heap_reserve = r.u32le();
        h.size_of_heap_commit = r.u32le();
    }
    h.loader_flags = r.u32le();
    h.number_of_rva_and_sizes = r.u32le();
    std::size_t dirs = std::min<std::size_t>(h.number_of_rva_and_sizes, r.remaining() / 8);
    for (std::size_t i = 0; i < dirs; ++i) {
        data_directory d;
        d.rva = r.u32le();
        d.size = r.u32le();
        h.data_directories.push_back(d);
    }
    auto rest = r.bytes(r.remaining());
    h.trailing.assign(rest.begin(), rest.end());
    return h;
}

std::optional<std::uint64_t> rva_to_offset(const pe_image& img, std::uint32_t rva) {
    for (const auto& s : img.sections) {
        std::uint64_t span = std::max(s.virtual_size, s.raw_size);
        if (rva >= s.virtual_address && rva < std::uint64_t{s.virtual_address} + span) {
            std::uint64_t delta = rva - s.virtual_address;
            if (delta >= s.raw_size) return std::nullopt;
            std::uint64_t off = std::uint64_t{s.raw_offset} + delta;
            if (off >= img.file_size) return std::nullopt;
            return off;
        }
    }
    if (rva < img.optional.size_of_headers && rva < img.file_size) return rva;
    return std::nullopt;
}

struct dir_entry {
    bool named = false;
    std::uint32_t id = 0;
    bool subdir = false;
    std::uint32_t target = 0;
};

std::vector<dir_entry> read_directory(byte_view file, std::uint64_t base, std::uint64_t rsrc_end, std::uint32_t rel) {
    std::uint64_t at = base + rel;
    if (!fits(rsrc_end, at, 16)) throw bounds_error(at, 16, rsrc_end);
    std::size_t named = load_u16le(file, at + 12);
    std::size_t ids = load_u16le(file, at + 14);
    std::size_t count = named + ids;
    if (count > max_dir_entries || !fits(rsrc_end, at + 16, count * 8)) {
        throw bounds_error(at + 16, count * 8, rsrc_end);
    }
    std::vector<dir_entry> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t name = load_u32le(file, at + 16 + i * 8);
        std::uint32_t target = load_u32le(file, at + 20 + i * 8);
        dir_entry e;
        e.named = (name & 0x80000000u) != 0;
        e.id = e.named ? 0 : name;
        e.subdir = (target & 0x80000000u) != 0;
        e.target = target & 0x7FFFFFFFu;
        out.push_back(e);
    }
    return out;
}

void read_resources(byte_view file, pe_image& img) {
    if (img.optional.data_directories.size() < 3) return;
    const auto dir = img.optional.data_directories[2];
    if (dir.rva == 0 || dir.size == 0) return;
    auto base = rva_to_offset(img, dir.rva);
    if (!base) {
        img.warnings.push_back("resource directory does not map into the file");
        return;
    }
    std::uint64_t end = std::min<std::uint64_t>(file.size(), *base + dir.size);
    // the data entries may sit past the directory's declared size; bound by file
    std::uint64_t data_end = file.size();
    try {
        for (const auto& type : read_directory(file, *base, end, 0)) {
            if (type.named || !type.subdir || (type.id != rt_icon && type.id != rt_version)) continue;
            for (const auto& name : read_directory(file, *base, end, type.target)) {
                if (!name.subdir) continue;
                for (const auto& lang : read_directory(file, *base, end, name.target)) {
                    if (lang.subdir) continue;
                    std::uint64_t at = *base + lang.target;
                    if (!fits(end, at, 16)) throw bounds_error(at, 16, end);
                    resource_leaf leaf;
                    leaf.type_id = type.id;
                    leaf.name_id = name.id;
                    leaf.language_id = lang.id;
                    leaf.data_rva = load_u32le(file, at);
                    leaf.size = load_u32le(file, at + 4);
                    leaf.file_offset = rva_to_offset(img, leaf.data_rva);
                    if (leaf.file_offset && !fits(data_end, *leaf.file_offset, leaf.size)) leaf.file_offset.reset();
                    img.resources.push_back(leaf);
                    if (img.resources.size() > max_leaves) throw bounds_error(at, 0, end);
                }
            }
        }
    } catch (const bounds_error&) {
        img.warnings.push_back("resource directory is malformed");
    }

    byte_buffer icon_bytes;
    for (const auto& leaf : img.resources) {
        if (!leaf.file_offset) continue;
        auto payload = file.subspan(*leaf.file_offset, leaf.size);
        if (leaf.type_id == rt_icon) {
            ++img.icons.count;
            icon_bytes.insert(icon_bytes.end(), payload.begin(), payload.end());
        } else if (leaf.type_id == rt_version && !img.version_resource) {
            img.version_resource = byte_buffer(payload.begin(), payload.end());
        }
    }
    if (img.icons.count > 0) img.icons.sha256 = sha256_hex(icon_bytes);
}

} // namespace

pe_image parse_pe(byte_view file) {
    if (file.size() < 2 || file[0] != 'M' || file[1] != 'Z') {
        throw pe_error(pe_errc::not_mz, "not a PE file: missing MZ signature");
    }
    if (file.size() < dos_size) truncated("DOS header");

    pe_image img;
    img.file_size = file.size();
    std::memcpy(img.dos.raw.data(), file.data(), dos_size);
    img.dos.e_lfanew = load_u32le(file, 0x3C);
    const std::uint64_t pe_off = img.dos.e_lfanew;
    if (!fits(file.size(), pe_off, 4 + coff_size)) truncated("PE signature and COFF header");
    if (std::memcmp(file.data() + pe_off, "PE\0\0", 4) != 0) {
        throw pe_error(pe_errc::bad_pe_signature, "missing PE\\0\\0 signature at e_lfanew");
    }
    if (pe_off > dos_size) img.dos_stub.assign(file.begin() + dos_size, file.begin() + static_cast<std::ptrdiff_t>(pe_off));
    if (pe_off > 0x80) img.rich_region = {0x80, pe_off - 0x80};
    else img.rich_region = {std::min<std::uint64_t>(pe_off, 0x80), 0};

    byte_reader coff(file, pe_off + 4);
    img.coff.machine = coff.u16le();
    img.coff.number_of_sections = coff.u16le();
    img.coff.time_date_stamp = coff.u32le();
    img.coff.pointer_to_symbol_table = coff.u32le();
    img.coff.number_of_symbols = coff.u32le();
    img.coff.size_of_optional_header = coff.u16le();
    img.coff.characteristics = coff.u16le();

    const std::uint64_t opt_off = pe_off + 4 + coff_size;
    const std::size_t opt_size = img.coff.size_of_optional_header;
    if (!fits(file.size(), opt_off, std::max<std::size_t>(opt_size, 2))) truncated("optional header");
    std::uint16_t magic = load_u16le(file, opt_off);
    if (magic != optional_magic_pe32 && magic != optional_magic_pe32_plus) {
        throw pe_error(pe_errc::bad_pe_signature, fmt::format("unknown optional header magic 0x{:x}", magic));
    }
    if (opt_size < (magic == optional_magic_pe32_plus ? fixed_pe32_plus : fixed_pe32)) {
        truncated("optional header (SizeOfOptionalHeader too small)");
    }
    img.optional = read_optional(file.subspan(opt_off, opt_size));
    img.checksum_offset = opt_off + 64;

    const std::uint64_t sec_off = opt_off + opt_size;
    const std::uint64_t sec_bytes = std::uint64_t{img.coff.number_of_sections} * section_header_size;
    if (!fits(file.size(), sec_off, sec_bytes)) truncated("section table");
    byte_reader sr(file, sec_off);
    for (std::size_t i = 0; i < img.coff.number_of_sections; ++i) {
        section_entry s;
        auto name = sr.bytes(8);
        std::copy(name.begin(), name.end(), s.raw_name.begin());
        std::size_t len = 8;
        while (len > 0 && s.raw_name[len - 1] == 0) --len;
        s.name = escape_bytes(byte_view(s.raw_name.data(), len));
        s.virtual_size = sr.u32le();
        s.virtual_address = sr.u32le();
        s.raw_size = sr.u32le();
        s.raw_offset = sr.u32le();
        s.pointer_to_relocations = sr.u32le();
        s.pointer_to_linenumbers = sr.u32le();
        s.number_of_relocations = sr.u16le();
        s.number_of_linenumbers = sr.u16le();
        s.characteristics = sr.u32le();
        img.sections.push_back(s);
    }

    std::uint64_t overlay_start = 0;
    bool any_raw = false;
    for (const auto& s : img.sections) {
        if (s.raw_size == 0) continue;
        any_raw = true;
        overlay_start = std::max(overlay_start, s.raw_range().end());
    }
    if (!any_raw) overlay_start = sec_off + sec_bytes;
    overlay_start = std::min<std::uint64_t>(overlay_start, file.size());
    img.overlay = {overlay_start, file.size() - overlay_start};

    img.computed_checksum = compute_pe_checksum(file, img.checksum_offset);
    read_resources(file, img);
    return img;
}

byte_buffer serialize_headers(const pe_image& img) {
    byte_buffer out(img.dos.raw.begin(), img.dos.raw.end());
    out.insert(out.end(), img.dos_stub.begin(), img.dos_stub.end());
    out.resize(img.dos.e_lfanew);
    for (char c : {'P', 'E', '\0', '\0'}) out.push_back(static_cast<std::uint8_t>(c));

    const auto& c = img.coff;
    store_u16le(out, c.machine);
    store_u16le(out, c.number_of_sections);
    store_u32le(out, c.time_date_stamp);
    store_u32le(out, c.pointer_to_symbol_table);
    store_u32le(out, c.number_of_symbols);
    store_u16le(out, c.size_of_optional_header);
    store_u16le(out, c.characteristics);

    const auto& h = img.optional;
    const bool plus = h.is_pe32_plus();
    store_u16le(out, h.magic);
    out.push_back(h.major_linker_version);
    out.push_back(h.minor_linker_version);
    store_u32le(out, h.size_of_code);
    store_u32le(out, h.size_of_initialized_data);
    store_u32le(out, h.size_of_uninitialized_data);
    store_u32le(out, h.address_of_entry_point);
    store_u32le(out, h.base_of_code);
    if (plus) {
        store_u64le(out, h.image_base);
    } else {
        store_u32le(out, h.base_of_data);
        store_u32le(out, static_cast<std::uint32_t>(h.image_base));
    }
    store_u32le(out, h.section_alignment);
    store_u32le(out, h.file_alignment);
    for (auto v : {h.major_os_version, h.minor_os_version, h.major_image_version, h.minor_image_version,
                   h.major_subsystem_version, h.minor_subsystem_version}) {
        store_u16le(out, v);
    }
    store_u32le(out, h.win32_version_value);
    store_u32le(out, h.size_of_image);
    store_u32le(out, h.size_of_headers);
    store_u32le(out, h.checksum);
    store_u16le(out, h.subsystem);
    store_u16le(out, h.dll_characteristics);
    for (auto v : {h.size_of_stack_reserve, h.size_of_stack_commit, h.size_of_heap_reserve, h.size_of_heap_commit}) {
        if (plus) store_u64le(out, v);
        else store_u32le(out, static_cast<std::uint32_t>(v));
    }
    store_u32le(out, h.loader_flags);
    store_u32le(out, h.number_of_rva_and_sizes);
    for (const auto& d : h.data_directories) {
        store_u32le(out, d.rva);
        store_u32le(out, d.size);
    }
    out.insert(out.end(), h.trailing.begin(), h.trailing.end());

    for (const auto& s : img.sections) {
        out.insert(out.end(), s.raw_name.begin(), s.raw_name.end());
        store_u32le(out, s.virtual_size);
        store_u32le(out, s.virtual_address);
        store_u32le(out, s.raw_size);
        store_u32le(out, s.raw_offset);
        store_u32le(out, s.pointer_to_relocations);
        store_u32le(out, s.pointer_to_linenumbers);
        store_u16le(out, s.number_of_relocations);
        store_u16le(out, s.number_of_linenumbers);
        store_u32le(out, s.characteristics);
    }
    return out;
}

std::uint32_t compute_pe_checksum(byte_view file, std::uint64_t checksum_offset) {
    std::uint64_t sum = 0;
    const std::size_t n = file.size();
    for (std::size_t i = 0; i < n; i += 2) {
        if (i == checksum_offset || i == checksum_offset + 2) continue;
        std::uint32_t word = file[i];
        if (i + 1 < n) word |= static_cast<std::uint32_t>(file[i + 1]) << 8;
        sum += word;
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    sum = (sum & 0xFFFF) + (sum >> 16);
    return static_cast<std::uint32_t>(sum + n);
}

std::uint32_t compute_pe_checksum(byte_view file) {
    std::uint64_t skip = ~std::uint64_t{0};
    if (file.size() >= dos_size && file[0] == 'M' && file[1] == 'Z') {
        std::uint64_t pe_off = load_u32le(file, 0x3C);
        if (fits(file.size(), pe_off, 4 + coff_size + 68) && std::memcmp(file.data() + pe_off, "PE\0\0", 4) == 0) {
            skip = pe_off + 4 + coff_size + 64;
        }
    }
    return compute_pe_checksum(file, skip);
}

checksum_status verify_checksum(const pe_image& image) {
    if (image.optional.checksum == 0) return checksum_status::absent;
    return image.optional.checksum == image.computed_checksum ? checksum_status::match : checksum_status::mismatch;
}

std::string format_version(const std::array<std::uint16_t, 4>& v) {
    return fmt::format("{}.{}.{}.{}", v[0], v[1], v[2], v[3]);
}

} // namespace pyxray::pe
