#include <algorithm>

#include <fmt/format.h>

#include "pyxray/pe/image.hpp"

namespace pyxray::pe {

namespace {

std::string section_label(std::size_t i, const section_entry& s) { return fmt::format("section[{}] {}", i, s.name); }

} // namespace

std::vector<indicator> pe_indicators(const pe_image& image, const rich_header& rich, const version_info&) {
    std::vector<indicator> out;
    const auto& opt = image.optional;

    if (rich.region_is_zeroed) {
        out.push_back(make_indicator("RICH_HEADER_ZEROED", fmt::format("0x{:x}", image.rich_region.offset),
                                     fmt::format("{} zero bytes between DOS stub and PE signature", image.rich_region.size)));
    }

    bool r_prefix = false;
    for (std::size_t i = 0; i < image.sections.size(); ++i) {
        const auto& s = image.sections[i];
        if (s.name == ".bss" && s.raw_size > 0 && (s.characteristics & scn_initialized_data)) {
            out.push_back(make_indicator("SECTION_BSS_WITH_RAW_DATA", section_label(i, s),
                                         fmt::format(".bss holds {} bytes of initialized raw data", s.raw_size)));
        }
        if (!r_prefix && s.raw_name[0] == '_' && s.raw_name[1] == 'R') {
            r_prefix = true;
            out.push_back(make_indicator("SECTION_R_PREFIX_NAME", section_label(i, s),
                                         fmt::format("section named {}", s.name)));
        }
    }

    const bool aslr = (opt.dll_characteristics & dll_dynamic_base) != 0;
    if (!aslr) {
        out.push_back(make_indicator("ASLR_DISABLED", "optional_header.dll_characteristics",
                                     fmt::format("DllCharacteristics 0x{:04x} lacks DYNAMIC_BASE", opt.dll_characteristics)));
    }
    if ((!opt.is_pe32_plus() && opt.image_base == 0x00400000) ||
        (opt.is_pe32_plus() && opt.image_base == 0x140000000ull && !aslr)) {
        out.push_back(make_indicator("DEFAULT_IMAGE_BASE", "optional_header.image_base",
                                     fmt::format("image base 0x{:x}", opt.image_base)));
    }

    const auto cs_location = fmt::format("0x{:x}", image.checksum_offset);
    switch (verify_checksum(image)) {
    case checksum_status::mismatch:
        out.push_back(make_indicator("CHECKSUM_MISMATCH", cs_location,
                                     fmt::format("stored 0x{:08x}, computed 0x{:08x}", opt.checksum, image.computed_checksum)));
        break;
    case checksum_status::match:
        out.push_back(make_indicator("CHECKSUM_FRESHLY_VALID", cs_location,
                                     fmt::format("stored checksum 0x{:08x} is valid", opt.checksum)));
        break;
    case checksum_status::absent:
        break;
    }

    if (opt.major_image_version == 5 && opt.minor_image_version == 2 &&
        (opt.major_os_version >= 6 || opt.major_subsystem_version >= 6)) {
        out.push_back(make_indicator("IMAGE_VERSION_UNUSUAL", "optional_header.image_version",
                                     fmt::format("image version 5.2 with OS version {}.{}", opt.major_os_version,
                                                 opt.minor_os_version)));
    }

    // raw-layout sanity, empty sections ignored
    std::vector<std::size_t> raw;
    for (std::size_t i = 0; i < image.sections.size(); ++i) {
        if (image.sections[i].raw_size > 0) raw.push_back(i);
    }
    bool overlap = false;
    for (std::size_t a = 0; a < raw.size() && !overlap; ++a) {
        for (std::size_t b = a + 1; b < raw.size() && !overlap; ++b) {
            auto ra = image.sections[raw[a]].raw_range();
            auto rb = image.sections[raw[b]].raw_range();
            if (ra.offset < rb.end() && rb.offset < ra.end()) {
                overlap = true;
                out.push_back(make_indicator("SECTION_OVERLAP", section_label(raw[b], image.sections[raw[b]]),
                                             fmt::format("raw data overlaps {}", image.sections[raw[a]].name)));
            }
        }
    }
    for (std::size_t k = 1; k < raw.size(); ++k) {
        if (image.sections[raw[k]].raw_offset < image.sections[raw[k - 1]].raw_offset) {
            out.push_back(make_indicator("SECTION_ORDER_ANOMALY", section_label(raw[k], image.sections[raw[k]]),
                                         "raw offset precedes the previous section's"));
            break;
        }
    }
    for (std::size_t i : raw) {
        const auto& s = image.sections[i];
        if (!fits(image.file_size, s.raw_offset, s.raw_size)) {
            out.push_back(make_indicator("SECTION_DATA_TRUNCATED", section_label(i, s),
                                         fmt::format("raw data ends at 0x{:x}, file is {} bytes", s.raw_range().end(),
                                                     image.file_size)));
            break;
        }
    }

    sort_by_id(out);
    return out;
}

} // namespace pyxray::pe
