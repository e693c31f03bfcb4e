#include <algorithm>
#include <bit>

#include "pyxray/pe/image.hpp"

namespace pyxray::pe {

namespace {

constexpr std::uint32_t dans_marker = 0x536E6144; // "DanS"

std::uint8_t byte_at(const pe_image& img, std::size_t offset) {
    if (offset < img.dos.raw.size()) return img.dos.raw[offset];
    return img.dos_stub.at(offset - img.dos.raw.size());
}

std::uint32_t dword_at(const pe_image& img, std::size_t offset) {
    return static_cast<std::uint32_t>(byte_at(img, offset)) | (static_cast<std::uint32_t>(byte_at(img, offset + 1)) << 8) |
           (static_cast<std::uint32_t>(byte_at(img, offset + 2)) << 16) |
           (static_cast<std::uint32_t>(byte_at(img, offset + 3)) << 24);
}

} // namespace

rich_header parse_rich_header(const pe_image& img) {
    rich_header out;
    const std::size_t limit = img.dos.raw.size() + img.dos_stub.size();

    // last "Rich" marker with room for the key behind it
    std::optional<std::size_t> rich_at;
    for (std::size_t off = img.dos.raw.size(); off + 8 <= limit; off += 4) {
        if (byte_at(img, off) == 'R' && byte_at(img, off + 1) == 'i' && byte_at(img, off + 2) == 'c' &&
            byte_at(img, off + 3) == 'h') {
            rich_at = off;
        }
    }

    if (rich_at) {
        const std::uint32_t key = dword_at(img, *rich_at + 4);
        std::optional<std::size_t> dans_at;
        for (std::size_t off = *rich_at; off >= img.dos.raw.size() + 4;) {
            off -= 4;
            if ((dword_at(img, off) ^ key) == dans_marker) {
                dans_at = off;
                break;
            }
        }
        if (dans_at && *dans_at + 16 <= *rich_at && (*rich_at - *dans_at - 16) % 8 == 0) {
            bool pad_ok = true;
            for (std::size_t k = 1; k <= 3; ++k) pad_ok = pad_ok && (dword_at(img, *dans_at + 4 * k) ^ key) == 0;
            if (pad_ok) {
                out.present = true;
                out.xor_key = key;
                out.offset = *dans_at;
                for (std::size_t off = *dans_at + 16; off < *rich_at; off += 8) {
                    std::uint32_t comp = dword_at(img, off) ^ key;
                    std::uint32_t count = dword_at(img, off + 4) ^ key;
                    out.entries.push_back({static_cast<std::uint16_t>(comp >> 16), static_cast<std::uint16_t>(comp), count});
                }
                std::uint32_t csum = static_cast<std::uint32_t>(*dans_at);
                for (std::size_t i = 0; i < *dans_at; ++i) {
                    if (i >= 0x3C && i < 0x40) continue;
                    csum += std::rotl(static_cast<std::uint32_t>(byte_at(img, i)), static_cast<int>(i % 32));
                }
                for (const auto& e : out.entries) {
                    std::uint32_t comp = (static_cast<std::uint32_t>(e.product_id) << 16) | e.build_id;
                    csum += std::rotl(comp, static_cast<int>(e.count % 32));
                }
                out.computed_key = csum;
            }
        }
    }

    if (!out.present && img.rich_region.size >= 8) {
        bool zero = true;
        for (std::uint64_t i = img.rich_region.offset; i < img.rich_region.end() && zero; ++i) {
            zero = byte_at(img, static_cast<std::size_t>(i)) == 0;
        }
        out.region_is_zeroed = zero;
    }
    return out;
}

} // namespace pyxray::pe
