#include <algorithm>

#include <fmt/format.h>

#include "pyxray/archive/archive.hpp"
#include "pyxray/text.hpp"

namespace pyxray::archive {

namespace {

std::optional<std::string> row_name(const pyc::value_ptr& v) {
    if (const auto* t = v->text()) return *t;
    if (const auto* b = v->bytes()) return lossy_utf8(*b);
    return std::nullopt;
}

std::optional<pyz_entry> row_value(const pyc::value_ptr& v) {
    const auto* seq = v->sequence();
    if (!seq || seq->items.size() != 3) return std::nullopt;
    std::int64_t f[3];
    for (std::size_t i = 0; i < 3; ++i) {
        const auto* n = seq->items[i]->integer();
        bool flag = false;
        if (!n) {
            // old writers store ispkg as a bool
            if (const auto* b = std::get_if<bool>(&seq->items[i]->data); b && i == 0) {
                flag = *b;
            } else {
                return std::nullopt;
            }
        }
        f[i] = n ? *n : static_cast<std::int64_t>(flag);
    }
    if (f[1] < 0 || f[2] < 0 || f[1] > 0xFFFFFFFFll || f[2] > 0xFFFFFFFFll) return std::nullopt;
    return pyz_entry{f[0], static_cast<std::uint32_t>(f[1]), static_cast<std::uint32_t>(f[2])};
}

} // namespace

pyz_archive parse_pyz(byte_view blob) {
    if (blob.size() < 12 || !std::equal(pyz_magic.begin(), pyz_magic.end(), blob.begin())) {
        throw archive_error(archive_errc::bad_pyz_magic, "blob does not start with PYZ\\0");
    }
    pyz_archive out;
    std::copy_n(blob.begin(), 4, out.magic.begin());
    std::copy_n(blob.begin() + 4, 4, out.pyc_magic.begin());
    out.toc_offset = load_u32be(blob, 8);
    if (out.toc_offset >= blob.size()) {
        throw archive_error(archive_errc::toc_out_of_bounds, fmt::format("PYZ TOC offset {} is past the blob", out.toc_offset));
    }

    pyc::marshal_options opt;
    opt.base_offset = out.toc_offset;
    auto toc = pyc::parse_marshal(blob.subspan(out.toc_offset), opt);

    auto add = [&](const pyc::value_ptr& key, const pyc::value_ptr& value) {
        auto name = row_name(key);
        auto entry = row_value(value);
        if (!name || !entry || !fits(blob.size(), entry->offset, entry->length)) {
            ++out.rejected;
            return;
        }
        out.toc.insert_or_assign(*name, *entry);
    };

    if (const auto* seq = toc->sequence(); seq && seq->kind == pyc::sequence_kind::list) {
        for (const auto& row : seq->items) {
            const auto* pair = row->sequence();
            if (!pair || pair->items.size() != 2) {
                ++out.rejected;
                continue;
            }
            add(pair->items[0], pair->items[1]);
        }
    } else if (const auto* dict = std::get_if<pyc::dict_value>(&toc->data)) {
        for (const auto& [k, v] : dict->entries) add(k, v);
    } else {
        throw pyc::marshal_error(out.toc_offset, pyc::marshal_errc::invalid_value, "PYZ TOC is neither a list nor a dict");
    }
    return out;
}

byte_buffer extract_pyz_module(byte_view blob, const pyz_entry& entry, extraction_budget* budget) {
    if (!fits(blob.size(), entry.offset, entry.length)) {
        throw archive_error(archive_errc::entry_out_of_bounds, "PYZ entry lies outside the blob");
    }
    if (entry.length == 0) return {};
    const std::uint64_t cap = budget ? budget->remaining() : max_inflated_bytes;
    auto out = inflate_zlib(blob.subspan(entry.offset, entry.length), cap);
    if (budget) budget->charge(out.size());
    return out;
}

} // namespace pyxray::archive
