#include <algorithm>
#include <chrono>
#include <set>

#include <fmt/format.h>

#include "pyxray/archive/archive.hpp"
#include "pyxray/deobf/deobf.hpp"
#include "pyxray/digest.hpp"
#include "pyxray/pe/image.hpp"
#include "pyxray/pyc/analysis.hpp"
#include "pyxray/pyc/pyc.hpp"
#include "pyxray/scan/scan.hpp"
#include "pyxray/text.hpp"

#ifndef PYXRAY_VERSION
#define PYXRAY_VERSION "0.0.0"
#endif

namespace pyxray {

std::string_view version_string() noexcept { return PYXRAY_VERSION; }

namespace scan {

namespace {

constexpr std::size_t min_run = 5;
constexpr std::string_view crypto_key_module = "pyimod00_crypto_key";

bool has_pyc_magic(byte_view data) {
    if (data.size() < 4 || data[2] != '\r' || data[3] != '\n') return false;
    return pyc::version_for_magic({data[0], data[1], data[2], data[3]}).has_value();
}

// what one file's analyzers accumulate before aggregation
struct context {
    const report::rule_set& rules;
    const scan_options& options;
    report::scan_report& out;

    std::vector<std::vector<indicator>> lists;
    std::vector<deobf::text_source> texts;
    std::vector<deobf::blob> raw_blobs;
    report::rule_inputs inputs;
    std::set<std::string> seen_texts;

    void add(indicator ind) { lists.push_back({std::move(ind)}); }
    void add(std::vector<indicator> list) { lists.push_back(std::move(list)); }

    // nesting order, not discovery order
    void chain(std::string_view step) {
        static constexpr std::string_view order[] = {"PE", "CArchive", "PYZ", "pyc"};
        auto rank = [](std::string_view s) { return std::find(std::begin(order), std::end(order), s) - std::begin(order); };
        auto& c = out.format_chain;
        if (std::find(c.begin(), c.end(), step) != c.end()) return;
        auto at = std::find_if(c.begin(), c.end(), [&](const std::string& s) { return rank(s) > rank(step); });
        c.emplace(at, step);
    }

    void text(std::string s, std::string origin) {
        if (!seen_texts.insert(s).second) return;
        inputs.strings.push_back(s);
        texts.push_back({std::move(s), std::move(origin)});
    }
};

void collect_bytes(const pyc::code_object& code, const std::string& where, std::vector<deobf::blob>& out) {
    for (std::size_t i = 0; i < code.consts.size(); ++i) {
        const auto& v = code.consts[i];
        if (!v) continue;
        if (const auto* b = v->bytes(); b && !b->empty()) {
            deobf::blob blob;
            blob.bytes = *b;
            blob.origin = fmt::format("{}/{}:consts[{}]", where, code.name, i);
            out.push_back(std::move(blob));
        } else if (const auto* seq = v->sequence()) {
            for (std::size_t j = 0; j < seq->items.size(); ++j) {
                const auto* inner = seq->items[j] ? seq->items[j]->bytes() : nullptr;
                if (!inner || inner->empty()) continue;
                deobf::blob blob;
                blob.bytes = *inner;
                blob.origin = fmt::format("{}/{}:consts[{}][{}]", where, code.name, i, j);
                out.push_back(std::move(blob));
            }
        }
    }
    for (const auto* child : code.children()) collect_bytes(*child, where + "/" + code.name, out);
}

// full: bytecode indicators as well as strings; otherwise strings and payloads only
void analyze_code(context& ctx, const pyc::code_object& code, const std::string& origin, bool full) {
    ctx.chain("pyc");
    for (auto& s : pyc::harvest_strings(code)) {
        auto where = origin + ":" + s.location;
        if (s.origin == pyc::provenance::name) {
            ctx.inputs.names.push_back(s.text);
            continue;
        }
        ctx.text(std::move(s.text), std::move(where));
    }
    collect_bytes(code, origin, ctx.raw_blobs);
    if (!full) return;
    try {
        auto listings = pyc::disassemble_tree(code, code.version);
        auto found = pyc::bytecode_indicators(code, listings);
        for (auto& ind : found) ind.where.location = origin + ":" + ind.where.location;
        ctx.add(std::move(found));
    } catch (const std::exception& e) {
        ctx.add(make_indicator("PYC_PARSE_ERROR", origin, e.what()));
    }
}

// 's', 'm', 'M' entries: bare marshal in the cookie's version or a full pyc
void analyze_module_blob(context& ctx, byte_view data, std::optional<pyc::py_version> version,
                         const std::string& origin, bool full) {
    try {
        if (has_pyc_magic(data)) {
            auto mod = pyc::parse_pyc(data);
            analyze_code(ctx, *mod.code, origin, full);
            return;
        }
        if (!version || !pyc::is_supported(*version)) {
            ctx.add(make_indicator("PYC_PARSE_ERROR", origin, "no supported interpreter version for bare marshal"));
            return;
        }
        pyc::marshal_options mo;
        mo.version = version;
        auto value = pyc::parse_marshal(data, mo);
        if (const auto* code = value->code()) {
            analyze_code(ctx, *code, origin, full);
        } else {
            ctx.add(make_indicator("PYC_PARSE_ERROR", origin, "marshal stream does not hold a code object"));
        }
    } catch (const std::exception& e) {
        ctx.add(make_indicator("PYC_PARSE_ERROR", origin, e.what()));
    }
}

void analyze_pyz(context& ctx, byte_view blob, const std::string& entry_name, archive::extraction_budget& budget,
                 std::optional<pyc::py_version> cookie_version) {
    ctx.chain("PYZ");
    archive::pyz_archive pyz;
    try {
        pyz = archive::parse_pyz(blob);
    } catch (const std::exception& e) {
        ctx.add(make_indicator("ARCHIVE_EXTRACTION_ERROR", "entry:" + entry_name, e.what()));
        return;
    }
    if (pyz.rejected) {
        ctx.add(make_indicator("ARCHIVE_ENTRY_REJECTED", "entry:" + entry_name,
                               fmt::format("{} malformed PYZ table rows", pyz.rejected)));
    }
    if (pyz.toc.count(std::string(crypto_key_module))) {
        ctx.add(make_indicator("ENCRYPTED_PYZ", "entry:" + entry_name, "archive ships a crypto key module"));
        return;
    }
    auto version = pyc::version_for_magic(pyz.pyc_magic);
    if (!version) version = cookie_version;
    bool encrypted = false;
    for (const auto& [name, entry] : pyz.toc) {
        ctx.inputs.names.push_back(name);
        auto origin = fmt::format("pyz:{}/{}", entry_name, name);
        byte_buffer body;
        try {
            body = archive::extract_pyz_module(blob, entry, &budget);
        } catch (const archive::archive_error& e) {
            if (e.code() == archive::archive_errc::decompression_bomb) throw;
            if (e.code() == archive::archive_errc::inflate_error) {
                encrypted = true;
            } else {
                ctx.add(make_indicator("ARCHIVE_EXTRACTION_ERROR", origin, e.what()));
            }
            continue;
        }
        report::artifact a;
        a.name = name;
        a.kind = "pyz-module";
        a.type_code = 0;
        a.size = body.size();
        a.sha256 = sha256_hex(body);
        a.container = entry_name;
        ctx.out.artifacts.push_back(std::move(a));
        if (ctx.options.max_depth >= 3) analyze_module_blob(ctx, body, version, origin, false);
    }
    if (encrypted) {
        ctx.add(make_indicator("ENCRYPTED_PYZ", "entry:" + entry_name, "module data does not inflate"));
    }
}

void analyze_archive(context& ctx, byte_view data, const archive::cookie_info& cookie) {
    ctx.chain("CArchive");
    auto listing = archive::parse_toc(data, cookie);
    if (listing.rejected) {
        ctx.add(make_indicator("ARCHIVE_ENTRY_REJECTED", fmt::format("0x{:x}", cookie.offset),
                               fmt::format("{} malformed table-of-contents entries", listing.rejected)));
    }
    if (listing.capped) ctx.out.notes.push_back("table of contents truncated at the entry limit");

    archive::extraction_budget budget(ctx.options.max_inflated);
    auto version = cookie.python_version();
    try {
        for (const auto& e : listing.entries) {
            ctx.inputs.names.push_back(e.name);
            auto origin = "entry:" + e.name;
            byte_buffer body;
            try {
                body = archive::extract_entry(data, cookie, e, &budget);
            } catch (const archive::archive_error& err) {
                if (err.code() == archive::archive_errc::decompression_bomb) throw;
                ctx.add(make_indicator("ARCHIVE_EXTRACTION_ERROR", origin, err.what()));
                continue;
            }
            report::artifact a;
            a.name = e.name;
            a.kind = "carchive-entry";
            a.type_code = e.type_code;
            a.size = body.size();
            a.sha256 = sha256_hex(body);
            ctx.out.artifacts.push_back(std::move(a));

            if (ctx.options.max_depth < 2) continue;
            switch (e.type_code) {
            case 's': analyze_module_blob(ctx, body, version, origin, true); break;
            case 'm':
            case 'M': analyze_module_blob(ctx, body, version, origin, false); break;
            case 'z':
            case 'Z': analyze_pyz(ctx, body, e.name, budget, version); break;
            default:
                if (e.compressed) {
                    for (auto& run : printable_strings(body, min_run)) ctx.text(std::move(run.text), origin);
                }
                break;
            }
        }
    } catch (const archive::archive_error& err) {
        ctx.add(make_indicator("DECOMPRESSION_BOMB", fmt::format("0x{:x}", cookie.offset), err.what()));
        ctx.out.notes.push_back("extraction stopped: inflated output limit reached");
    }
}

} // namespace

report::scan_report scan_bytes(byte_view data, const scan_options& options, std::string path) {
    auto started = std::chrono::steady_clock::now();
    const auto& rules = options.rules ? *options.rules : report::rule_set::defaults();

    report::scan_report out;
    context ctx{rules, options, out, {}, {}, {}, {}, {}};
    out.sha256 = sha256_hex(data);
    out.size = data.size();

    bool is_pe = false;
    try {
        auto image = pe::parse_pe(data);
        is_pe = true;
        ctx.chain("PE");
        auto rich = pe::parse_rich_header(image);
        auto ver = pe::parse_version_info(image);
        ctx.add(pe::pe_indicators(image, rich, ver));
        for (const auto& w : image.warnings) out.notes.push_back(w);
    } catch (const pe::pe_error& e) {
        if (e.code() != pe::pe_errc::not_mz) {
            is_pe = true;
            ctx.chain("PE");
            ctx.add(make_indicator("PE_MALFORMED", "0x0", e.what()));
        }
    }

    std::vector<std::string> whole;
    for (auto& run : printable_strings(data, min_run)) whole.push_back(std::move(run.text));

    auto cookie = archive::find_cookie(data);
    bool handled = is_pe;
    if (cookie && options.max_depth >= 1) {
        handled = true;
        auto found = archive::archive_indicators(cookie, whole);
        if (!is_pe) {
            // bare package: no bootloader
            std::erase_if(found, [](const indicator& i) { return i.id == "FINGERPRINT_STRIPPED"; });
        }
        ctx.add(std::move(found));
        analyze_archive(ctx, data, *cookie);
    } else if (!is_pe && has_pyc_magic(data)) {
        handled = true;
        analyze_module_blob(ctx, data, std::nullopt, "pyc", true);
    }
    if (!cookie) {
        if (auto hint = archive::scan_mutated_archive(data)) {
            handled = true;
            ctx.add(make_indicator("POSSIBLE_MUTATED_ARCHIVE", fmt::format("0x{:x}", hint->offset), hint->reason));
        }
    }
    if (!handled) ctx.add(make_indicator("UNRECOGNIZED_FORMAT", "0x0"));

    for (auto& s : whole) ctx.text(std::move(s), "file");

    deobf::unwrap_options uo;
    uo.cribs = rules.cribs;
    uo.xor_search.crib_threshold = rules.xor_crib_ratio;
    uo.xor_search.exhaustive_threshold = rules.xor_exhaustive_ratio;
    uo.min_len = rules.base64_min_length;
    uo.max_steps = std::max<std::size_t>(1, options.max_depth);
    auto unwrapped = deobf::unwrap_payloads(ctx.texts, ctx.raw_blobs, uo);
    ctx.add(deobf::payload_indicators(unwrapped.blobs, unwrapped.recoveries));
    for (const auto& b : unwrapped.blobs) {
        if (b.chain.empty()) continue;
        if (printable_ratio(b.bytes) >= rules.xor_crib_ratio) ctx.inputs.decoded.push_back(lossy_utf8(b.bytes));
    }

    auto hits = report::match_rules(rules, ctx.inputs);
    auto aggregated = report::aggregate(ctx.lists, rules, hits);
    out.indicators = std::move(aggregated.indicators);
    out.score = aggregated.score;
    out.verdict = aggregated.verdict;
    out.path = std::move(path);
    out.tool_version = std::string(version_string());
    out.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return out;
}

} // namespace scan
} // namespace pyxray
