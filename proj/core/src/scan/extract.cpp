#include <fstream>
#include <set>

#include <fmt/format.h>

#include "pyxray/digest.hpp"
#include "pyxray/pyc/pyc.hpp"
#include "pyxray/scan/scan.hpp"
#include "pyxray/text.hpp"

namespace pyxray::scan {

namespace {

constexpr std::size_t max_component = 200;

void write_file(const std::filesystem::path& p, byte_view data) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw error(fmt::format("cannot create {}", p.string()));
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!f) throw error(fmt::format("short write to {}", p.string()));
}

class name_pool {
public:
    explicit name_pool(std::set<std::string> reserved = {}) : used_(std::move(reserved)) {}

    std::string claim(std::string_view raw) {
        auto base = sanitize_entry_name(raw);
        auto candidate = base;
        for (int n = 1; used_.count(candidate); ++n) candidate = fmt::format("{}~{}", base, n);
        used_.insert(candidate);
        return candidate;
    }

private:
    std::set<std::string> used_;
};

std::string tsv_field(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '\t') out += "\\t";
        else if (c == '\n') out += "\\n";
        else if (c == '\r') out += "\\r";
        else if (c == '\\') out += "\\\\";
        else out += c;
    }
    return out;
}

// one per directory: CArchive entries at the top, each PYZ's modules in
// its _extracted directory; paths relative to the top
void write_manifest(const std::filesystem::path& p, const std::vector<extracted_file>& files,
                    std::string_view container) {
    std::string manifest = "path\tname\ttype\tcompressed_size\tsize\tsha256\n";
    for (const auto& f : files) {
        if (f.container != container) continue;
        manifest += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", tsv_field(f.relative_path), tsv_field(f.name),
                                f.type_code ? std::string(1, f.type_code) : std::string("-"), f.compressed_size,
                                f.size, f.sha256);
    }
    write_file(p, as_bytes(manifest));
}

} // namespace

std::string sanitize_entry_name(std::string_view name) {
    std::string out;
    for (char c : name) {
        auto b = static_cast<unsigned char>(c);
        if (c == '/' || c == '\\' || c == ':' || b < 0x20 || b == 0x7f) out += '_';
        else out += c;
    }
    if (out.size() > max_component) out.resize(max_component);
    if (out.find_first_not_of('.') == std::string::npos) out.insert(out.begin(), '_');
    return out;
}

extraction_summary extract_to_directory(byte_view data, const std::filesystem::path& out_dir,
                                        std::uint64_t max_inflated) {
    auto cookie = archive::find_cookie(data);
    if (!cookie) throw no_archive();
    auto listing = archive::parse_toc(data, *cookie);

    std::filesystem::create_directories(out_dir);
    extraction_summary summary;
    archive::extraction_budget budget(max_inflated);
    name_pool top({"manifest.tsv"});

    for (const auto& e : listing.entries) {
        byte_buffer body;
        try {
            body = archive::extract_entry(data, *cookie, e, &budget);
        } catch (const archive::archive_error& err) {
            summary.errors.push_back(fmt::format("{}: {}", e.name, err.what()));
            if (err.code() == archive::archive_errc::decompression_bomb) break;
            continue;
        }
        auto file = top.claim(e.name);
        write_file(out_dir / file, body);
        summary.files.push_back({e.name, file, e.type_code, e.compressed_length, body.size(), sha256_hex(body), ""});

        if (e.type_code != 'z' && e.type_code != 'Z') continue;
        archive::pyz_archive pyz;
        try {
            pyz = archive::parse_pyz(body);
        } catch (const std::exception& err) {
            summary.errors.push_back(fmt::format("{}: {}", e.name, err.what()));
            continue;
        }
        auto dir_name = top.claim(e.name + "_extracted");
        std::filesystem::create_directories(out_dir / dir_name);
        name_pool inner({"manifest.tsv"});
        auto header = pyc::synthesize_pyc_header(pyz.pyc_magic);
        for (const auto& [module, entry] : pyz.toc) {
            byte_buffer code;
            try {
                code = archive::extract_pyz_module(body, entry, &budget);
            } catch (const archive::archive_error& err) {
                summary.errors.push_back(fmt::format("{}/{}: {}", e.name, module, err.what()));
                continue;
            }
            byte_buffer pyc_file = header;
            pyc_file.insert(pyc_file.end(), code.begin(), code.end());
            auto file_name = inner.claim(module + ".pyc");
            write_file(out_dir / dir_name / file_name, pyc_file);
            summary.files.push_back({module, dir_name + "/" + file_name, 0, entry.length, pyc_file.size(),
                                     sha256_hex(pyc_file), dir_name});
        }
        write_manifest(out_dir / dir_name / "manifest.tsv", summary.files, dir_name);
    }

    write_manifest(out_dir / "manifest.tsv", summary.files, "");
    return summary;
}

} // namespace pyxray::scan
