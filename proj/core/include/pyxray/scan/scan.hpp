#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pyxray/archive/archive.hpp"
#include "pyxray/bytes.hpp"
#include "pyxray/report/report.hpp"

namespace pyxray {

std::string_view version_string() noexcept;

namespace scan {

struct scan_options {
    const report::rule_set* rules = nullptr; // built-in defaults when null
    std::size_t max_depth = 3;               // PE > CArchive > PYZ; also the deobfuscation step limit
    std::uint64_t max_inflated = archive::max_inflated_bytes;
};

/// Full pipeline over one input held in memory. Never throws for malformed
/// input; damage shows up as indicators and notes.
report::scan_report scan_bytes(byte_view data, const scan_options& options = {}, std::string path = {});

class no_archive : public error {
public:
    no_archive() : error("no PyInstaller archive found") {}
};

struct extracted_file {
    std::string name;          // as stored in the archive
    std::string relative_path; // under the output directory, '/' separated
    char type_code = 0;
    std::uint64_t compressed_size = 0;
    std::uint64_t size = 0;
    std::string sha256;
    std::string container; // "" for CArchive entries, else the directory holding a PYZ module
};

struct extraction_summary {
    std::vector<extracted_file> files;
    std::vector<std::string> errors;
};

/// Maps an archive entry name to a single safe path component: separators,
/// drive colons and control bytes become '_', dot-only names get a prefix.
std::string sanitize_entry_name(std::string_view name);

/// Writes every CArchive entry plus the modules of nested PYZ archives
/// (as <entry>_extracted/<module>.pyc with a synthesized header) and a
/// manifest.tsv. Throws no_archive when the input has no cookie.
extraction_summary extract_to_directory(byte_view data, const std::filesystem::path& out_dir,
                                        std::uint64_t max_inflated = archive::max_inflated_bytes);

} // namespace scan
} // namespace pyxray
