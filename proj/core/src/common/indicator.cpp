#include "pyxray/indicator.hpp"

#include <algorithm>

namespace pyxray {

std::string_view to_string(severity s) noexcept {
    switch (s) {
    case severity::info: return "info";
    case severity::low: return "low";
    case severity::medium: return "medium";
    case severity::high: return "high";
    }
    return "info";
}

std::optional<severity> parse_severity(std::string_view text) noexcept {
    if (text == "info") return severity::info;
    if (text == "low") return severity::low;
    if (text == "medium") return severity::medium;
    if (text == "high") return severity::high;
    return std::nullopt;
}

severity severity_for_weight(int weight) noexcept {
    if (weight >= 60) return severity::high;
    if (weight >= 30) return severity::medium;
    if (weight >= 10) return severity::low;
    return severity::info;
}

bool weight_in_band(int weight, severity s) noexcept {
    return weight >= 0 && weight <= 100 && severity_for_weight(weight) == s;
}

std::string_view to_string(source_module m) noexcept {
    switch (m) {
    case source_module::pe: return "pe";
    case source_module::archive: return "archive";
    case source_module::bytecode: return "bytecode";
    case source_module::payload: return "payload";
    case source_module::rules: return "rules";
    case source_module::scan: return "scan";
    }
    return "scan";
}

const std::vector<indicator_kind>& builtin_indicators() {
    using m = source_module;
    static const std::vector<indicator_kind> kinds = {
        {"RICH_HEADER_ZEROED", m::pe, "rich header region is zero-filled", "binary patch: rich header removed"},
        {"SECTION_BSS_WITH_RAW_DATA", m::pe, "section named .bss carries initialized raw data",
         "binary patch: _RDATA section renamed to .bss"},
        {"SECTION_R_PREFIX_NAME", m::pe, "section name starts with _R", ""},
        {"ASLR_DISABLED", m::pe, "dynamic-base bit clear in DllCharacteristics", "linker flag: /DYNAMICBASE:NO"},
        {"DEFAULT_IMAGE_BASE", m::pe, "image base is the classic default", "linker flag: /BASE:0x00400000"},
        {"CHECKSUM_MISMATCH", m::pe, "stored PE checksum does not match the file", ""},
        {"CHECKSUM_FRESHLY_VALID", m::pe, "stored PE checksum is set and valid",
         "binary patch: PE checksum recalculated"},
        {"IMAGE_VERSION_UNUSUAL", m::pe, "image version 5.2 on a modern-subsystem binary", "linker flag: /VERSION:5.2"},
        {"SECTION_OVERLAP", m::pe, "section raw ranges overlap", ""},
        {"SECTION_ORDER_ANOMALY", m::pe, "section raw offsets are out of order", ""},
        {"SECTION_DATA_TRUNCATED", m::pe, "section raw data extends past end of file", ""},
        {"PE_MALFORMED", m::pe, "PE headers could not be parsed", ""},
        {"PYINSTALLER_STRUCTURE_FOUND", m::archive, "PyInstaller archive cookie present", ""},
        {"FINGERPRINT_STRIPPED", m::archive, "archive present but PyInstaller strings are gone",
         "bootloader patch: PyInstaller and pyi_ references renamed"},
        {"POSSIBLE_MUTATED_ARCHIVE", m::archive, "archive-like table of contents without a cookie", ""},
        {"DECOMPRESSION_BOMB", m::archive, "extraction limits exceeded", ""},
        {"ENCRYPTED_PYZ", m::archive, "PYZ modules are encrypted; skipped", ""},
        {"ARCHIVE_ENTRY_REJECTED", m::archive, "table of contents holds malformed entries", ""},
        {"ARCHIVE_EXTRACTION_ERROR", m::archive, "an archive entry failed to extract", ""},
        {"EXEC_DYNAMIC", m::bytecode, "dynamic code execution (exec/eval/compile)", ""},
        {"SUBPROCESS_USE", m::bytecode, "process spawning via subprocess or os", ""},
        {"LARGE_BYTES_CONST", m::bytecode, "large byte-string constant", ""},
        {"DECODE_CHAIN", m::bytecode, "base64 decoding combined with an XOR loop",
         "payload obfuscation: XOR with key, then base64"},
        {"PYC_PARSE_ERROR", m::bytecode, "compiled module could not be parsed", ""},
        {"UNKNOWN_OPCODE", m::bytecode, "bytecode contains undefined opcodes", ""},
        {"ENCODED_COMMAND", m::payload, "decoded blob looks like a shell command", ""},
        {"XOR_WRAPPED_COMMAND", m::payload, "XOR-recovered plaintext contains a known command crib",
         "payload obfuscation: XOR with a hard-coded key"},
        {"HIGH_ENTROPY_CONST", m::payload, "large high-entropy blob", ""},
        {"KNOWN_TEST_SIGNATURE", m::payload, "EICAR test signature found after decoding", ""},
        {"UNRECOGNIZED_FORMAT", m::scan, "input is neither PE, archive nor pyc", ""},
    };
    return kinds;
}

const indicator_kind* find_builtin(std::string_view id) noexcept {
    for (const auto& k : builtin_indicators()) {
        if (k.id == id) return &k;
    }
    return nullptr;
}

indicator make_indicator(std::string_view id, std::string location, std::string detail) {
    indicator out;
    out.id = std::string(id);
    const auto* kind = find_builtin(id);
    if (kind) {
        out.where.module = kind->module;
        out.description = detail.empty() ? std::string(kind->summary) : std::move(detail);
        if (!kind->evasion_step.empty()) out.evasion_step = std::string(kind->evasion_step);
    } else {
        out.description = std::move(detail);
    }
    out.where.location = std::move(location);
    return out;
}

void sort_by_id(std::vector<indicator>& list) {
    std::stable_sort(list.begin(), list.end(), [](const indicator& a, const indicator& b) { return a.id < b.id; });
}

} // namespace pyxray
