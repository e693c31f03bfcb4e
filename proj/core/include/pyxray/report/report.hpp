#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pyxray/error.hpp"
#include "pyxray/indicator.hpp"

namespace pyxray::report {

enum class verdict { benign, suspicious, malicious };

std::string_view to_string(verdict v) noexcept;
std::optional<verdict> parse_verdict(std::string_view text) noexcept;

class rule_parse_error : public error {
public:
    rule_parse_error(std::size_t line, const std::string& reason);
    std::size_t line() const noexcept { return line_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t line_;
    std::string reason_;
};

class duplicate_rule_id : public error {
public:
    duplicate_rule_id(std::size_t line, const std::string& id);
    std::size_t line() const noexcept { return line_; }
    const std::string& id() const noexcept { return id_; }

private:
    std::size_t line_;
    std::string id_;
};

enum class rule_scope { strings, decoded, names };

std::string_view to_string(rule_scope s) noexcept;

struct compiled_pattern;

struct rule {
    std::string id;
    rule_scope where = rule_scope::strings;
    severity level = severity::info;
    std::string pattern;
    std::size_t line = 0;
    std::shared_ptr<const compiled_pattern> compiled;

    bool matches(std::string_view text) const;
};

struct thresholds {
    int suspicious = 20;
    int malicious = 60;
};

struct rule_set {
    std::vector<rule> rules;
    std::vector<std::string> cribs;
    thresholds limits;
    int module_cap = 60;
    std::map<std::string, int, std::less<>> weights;
    double xor_crib_ratio = 0.85;
    double xor_exhaustive_ratio = 0.95;
    std::size_t base64_min_length = 40;

    /// The shipped rule file, parsed once.
    static const rule_set& defaults();

    /// Defaults with `user` layered on top: rules and cribs appended, scalar
    /// settings and weights overridden where the user file set them.
    static rule_set merge(const rule_set& base, const rule_set& user);

    /// Weight table entry, else the severity default for a pattern rule.
    int weight_for(std::string_view id, severity fallback) const;

    // which scalars the parsed text set explicitly
    struct overrides {
        bool suspicious = false, malicious = false, module_cap = false;
        bool crib_ratio = false, exhaustive_ratio = false, base64_min = false;
    } explicit_settings;
};

int default_weight(severity s) noexcept;

rule_set load_rules(std::string_view text);
std::string_view default_rules_text() noexcept;

struct rule_inputs {
    std::vector<std::string> strings; // harvested constants and raw printable runs
    std::vector<std::string> decoded; // deobfuscated payload text
    std::vector<std::string> names;   // archive entry and module names
};

std::vector<indicator> match_rules(const rule_set& rules, const rule_inputs& inputs);

struct artifact {
    std::string name;
    std::string kind; // "carchive-entry", "pyz-module"
    char type_code = 0;
    std::uint64_t size = 0;
    std::string sha256;
    std::string container;
};

struct scan_report {
    std::string path;
    std::string sha256;
    std::uint64_t size = 0;
    std::vector<std::string> format_chain;
    std::vector<indicator> indicators; // severity desc, then id
    std::vector<artifact> artifacts;
    int score = 0;
    report::verdict verdict = verdict::benign;
    std::string tool_version;
    double elapsed_ms = 0;
    std::vector<std::string> notes;
};

verdict verdict_for(int score, const thresholds& t) noexcept;

/// Dedup by id (max severity wins), weights from the rule set, per-module
/// cap, score clamp to 100.
scan_report aggregate(const std::vector<std::vector<indicator>>& indicator_lists, const rule_set& rules,
                      const std::vector<indicator>& rule_hits);

enum class output_format { human, json };

inline constexpr std::string_view report_schema = "pyxray.report/1";

std::string serialize_report(const scan_report& report, output_format format);

/// JSON without the envelope; what determinism checks compare.
std::string report_body_json(const scan_report& report);

} // namespace pyxray::report
