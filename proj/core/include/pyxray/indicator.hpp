#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pyxray {

enum class severity { info, low, medium, high };

std::string_view to_string(severity s) noexcept;
std::optional<severity> parse_severity(std::string_view text) noexcept;

/// Band check: info 0-9, low 10-29, medium 30-59, high 60-100.
severity severity_for_weight(int weight) noexcept;
bool weight_in_band(int weight, severity s) noexcept;

/// Which analyzer produced a signal. Also the unit the score is capped per.
enum class source_module { pe, archive, bytecode, payload, rules, scan };

std::string_view to_string(source_module m) noexcept;

struct evidence {
    source_module module = source_module::scan;
    // file offset ("0x1a2b"), archive entry ("entry:PYZ-00.pyz") or code path
    std::string location;
};

/// One detection signal. Analyzers leave weight/severity at their defaults;
/// report::aggregate assigns both from the rule set's weight table.
struct indicator {
    std::string id;
    severity level = severity::info;
    int weight = 0;
    std::string description;
    evidence where;
    std::optional<std::string> evasion_step;
};

/// Built-in indicator ids with their owning module and the tampering step
/// each one inverts, if any.
struct indicator_kind {
    std::string_view id;
    source_module module;
    std::string_view summary;
    std::string_view evasion_step;
};

const std::vector<indicator_kind>& builtin_indicators();
const indicator_kind* find_builtin(std::string_view id) noexcept;

/// Builds an indicator for a built-in id; the summary doubles as the default
/// description when `detail` is empty.
indicator make_indicator(std::string_view id, std::string location, std::string detail = {});

void sort_by_id(std::vector<indicator>& list);

} // namespace pyxray
