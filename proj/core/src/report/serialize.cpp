#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pyxray/report/report.hpp"

namespace pyxray::report {

namespace {

using nlohmann::json;

std::string dump(const json& j) {
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

json body(const scan_report& r) {
    json indicators = json::array();
    for (const auto& ind : r.indicators) {
        indicators.push_back({
            {"id", ind.id},
            {"severity", to_string(ind.level)},
            {"weight", ind.weight},
            {"description", ind.description},
            {"module", to_string(ind.where.module)},
            {"location", ind.where.location},
            {"evasion_step", ind.evasion_step ? json(*ind.evasion_step) : json(nullptr)},
        });
    }
    json artifacts = json::array();
    for (const auto& a : r.artifacts) {
        artifacts.push_back({
            {"name", a.name},
            {"kind", a.kind},
            {"type_code", a.type_code ? std::string(1, a.type_code) : std::string()},
            {"size", a.size},
            {"sha256", a.sha256},
            {"container", a.container},
        });
    }
    return {
        {"input", {{"sha256", r.sha256}, {"size", r.size}}},
        {"format_chain", r.format_chain},
        {"indicators", std::move(indicators)},
        {"artifacts", std::move(artifacts)},
        {"score", r.score},
        {"verdict", to_string(r.verdict)},
        {"tool_version", r.tool_version},
        {"notes", r.notes},
    };
}

std::string human(const scan_report& r) {
    std::string out;
    auto line = [&](std::string s) {
        out += s;
        out += '\n';
    };
    line(fmt::format("{}: {} (score {})", r.path.empty() ? "<input>" : r.path, to_string(r.verdict), r.score));
    line(fmt::format("  sha256 {}  size {}", r.sha256, r.size));
    std::string chain;
    for (const auto& f : r.format_chain) chain += (chain.empty() ? "" : " > ") + f;
    line(fmt::format("  format {}", chain.empty() ? "-" : chain));
    for (const auto& ind : r.indicators) {
        line(fmt::format("  [{:<6}] {:<3} {} @ {}:{} - {}", to_string(ind.level), ind.weight, ind.id,
                         to_string(ind.where.module), ind.where.location, ind.description));
    }
    if (!r.artifacts.empty()) line(fmt::format("  artifacts {}", r.artifacts.size()));
    for (const auto& n : r.notes) line(fmt::format("  note: {}", n));
    return out;
}

} // namespace

std::string report_body_json(const scan_report& report) {
    return dump(body(report));
}

std::string serialize_report(const scan_report& report, output_format format) {
    if (format == output_format::human) return human(report);
    json doc = {
        {"schema", report_schema},
        {"report", body(report)},
        {"envelope", {{"path", report.path}, {"timing_ms", report.elapsed_ms}}},
    };
    return dump(doc);
}

} // namespace pyxray::report
