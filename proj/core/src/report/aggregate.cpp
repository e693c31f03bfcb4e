#include <algorithm>
#include <map>

#include "pyxray/report/report.hpp"

namespace pyxray::report {

std::string_view to_string(verdict v) noexcept {
    switch (v) {
    case verdict::benign: return "benign";
    case verdict::suspicious: return "suspicious";
    case verdict::malicious: return "malicious";
    }
    return "benign";
}

std::optional<verdict> parse_verdict(std::string_view text) noexcept {
    if (text == "benign") return verdict::benign;
    if (text == "suspicious") return verdict::suspicious;
    if (text == "malicious") return verdict::malicious;
    return std::nullopt;
}

verdict verdict_for(int score, const thresholds& t) noexcept {
    if (score >= t.malicious) return verdict::malicious;
    if (score >= t.suspicious) return verdict::suspicious;
    return verdict::benign;
}

scan_report aggregate(const std::vector<std::vector<indicator>>& indicator_lists, const rule_set& rules,
                      const std::vector<indicator>& rule_hits) {
    std::map<std::string, indicator> merged;
    auto absorb = [&](const indicator& in) {
        indicator ind = in;
        ind.weight = std::clamp(rules.weight_for(ind.id, ind.level), 0, 100);
        if (find_builtin(ind.id) || rules.weights.count(ind.id)) ind.level = severity_for_weight(ind.weight);
        auto [it, fresh] = merged.emplace(ind.id, ind);
        if (!fresh && ind.level > it->second.level) it->second = std::move(ind);
    };
    for (const auto& list : indicator_lists) {
        for (const auto& ind : list) absorb(ind);
    }
    for (const auto& ind : rule_hits) absorb(ind);

    scan_report out;
    std::map<source_module, int> per_module;
    for (auto& [id, ind] : merged) {
        per_module[ind.where.module] += ind.weight;
        out.indicators.push_back(std::move(ind));
    }
    int total = 0;
    for (const auto& [m, sum] : per_module) total += std::min(sum, rules.module_cap);
    out.score = std::clamp(total, 0, 100);
    out.verdict = verdict_for(out.score, rules.limits);

    std::stable_sort(out.indicators.begin(), out.indicators.end(), [](const indicator& a, const indicator& b) {
        if (a.level != b.level) return a.level > b.level;
        return a.id < b.id;
    });
    return out;
}

} // namespace pyxray::report
