#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include <boost/regex.hpp>
#include <fmt/format.h>

#include "pyxray/report/report.hpp"

namespace pyxray::report {

struct compiled_pattern {
    boost::regex re;
};

rule_parse_error::rule_parse_error(std::size_t line, const std::string& reason)
    : error(fmt::format("rules line {}: {}", line, reason)), line_(line), reason_(reason) {}

duplicate_rule_id::duplicate_rule_id(std::size_t line, const std::string& id)
    : error(fmt::format("rules line {}: duplicate rule id {}", line, id)), line_(line), id_(id) {}

std::string_view to_string(rule_scope s) noexcept {
    switch (s) {
    case rule_scope::strings: return "strings";
    case rule_scope::decoded: return "decoded";
    case rule_scope::names: return "names";
    }
    return "strings";
}

bool rule::matches(std::string_view text) const {
    if (!compiled) return false;
    try {
        return boost::regex_search(text.begin(), text.end(), compiled->re);
    } catch (const std::runtime_error&) {
        // complexity limit hit
        return false;
    }
}

int default_weight(severity s) noexcept {
    switch (s) {
    case severity::info: return 5;
    case severity::low: return 15;
    case severity::medium: return 40;
    case severity::high: return 70;
    }
    return 5;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool valid_id(std::string_view id) {
    if (id.empty() || !(id[0] >= 'A' && id[0] <= 'Z')) return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
    });
}

// next whitespace-delimited word; s advances past it
std::string_view take_word(std::string_view& s) {
    s = trim(s);
    auto end = s.find_first_of(" \t");
    auto word = s.substr(0, end);
    s = end == std::string_view::npos ? std::string_view{} : s.substr(end);
    return word;
}

int parse_int(std::string_view text, std::size_t line, int lo, int hi) {
    int v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || p != text.data() + text.size()) {
        throw rule_parse_error(line, fmt::format("expected an integer, got '{}'", text));
    }
    if (v < lo || v > hi) throw rule_parse_error(line, fmt::format("{} outside {}..{}", v, lo, hi));
    return v;
}

double parse_ratio(std::string_view text, std::size_t line) {
    double v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || p != text.data() + text.size() || !(v >= 0.0 && v <= 1.0)) {
        throw rule_parse_error(line, fmt::format("expected a ratio in [0,1], got '{}'", text));
    }
    return v;
}

void parse_directive(std::string_view body, std::size_t line, rule_set& out) {
    auto name = take_word(body);
    auto rest = trim(body);
    auto need_args = [&](std::size_t n) {
        std::string_view probe = rest;
        std::size_t count = 0;
        while (!take_word(probe).empty()) ++count;
        if (count != n) throw rule_parse_error(line, fmt::format("@{} takes {} argument(s)", name, n));
    };

    if (name == "weight") {
        need_args(2);
        auto id = take_word(rest);
        auto n = take_word(rest);
        if (!valid_id(id)) throw rule_parse_error(line, fmt::format("bad indicator id '{}'", id));
        out.weights[std::string(id)] = parse_int(n, line, 0, 100);
    } else if (name == "crib") {
        if (rest.empty()) throw rule_parse_error(line, "@crib needs text");
        out.cribs.emplace_back(rest);
    } else if (name == "threshold") {
        need_args(2);
        auto which = take_word(rest);
        int n = parse_int(take_word(rest), line, 0, 100);
        if (which == "suspicious") {
            out.limits.suspicious = n;
            out.explicit_settings.suspicious = true;
        } else if (which == "malicious") {
            out.limits.malicious = n;
            out.explicit_settings.malicious = true;
        } else {
            throw rule_parse_error(line, fmt::format("unknown threshold '{}'", which));
        }
    } else if (name == "module-cap") {
        need_args(1);
        out.module_cap = parse_int(rest, line, 0, 100);
        out.explicit_settings.module_cap = true;
    } else if (name == "xor-crib-ratio") {
        need_args(1);
        out.xor_crib_ratio = parse_ratio(rest, line);
        out.explicit_settings.crib_ratio = true;
    } else if (name == "xor-exhaustive-ratio") {
        need_args(1);
        out.xor_exhaustive_ratio = parse_ratio(rest, line);
        out.explicit_settings.exhaustive_ratio = true;
    } else if (name == "base64-min-length") {
        need_args(1);
        out.base64_min_length = static_cast<std::size_t>(parse_int(rest, line, 16, 1 << 20));
        out.explicit_settings.base64_min = true;
    } else {
        throw rule_parse_error(line, fmt::format("unknown directive '@{}'", name));
    }
}

rule parse_rule(std::string_view text, std::size_t line) {
    std::string_view fields[4];
    std::string_view rest = text;
    for (int i = 0; i < 3; ++i) {
        auto bar = rest.find('|');
        if (bar == std::string_view::npos) throw rule_parse_error(line, "expected 'id | where | severity | pattern'");
        fields[i] = trim(rest.substr(0, bar));
        rest = rest.substr(bar + 1);
    }
    fields[3] = trim(rest);

    rule r;
    r.line = line;
    r.id = std::string(fields[0]);
    if (!valid_id(fields[0])) throw rule_parse_error(line, fmt::format("bad rule id '{}'", fields[0]));
    if (find_builtin(fields[0])) {
        throw rule_parse_error(line, fmt::format("rule id '{}' collides with a built-in indicator", fields[0]));
    }

    if (fields[1] == "strings") r.where = rule_scope::strings;
    else if (fields[1] == "decoded") r.where = rule_scope::decoded;
    else if (fields[1] == "names") r.where = rule_scope::names;
    else throw rule_parse_error(line, fmt::format("unknown scope '{}'", fields[1]));

    auto level = parse_severity(fields[2]);
    if (!level) throw rule_parse_error(line, fmt::format("unknown severity '{}'", fields[2]));
    r.level = *level;

    if (fields[3].empty()) throw rule_parse_error(line, "empty pattern");
    r.pattern = std::string(fields[3]);
    try {
        auto c = std::make_shared<compiled_pattern>();
        c->re = boost::regex(r.pattern, boost::regex::perl);
        r.compiled = std::move(c);
    } catch (const boost::regex_error& e) {
        throw rule_parse_error(line, fmt::format("invalid regex: {}", e.what()));
    }
    return r;
}

} // namespace

rule_set load_rules(std::string_view text) {
    rule_set out;
    std::set<std::string, std::less<>> seen;
    std::size_t line = 0;
    while (!text.empty()) {
        ++line;
        auto nl = text.find('\n');
        auto raw = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

        auto s = trim(raw);
        if (s.empty() || s.front() == '#') continue;
        if (s.front() == '@') {
            parse_directive(s.substr(1), line, out);
            continue;
        }
        auto r = parse_rule(s, line);
        if (!seen.insert(r.id).second) throw duplicate_rule_id(line, r.id);
        out.rules.push_back(std::move(r));
    }
    if (out.limits.suspicious > out.limits.malicious) {
        throw rule_parse_error(line, "suspicious threshold above malicious threshold");
    }
    return out;
}

const rule_set& rule_set::defaults() {
    static const rule_set parsed = load_rules(default_rules_text());
    return parsed;
}

rule_set rule_set::merge(const rule_set& base, const rule_set& user) {
    rule_set out = base;
    for (const auto& r : user.rules) {
        auto dup = std::find_if(out.rules.begin(), out.rules.end(), [&](const rule& x) { return x.id == r.id; });
        if (dup != out.rules.end()) throw duplicate_rule_id(r.line, r.id);
        out.rules.push_back(r);
    }
    for (const auto& c : user.cribs) {
        if (std::find(out.cribs.begin(), out.cribs.end(), c) == out.cribs.end()) out.cribs.push_back(c);
    }
    for (const auto& [id, w] : user.weights) out.weights[id] = w;
    const auto& u = user.explicit_settings;
    if (u.suspicious) out.limits.suspicious = user.limits.suspicious;
    if (u.malicious) out.limits.malicious = user.limits.malicious;
    if (u.module_cap) out.module_cap = user.module_cap;
    if (u.crib_ratio) out.xor_crib_ratio = user.xor_crib_ratio;
    if (u.exhaustive_ratio) out.xor_exhaustive_ratio = user.xor_exhaustive_ratio;
    if (u.base64_min) out.base64_min_length = user.base64_min_length;
    out.explicit_settings = {};
    return out;
}

int rule_set::weight_for(std::string_view id, severity fallback) const {
    auto it = weights.find(id);
    if (it != weights.end()) return it->second;
    return default_weight(fallback);
}

std::vector<indicator> match_rules(const rule_set& rules, const rule_inputs& inputs) {
    std::vector<indicator> out;
    for (const auto& r : rules.rules) {
        const auto& pool = r.where == rule_scope::strings   ? inputs.strings
                           : r.where == rule_scope::decoded ? inputs.decoded
                                                            : inputs.names;
        for (const auto& s : pool) {
            if (!r.matches(s)) continue;
            indicator ind;
            ind.id = r.id;
            ind.level = r.level;
            ind.where.module = source_module::rules;
            ind.where.location = fmt::format("rule line {}", r.line);
            std::string shown = s.size() > 80 ? s.substr(0, 77) + "..." : s;
            for (auto& c : shown) {
                if (static_cast<unsigned char>(c) < 0x20) c = ' ';
            }
            ind.description = fmt::format("{} rule matched: {}", to_string(r.where), shown);
            out.push_back(std::move(ind));
            break;
        }
    }
    return out;
}

} // namespace pyxray::report
