#include <algorithm>
#include <deque>

#include <fmt/format.h>

#include "pyxray/deobf/deobf.hpp"
#include "pyxray/text.hpp"

namespace pyxray::deobf {

namespace {

constexpr std::string_view interpreters[] = {
    "powershell", "pwsh", "cmd.exe", "cmd /c", "cmd /k", "/bin/sh", "/bin/bash", "sh -c", "bash -c", "python",
    "wscript", "cscript", "mshta", "rundll32", "regsvr32", "certutil", "bitsadmin", "curl ", "wget ",
};
constexpr std::string_view url_schemes[] = {"http://", "https://", "ftp://"};
constexpr std::string_view switches[] = {" -nop", " -noprofile", " -enc", " -encodedcommand", " -w hidden",
                                         " -windowstyle", " -exec", " -c ", " /c ", " -e "};

bool mentions(std::string_view lower, std::string_view needle) { return lower.find(needle) != std::string_view::npos; }

} // namespace

bool looks_like_command(std::string_view text) {
    auto lower = to_lower_ascii(text);
    std::string_view t(lower);
    while (!t.empty() && (t.front() == ' ' || t.front() == '"' || t.front() == '\'' || t.front() == '\t')) t.remove_prefix(1);
    for (auto i : interpreters) {
        if (t.starts_with(i)) return true;
    }
    bool interp = std::any_of(std::begin(interpreters), std::end(interpreters), [&](auto i) { return mentions(t, i); });
    if (!interp) return false;
    return std::any_of(std::begin(url_schemes), std::end(url_schemes), [&](auto u) { return mentions(t, u); }) ||
           std::any_of(std::begin(switches), std::end(switches), [&](auto s) { return mentions(t, s); });
}

unwrap_result unwrap_payloads(const std::vector<text_source>& strings, const std::vector<blob>& raw,
                              const unwrap_options& options) {
    unwrap_result out;
    struct work {
        blob b;
        std::size_t steps;
    };
    std::deque<work> queue;
    for (auto& b : find_base64(strings, options.min_len)) queue.push_back({std::move(b), 1});
    for (const auto& b : raw) queue.push_back({b, b.chain.size()});

    while (!queue.empty()) {
        auto [b, steps] = std::move(queue.front());
        queue.pop_front();
        if (steps < options.max_steps && !b.bytes.empty()) {
            if (printable_ratio(b.bytes) >= options.xor_search.exhaustive_threshold) {
                std::vector<text_source> inner{{std::string(as_chars(b.bytes)), b.origin}};
                for (auto& nested : find_base64(inner, options.min_len)) {
                    if (nested.source == b.source) continue;
                    queue.push_back({std::move(nested), steps + 1});
                }
            } else if (auto rec = xor_recover(b.bytes, options.cribs, options.xor_search)) {
                blob child;
                child.bytes = rec->plaintext;
                child.origin = b.origin;
                child.chain = b.chain;
                child.chain.push_back({encoding_step::kind::xor_key, rec->key});
                child.source = b.source;
                out.recoveries.push_back(std::move(*rec));
                queue.push_back({std::move(child), steps + 1});
            }
        }
        out.blobs.push_back(std::move(b));
    }
    return out;
}

std::vector<indicator> payload_indicators(const std::vector<blob>& blobs, const std::vector<xor_recovery>& recoveries) {
    std::vector<indicator> out;
    auto chain_text = [](const blob& b) {
        std::string s;
        for (const auto& step : b.chain) {
            if (!s.empty()) s += " -> ";
            s += step.describe();
        }
        return s.empty() ? std::string("raw") : s;
    };

    const blob* command = nullptr;
    const blob* eicar = nullptr;
    const blob* dense = nullptr;
    for (const auto& b : blobs) {
        auto text = as_chars(b.bytes);
        if (!command && !b.chain.empty() && printable_ratio(b.bytes) >= 0.85 && looks_like_command(text)) command = &b;
        if (!eicar && text.find(eicar_marker) != std::string_view::npos) eicar = &b;
        if (!dense && b.bytes.size() >= high_entropy_min_len && shannon_entropy(b.bytes) >= high_entropy_threshold) {
            dense = &b;
        }
    }
    if (command) {
        auto text = std::string(as_chars(command->bytes));
        if (text.size() > 120) text = text.substr(0, 117) + "...";
        out.push_back(make_indicator("ENCODED_COMMAND", command->origin,
                                     fmt::format("[{}] {}", chain_text(*command), escape_bytes(as_bytes(text)))));
    }
    for (const auto& r : recoveries) {
        if (!r.crib_hit) continue;
        out.push_back(make_indicator("XOR_WRAPPED_COMMAND", fmt::format("key {}", hex_encode(r.key)),
                                     fmt::format("{}-byte key recovered via crib \"{}\", printable ratio {:.2f}",
                                                 r.key.size(), *r.crib_hit, r.score)));
        break;
    }
    if (dense) {
        out.push_back(make_indicator("HIGH_ENTROPY_CONST", dense->origin,
                                     fmt::format("{} bytes at {:.2f} bits/byte", dense->bytes.size(),
                                                 shannon_entropy(dense->bytes))));
    }
    if (eicar) {
        out.push_back(make_indicator("KNOWN_TEST_SIGNATURE", eicar->origin,
                                     fmt::format("EICAR test string after [{}]", chain_text(*eicar))));
    }
    sort_by_id(out);
    return out;
}

} // namespace pyxray::deobf
