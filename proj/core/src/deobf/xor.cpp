#include <algorithm>
#include <cctype>
#include <set>

#include "pyxray/deobf/deobf.hpp"
#include "pyxray/text.hpp"

namespace pyxray::deobf {

namespace {

// Printable ratio with early exit once the threshold is out of reach.
std::optional<double> ratio_at_least(byte_view cipher, byte_view key, double threshold) {
    const std::size_t n = cipher.size();
    const auto budget = static_cast<std::size_t>((1.0 - threshold) * static_cast<double>(n));
    std::size_t bad = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_printable(cipher[i] ^ key[i % key.size()]) && ++bad > budget) return std::nullopt;
    }
    double r = static_cast<double>(n - bad) / static_cast<double>(n);
    if (r < threshold) return std::nullopt;
    return r;
}

byte_buffer primitive(byte_buffer key) {
    for (std::size_t p = 1; p < key.size(); ++p) {
        if (key.size() % p != 0) continue;
        bool ok = true;
        for (std::size_t i = p; i < key.size() && ok; ++i) ok = key[i] == key[i - p];
        if (ok) {
            key.resize(p);
            break;
        }
    }
    return key;
}

double alnum_ratio(const byte_buffer& b) {
    if (b.empty()) return 0;
    auto n = std::count_if(b.begin(), b.end(), [](std::uint8_t c) { return std::isalnum(c) || c == ' '; });
    return static_cast<double>(n) / static_cast<double>(b.size());
}

bool better(const xor_recovery& a, const xor_recovery& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.key.size() != b.key.size()) return a.key.size() < b.key.size();
    double aa = alnum_ratio(a.plaintext), ab = alnum_ratio(b.plaintext);
    if (aa != ab) return aa > ab;
    return a.key < b.key;
}

std::optional<std::string> find_crib(byte_view plain, const std::vector<std::string>& cribs) {
    for (const auto& c : cribs) {
        if (!c.empty() && icontains(as_chars(plain), c)) return c;
    }
    return std::nullopt;
}

} // namespace

bool looks_plain(byte_view data, const std::vector<std::string>& cribs, const xor_options& options) {
    return find_crib(data, cribs).has_value() || printable_ratio(data) >= options.exhaustive_threshold;
}

std::optional<xor_recovery> xor_recover(byte_view cipher, const std::vector<std::string>& cribs, const xor_options& options) {
    if (cipher.size() < 8 || looks_plain(cipher, cribs, options)) return std::nullopt;

    std::optional<xor_recovery> best;
    auto offer = [&](xor_recovery cand) {
        if (!best || better(cand, *best)) best = std::move(cand);
    };

    std::set<byte_buffer> tried;
    for (const auto& crib_text : cribs) {
        auto crib = as_bytes(crib_text);
        if (crib.empty() || crib.size() > cipher.size()) continue;
        const std::size_t max_len = std::min(options.max_key_len, crib.size());
        byte_buffer frag(crib.size());
        for (std::size_t a = 0; a + crib.size() <= cipher.size(); ++a) {
            for (std::size_t i = 0; i < crib.size(); ++i) frag[i] = cipher[a + i] ^ crib[i];
            for (std::size_t len = 1; len <= max_len; ++len) {
                bool periodic = true;
                for (std::size_t i = len; i < frag.size() && periodic; ++i) periodic = frag[i] == frag[i - len];
                if (!periodic) continue;
                byte_buffer key(len);
                for (std::size_t i = 0; i < len; ++i) key[(a + i) % len] = frag[i];
                key = primitive(std::move(key));
                if (std::all_of(key.begin(), key.end(), [](std::uint8_t b) { return b == 0; })) break;
                if (!tried.insert(key).second) break;
                if (auto score = ratio_at_least(cipher, key, options.crib_threshold)) {
                    auto plain = xor_apply(cipher, key);
                    offer({key, std::move(plain), *score, crib_text});
                }
                break;
            }
        }
    }
    if (best) return best;

    for (int k = 1; k < 256; ++k) {
        const byte_buffer key{static_cast<std::uint8_t>(k)};
        if (auto score = ratio_at_least(cipher, key, options.exhaustive_threshold)) {
            auto plain = xor_apply(cipher, key);
            auto hit = find_crib(plain, cribs);
            offer({key, std::move(plain), *score, hit});
        }
    }
    return best;
}

} // namespace pyxray::deobf
