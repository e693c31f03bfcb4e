#include "xor_oracle.hpp"

#include <algorithm>
#include <cctype>

#include "pyxray/text.hpp"

namespace testkit {

using pyxray::as_chars;
using pyxray::icontains;

double printable_share(const byte_buffer& b) {
    std::size_t n = 0;
    for (auto c : b) n += (c >= 0x20 && c <= 0x7e) || c == '\t' || c == '\n' || c == '\r';
    return b.empty() ? 0 : static_cast<double>(n) / static_cast<double>(b.size());
}

double alnum_share(const byte_buffer& b) {
    std::size_t n = 0;
    for (auto c : b) n += std::isalnum(c) || c == ' ';
    return b.empty() ? 0 : static_cast<double>(n) / static_cast<double>(b.size());
}

std::optional<std::pair<std::uint8_t, byte_buffer>> brute_force(const byte_buffer& cipher,
                                                                const std::vector<std::string>& cribs) {
    auto has_crib = [&](const byte_buffer& b) {
        return std::any_of(cribs.begin(), cribs.end(), [&](const std::string& c) { return icontains(as_chars(b), c); });
    };
    if (has_crib(cipher) || printable_share(cipher) >= 0.95) return std::nullopt;
    for (bool crib_pass : {true, false}) {
        std::optional<std::pair<std::uint8_t, byte_buffer>> best;
        double best_p = -1, best_a = -1;
        for (int k = 1; k < 256; ++k) {
            byte_buffer plain = cipher;
            for (auto& c : plain) c ^= static_cast<std::uint8_t>(k);
            double p = printable_share(plain);
            if (crib_pass ? (p < 0.85 || !has_crib(plain)) : p < 0.95) continue;
            double a = alnum_share(plain);
            if (p > best_p || (p == best_p && a > best_a)) {
                best_p = p;
                best_a = a;
                best = {static_cast<std::uint8_t>(k), plain};
            }
        }
        if (best) return best;
    }
    return std::nullopt;
}

std::string sentence(gen& g, std::size_t words) {
    static const char* vocab[] = {"update", "service", "Start-Process", "-ArgumentList", "C:\\Temp\\x.txt", "0x1F",
                                  "192.0.2.1", "port=4444", "echo", "done;", "if", "(ok)", "[int]", "{retry}"};
    std::string out;
    for (std::size_t i = 0; i < words; ++i) {
        if (i) out += ' ';
        out += vocab[g.below(std::size(vocab))];
        if (g.coin(0.3)) out += g.printable(g.between(1, 6));
    }
    return out;
}

byte_buffer xor_bytes(std::string_view text, std::uint8_t k) {
    byte_buffer out(text.begin(), text.end());
    for (auto& c : out) c ^= k;
    return out;
}

} // namespace testkit
