#include <openssl/evp.h>

#include <array>
#include <cmath>

#include <fmt/format.h>

#include "pyxray/deobf/deobf.hpp"
#include "pyxray/text.hpp"

namespace pyxray::deobf {

double shannon_entropy(byte_view data) {
    if (data.empty()) throw empty_input();
    std::array<std::uint64_t, 256> hist{};
    for (auto b : data) ++hist[b];
    const double n = static_cast<double>(data.size());
    double h = 0;
    for (auto c : hist) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h == 0 ? 0.0 : h; // no -0.0
}

std::string encoding_step::describe() const {
    if (type == kind::base64) return "base64";
    return fmt::format("xor({})", hex_encode(key));
}

std::string base64_encode(byte_view data) {
    std::string out(4 * ((data.size() + 2) / 3), '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(), static_cast<int>(data.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::optional<byte_buffer> base64_decode_strict(std::string_view text) {
    if (text.empty()) return byte_buffer{};
    if (text.size() % 4 != 0) return std::nullopt;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        bool alpha = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '+' || c == '/';
        bool pad = c == '=' && i + 2 >= text.size();
        if (!alpha && !pad) return std::nullopt;
    }
    if (text[text.size() - 2] == '=' && text.back() != '=') return std::nullopt;
    byte_buffer out(text.size() / 4 * 3);
    int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    if (n < 0) return std::nullopt;
    std::size_t pad = (text.back() == '=') + (text[text.size() - 2] == '=');
    out.resize(static_cast<std::size_t>(n) - pad);
    // canonical form only: the unused low bits must round-trip
    if (base64_encode(out) != text) return std::nullopt;
    return out;
}

byte_buffer xor_apply(byte_view data, byte_view key) {
    byte_buffer out(data.begin(), data.end());
    if (key.empty()) return out;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] ^= key[i % key.size()];
    return out;
}

std::string replay(const blob& b) {
    byte_buffer cur = b.bytes;
    for (auto it = b.chain.rbegin(); it != b.chain.rend(); ++it) {
        if (it->type == encoding_step::kind::xor_key) {
            cur = xor_apply(cur, it->key);
        } else {
            auto text = base64_encode(cur);
            cur.assign(text.begin(), text.end());
        }
    }
    return std::string(as_chars(cur));
}

std::vector<blob> find_base64(const std::vector<text_source>& strings, std::size_t min_len) {
    min_len = std::max<std::size_t>(min_len, 16);
    auto alpha = [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '+' || c == '/';
    };
    std::vector<blob> out;
    for (const auto& src : strings) {
        const auto& t = src.text;
        std::size_t i = 0;
        while (i < t.size()) {
            if (!alpha(t[i])) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < t.size() && alpha(t[j])) ++j;
            std::size_t k = j;
            while (k < t.size() && k - j < 2 && t[k] == '=') ++k;
            if (k - i >= min_len) {
                auto run = std::string_view(t).substr(i, k - i);
                if (auto bytes = base64_decode_strict(run)) {
                    blob b;
                    b.bytes = std::move(*bytes);
                    b.origin = fmt::format("{}[{}:{}]", src.origin, i, k);
                    b.chain = {encoding_step{encoding_step::kind::base64, {}}};
                    b.source = std::string(run);
                    out.push_back(std::move(b));
                }
            }
            i = k;
        }
    }
    return out;
}

} // namespace pyxray::deobf
