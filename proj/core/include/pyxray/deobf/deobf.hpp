#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pyxray/bytes.hpp"
#include "pyxray/indicator.hpp"

namespace pyxray::deobf {

class empty_input : public error {
public:
    empty_input() : error("entropy of an empty input is undefined") {}
};

/// Base-2 Shannon entropy of the byte histogram, in [0, 8].
double shannon_entropy(byte_view data);

struct encoding_step {
    enum class kind { base64, xor_key };
    kind type = kind::base64;
    byte_buffer key; // xor only

    std::string describe() const;
    bool operator==(const encoding_step&) const = default;
};

/// Decoded bytes plus the decodings that produced them from `source`, oldest
/// first.
struct blob {
    byte_buffer bytes;
    std::string origin;
    std::vector<encoding_step> chain;
    std::string source;
};

struct text_source {
    std::string text;
    std::string origin;
};

inline constexpr std::size_t default_base64_min = 40;

/// Maximal strict-base64 runs of at least min_len characters (min_len is
/// raised to 16 if smaller).
std::vector<blob> find_base64(const std::vector<text_source>& strings, std::size_t min_len = default_base64_min);

std::string base64_encode(byte_view data);
/// Canonical encodings only: length % 4 == 0, padding and unused bits zero.
std::optional<byte_buffer> base64_decode_strict(std::string_view text);

byte_buffer xor_apply(byte_view data, byte_view key);

/// Re-encodes blob.bytes through the chain in reverse. Equals blob.source
/// for every blob this module emits.
std::string replay(const blob& b);

struct xor_recovery {
    byte_buffer key;
    byte_buffer plaintext;
    double score = 0;
    std::optional<std::string> crib_hit;
};

struct xor_options {
    std::size_t max_key_len = 16;
    double crib_threshold = 0.85;
    double exhaustive_threshold = 0.95;
};

/// True when the input already contains a crib or is printable enough to
/// be plaintext; xor_recover declines such inputs.
bool looks_plain(byte_view data, const std::vector<std::string>& cribs, const xor_options& options = {});

/// Crib drag first, then single-byte exhaustive search. Ranking: score,
/// then shorter key, then alphanumeric share of the plaintext, then lower
/// key bytes.
std::optional<xor_recovery> xor_recover(byte_view cipher, const std::vector<std::string>& cribs,
                                        const xor_options& options = {});

/// Interpreter names at the start, or URL schemes / switch syntax
/// alongside one.
bool looks_like_command(std::string_view text);

inline constexpr std::string_view eicar_marker = "EICAR-STANDARD-ANTIVIRUS-TEST-FILE";
inline constexpr double high_entropy_threshold = 7.2;
inline constexpr std::size_t high_entropy_min_len = 256;

struct unwrap_options {
    std::vector<std::string> cribs;
    xor_options xor_search;
    std::size_t min_len = default_base64_min;
    std::size_t max_steps = 3;
};

struct unwrap_result {
    std::vector<blob> blobs; // every layer, outermost first
    std::vector<xor_recovery> recoveries;
};

/// Base64 carving over `strings`, XOR recovery on opaque results, and nested
/// carving inside decoded text, bounded by max_steps. Raw byte constants
/// enter with an empty chain.
unwrap_result unwrap_payloads(const std::vector<text_source>& strings, const std::vector<blob>& raw,
                              const unwrap_options& options);

std::vector<indicator> payload_indicators(const std::vector<blob>& blobs, const std::vector<xor_recovery>& recoveries);

} // namespace pyxray::deobf
