#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <variant>

#include "pyxray/pyc/marshal.hpp"

namespace pyxray::pyc {

enum class pyc_errc { bad_magic, unsupported_version, truncated_header };

class pyc_error : public error {
public:
    pyc_error(pyc_errc code, const std::string& what) : error(what), code_(code) {}
    pyc_errc code() const noexcept { return code_; }

private:
    pyc_errc code_;
};

using pyc_magic = std::array<std::uint8_t, 4>;

/// Interpreter version for a magic, including versions outside the supported
/// window. nullopt when the magic is not in the table at all.
std::optional<py_version> version_for_magic(const pyc_magic& magic) noexcept;

/// The magic a final release of `v` writes.
std::optional<pyc_magic> release_magic(py_version v) noexcept;

struct timestamp_invalidation {
    std::uint32_t mtime = 0;
    std::uint32_t source_size = 0;
};

struct hash_invalidation {
    std::array<std::uint8_t, 8> hash{};
    bool checked = false;
};

struct pyc_header {
    pyc_magic magic{};
    std::uint16_t magic_number = 0;
    std::optional<py_version> version; // nullopt: Unknown(magic)
    std::optional<std::uint32_t> flags; // 3.7+
    std::variant<timestamp_invalidation, hash_invalidation> invalidation;
    std::size_t size = 0;
};

/// Decodes the 12- or 16-byte header. Unknown magics come back with an empty
/// version instead of throwing.
pyc_header parse_pyc_header(byte_view data);

struct pyc_module {
    pyc_header header;
    code_ptr code;
};

/// Header plus code body. Throws pyc_error for bad or unsupported magics and
/// marshal_error (positions are file offsets) for a damaged body.
pyc_module parse_pyc(byte_view data);

/// A timestamp-mode header with zero mtime and size, for modules stored
/// without one (PYZ members).
byte_buffer synthesize_pyc_header(const pyc_magic& magic);

} // namespace pyxray::pyc
