#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "pyxray/error.hpp"

namespace pyxray {

using byte_view = std::span<const std::uint8_t>;
using byte_buffer = std::vector<std::uint8_t>;

/// Half-open file range [offset, offset + size).
struct byte_range {
    std::uint64_t offset = 0;
    std::uint64_t size = 0;

    std::uint64_t end() const noexcept { return offset + size; }
    bool empty() const noexcept { return size == 0; }
    bool operator==(const byte_range&) const = default;
};

/// True when [offset, offset + length) fits inside a buffer of `size` bytes.
/// Overflow-safe.
constexpr bool fits(std::uint64_t size, std::uint64_t offset, std::uint64_t length) noexcept {
    return offset <= size && length <= size - offset;
}

inline byte_view as_bytes(std::string_view text) noexcept {
    return {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()};
}

inline std::string_view as_chars(byte_view bytes) noexcept {
    return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

/// Bounds-checked cursor over a byte view. Every read that would cross the
/// end throws bounds_error and leaves the position unchanged.
class byte_reader {
public:
    explicit byte_reader(byte_view data, std::size_t position = 0);

    std::size_t position() const noexcept { return pos_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool can_read(std::size_t n) const noexcept { return n <= remaining(); }
    byte_view data() const noexcept { return data_; }

    void seek(std::size_t position);
    void skip(std::size_t n);

    std::uint8_t u8();
    std::uint16_t u16le();
    std::uint32_t u32le();
    std::uint64_t u64le();
    std::int32_t i32le() { return static_cast<std::int32_t>(u32le()); }
    std::uint32_t u32be();
    byte_view bytes(std::size_t n);

private:
    void require(std::size_t n) const;

    byte_view data_;
    std::size_t pos_;
};

std::uint16_t load_u16le(byte_view data, std::size_t offset);
std::uint32_t load_u32le(byte_view data, std::size_t offset);
std::uint32_t load_u32be(byte_view data, std::size_t offset);

void store_u16le(byte_buffer& out, std::uint16_t v);
void store_u32le(byte_buffer& out, std::uint32_t v);
void store_u64le(byte_buffer& out, std::uint64_t v);

} // namespace pyxray
