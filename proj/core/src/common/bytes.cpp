#include "pyxray/bytes.hpp"

#include <fmt/format.h>

namespace pyxray {

bounds_error::bounds_error(std::size_t offset, std::size_t wanted, std::size_t size)
    : error(fmt::format("read of {} bytes at offset {} exceeds buffer of {} bytes", wanted, offset, size)),
      offset_(offset), wanted_(wanted), size_(size) {}

byte_reader::byte_reader(byte_view data, std::size_t position) : data_(data), pos_(position) {
    if (position > data.size()) {
        throw bounds_error(position, 0, data.size());
    }
}

void byte_reader::require(std::size_t n) const {
    if (!can_read(n)) {
        throw bounds_error(pos_, n, data_.size());
    }
}

void byte_reader::seek(std::size_t position) {
    if (position > data_.size()) {
        throw bounds_error(position, 0, data_.size());
    }
    pos_ = position;
}

void byte_reader::skip(std::size_t n) {
    require(n);
    pos_ += n;
}

std::uint8_t byte_reader::u8() {
    require(1);
    return data_[pos_++];
}

std::uint16_t byte_reader::u16le() {
    require(2);
    auto v = load_u16le(data_, pos_);
    pos_ += 2;
    return v;
}

std::uint32_t byte_reader::u32le() {
    require(4);
    auto v = load_u32le(data_, pos_);
    pos_ += 4;
    return v;
}

std::uint64_t byte_reader::u64le() {
    require(8);
    std::uint64_t lo = load_u32le(data_, pos_);
    std::uint64_t hi = load_u32le(data_, pos_ + 4);
    pos_ += 8;
    return lo | (hi << 32);
}

std::uint32_t byte_reader::u32be() {
    require(4);
    auto v = load_u32be(data_, pos_);
    pos_ += 4;
    return v;
}

byte_view byte_reader::bytes(std::size_t n) {
    require(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
}

std::uint16_t load_u16le(byte_view d, std::size_t o) {
    if (!fits(d.size(), o, 2)) throw bounds_error(o, 2, d.size());
    return static_cast<std::uint16_t>(d[o] | (d[o + 1] << 8));
}

std::uint32_t load_u32le(byte_view d, std::size_t o) {
    if (!fits(d.size(), o, 4)) throw bounds_error(o, 4, d.size());
    return static_cast<std::uint32_t>(d[o]) | (static_cast<std::uint32_t>(d[o + 1]) << 8) |
           (static_cast<std::uint32_t>(d[o + 2]) << 16) | (static_cast<std::uint32_t>(d[o + 3]) << 24);
}

std::uint32_t load_u32be(byte_view d, std::size_t o) {
    if (!fits(d.size(), o, 4)) throw bounds_error(o, 4, d.size());
    return (static_cast<std::uint32_t>(d[o]) << 24) | (static_cast<std::uint32_t>(d[o + 1]) << 16) |
           (static_cast<std::uint32_t>(d[o + 2]) << 8) | static_cast<std::uint32_t>(d[o + 3]);
}

void store_u16le(byte_buffer& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void store_u32le(byte_buffer& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void store_u64le(byte_buffer& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

} // namespace pyxray
