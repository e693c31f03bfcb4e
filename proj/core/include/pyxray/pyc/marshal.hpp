#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pyxray/bytes.hpp"

namespace pyxray::pyc {

struct py_version {
    int major = 3;
    int minor = 0;

    auto operator<=>(const py_version&) const = default;
    std::string str() const;
};

inline constexpr py_version oldest_supported{3, 5};
inline constexpr py_version newest_supported{3, 11};

constexpr bool is_supported(py_version v) noexcept { return v >= oldest_supported && v <= newest_supported; }

enum class marshal_errc { unknown_type_code, bad_ref_index, depth_exceeded, truncated, invalid_value };

std::string_view to_string(marshal_errc reason) noexcept;

class marshal_error : public error {
public:
    marshal_error(std::size_t position, marshal_errc reason, const std::string& detail = {});

    std::size_t position() const noexcept { return position_; }
    marshal_errc reason() const noexcept { return reason_; }

private:
    std::size_t position_;
    marshal_errc reason_;
};

struct code_object;
struct marshal_value;
using value_ptr = std::shared_ptr<const marshal_value>;
using code_ptr = std::shared_ptr<const code_object>;

struct none_value {
    bool operator==(const none_value&) const = default;
};
struct stop_iteration_value {
    bool operator==(const stop_iteration_value&) const = default;
};
struct ellipsis_value {
    bool operator==(const ellipsis_value&) const = default;
};
// TYPE_NULL: only legal as the dict terminator
struct null_value {
    bool operator==(const null_value&) const = default;
};

/// Arbitrary precision integer as marshal stores it: 15-bit digits, least
/// significant first.
struct big_int {
    bool negative = false;
    std::vector<std::uint16_t> digits;

    std::string to_string() const;
    bool operator==(const big_int&) const = default;
};

struct complex_value {
    double real = 0;
    double imag = 0;
    bool operator==(const complex_value&) const = default;
};

struct bytes_value {
    byte_buffer data;
};

struct text_value {
    std::string utf8; // as stored; not validated
    bool interned = false;
};

enum class sequence_kind { tuple, list, set, frozenset };

struct sequence_value {
    sequence_kind kind = sequence_kind::tuple;
    std::vector<value_ptr> items;
};

struct dict_value {
    std::vector<std::pair<value_ptr, value_ptr>> entries;
};

struct marshal_value {
    std::variant<null_value, none_value, bool, stop_iteration_value, ellipsis_value, std::int64_t, big_int, double,
                 complex_value, bytes_value, text_value, sequence_value, dict_value, code_ptr>
        data;

    const std::string* text() const noexcept;
    const byte_buffer* bytes() const noexcept;
    const std::int64_t* integer() const noexcept;
    const sequence_value* sequence() const noexcept;
    const code_object* code() const noexcept;

    /// Python-style repr; nested code objects render as "<code>".
    std::string repr() const;
};

struct code_object {
    py_version version;
    std::int32_t argcount = 0;
    std::optional<std::int32_t> posonlyargcount; // 3.8+
    std::int32_t kwonlyargcount = 0;
    std::int32_t nlocals = 0;
    std::int32_t stacksize = 0;
    std::uint32_t flags = 0;
    byte_buffer code;
    std::vector<value_ptr> consts;
    std::vector<std::string> names;
    std::vector<std::string> varnames;
    std::vector<std::string> freevars;
    std::vector<std::string> cellvars;
    // 3.11 merged layout; empty before
    std::vector<std::string> localsplusnames;
    byte_buffer localspluskinds;
    std::string filename;
    std::string name;
    std::string qualname; // 3.11+, falls back to name
    std::int32_t first_line = 0;
    byte_buffer line_table;
    byte_buffer exception_table;

    std::vector<const code_object*> children() const;
};

struct marshal_options {
    // layout used for code objects; bare streams without code may omit it
    std::optional<py_version> version;
    std::size_t max_depth = 256;
    // reported positions are shifted by this much (file offset of the stream)
    std::size_t base_offset = 0;
};

struct marshal_result {
    value_ptr value;
    std::size_t consumed = 0;
};

/// Decodes one marshalled value from the front of `data`.
marshal_result parse_marshal_prefix(byte_view data, const marshal_options& options = {});

/// Decodes one value; trailing bytes are ignored.
value_ptr parse_marshal(byte_view data, const marshal_options& options = {});

} // namespace pyxray::pyc
