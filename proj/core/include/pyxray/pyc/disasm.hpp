#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pyxray/pyc/marshal.hpp"

namespace pyxray::pyc {

enum opcode_flag : std::uint8_t {
    op_hasconst = 0x01,
    op_hasname = 0x02,
    op_haslocal = 0x04,
    op_hasfree = 0x08,
    op_hascompare = 0x10,
    op_hasjrel = 0x20,
    op_hasjabs = 0x40,
};

struct opcode_info {
    const char* name; // "" for undefined opcodes
    std::uint8_t flags;
};

struct opcode_table {
    struct {
        int major;
        int minor;
    } version;
    int have_argument;
    int extended_arg;
    std::array<opcode_info, 256> ops;

    std::optional<int> find(std::string_view name) const noexcept;
};

/// nullptr outside 3.5-3.11.
const opcode_table* opcodes_for(py_version v) noexcept;

struct instruction {
    std::size_t offset = 0;
    std::uint8_t opcode = 0;
    std::string_view opname;
    std::optional<std::uint32_t> argument;
    std::optional<std::string> resolved;
};

struct unknown_opcode {
    std::size_t offset = 0;
    std::uint8_t byte = 0;
};

struct disassembly {
    // undefined opcodes appear here as "<N>" and are also listed in `unknown`
    std::vector<instruction> instructions;
    std::vector<unknown_opcode> unknown;
    std::size_t folded_bytes = 0; // consumed by EXTENDED_ARG prefixes
    bool truncated = false;       // trailing partial instruction dropped
};

/// Linear sweep of code.code. Throws std::invalid_argument for versions
/// outside the supported window.
disassembly disassemble(const code_object& code, py_version version);

} // namespace pyxray::pyc
