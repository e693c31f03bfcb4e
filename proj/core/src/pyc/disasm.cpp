#include "pyxray/pyc/disasm.hpp"

#include <stdexcept>

#include <fmt/format.h>

namespace pyxray::pyc {

namespace {
#include "opcode_tables.inc"

constexpr std::array<std::string_view, 12> cmp_ops_old = {
    "<", "<=", "==", "!=", ">", ">=", "in", "not in", "is", "is not", "exception match", "BAD"};
constexpr std::array<std::string_view, 6> cmp_ops = {"<", "<=", "==", "!=", ">", ">="};
constexpr std::array<std::string_view, 26> binary_ops = {
    "+", "&", "//", "<<", "@", "*", "%", "|", "**", ">>", "-", "/", "^",
    "+=", "&=", "//=", "<<=", "@=", "*=", "%=", "|=", "**=", ">>=", "-=", "/=", "^="};

// "<N>" names for undefined opcodes, so opname can stay a string_view
const std::array<std::string, 256>& unknown_names() {
    static const auto names = [] {
        std::array<std::string, 256> out;
        for (int i = 0; i < 256; ++i) out[static_cast<std::size_t>(i)] = fmt::format("<{}>", i);
        return out;
    }();
    return names;
}

template <typename T>
std::optional<std::string> pick(const std::vector<T>& v, std::uint32_t i) {
    if (i < v.size()) {
        if constexpr (std::is_same_v<T, std::string>) return v[i];
        else return v[i]->repr();
    }
    return std::nullopt;
}

std::optional<std::string> resolve(const code_object& code, py_version ver, const opcode_info& info,
                                   std::string_view name, std::uint32_t arg) {
    const bool v311 = ver >= py_version{3, 11};
    if (info.flags & op_hasconst) return pick(code.consts, arg);
    if (info.flags & op_hasname) {
        std::uint32_t idx = (v311 && name == "LOAD_GLOBAL") ? arg >> 1 : arg;
        return pick(code.names, idx);
    }
    if (info.flags & op_haslocal) return v311 ? pick(code.localsplusnames, arg) : pick(code.varnames, arg);
    if (info.flags & op_hasfree) {
        if (v311) return pick(code.localsplusnames, arg);
        if (arg < code.cellvars.size()) return code.cellvars[arg];
        return pick(code.freevars, arg - static_cast<std::uint32_t>(code.cellvars.size()));
    }
    if (info.flags & op_hascompare) {
        if (ver <= py_version{3, 8}) {
            if (arg < cmp_ops_old.size()) return std::string(cmp_ops_old[arg]);
        } else if (arg < cmp_ops.size()) {
            return std::string(cmp_ops[arg]);
        }
        return std::nullopt;
    }
    if (v311 && name == "BINARY_OP" && arg < binary_ops.size()) return std::string(binary_ops[arg]);
    return std::nullopt;
}

} // namespace

std::optional<int> opcode_table::find(std::string_view name) const noexcept {
    for (int i = 0; i < 256; ++i) {
        if (name == ops[static_cast<std::size_t>(i)].name) return i;
    }
    return std::nullopt;
}

const opcode_table* opcodes_for(py_version v) noexcept {
    if (v.major != 3) return nullptr;
    switch (v.minor) {
    case 5: return &table_35;
    case 6: return &table_36;
    case 7: return &table_37;
    case 8: return &table_38;
    case 9: return &table_39;
    case 10: return &table_310;
    case 11: return &table_311;
    default: return nullptr;
    }
}

disassembly disassemble(const code_object& code, py_version version) {
    const opcode_table* table = opcodes_for(version);
    if (!table) throw std::invalid_argument(fmt::format("no opcode table for Python {}", version.str()));

    disassembly out;
    const auto& bc = code.code;
    const bool wordcode = version >= py_version{3, 6};
    std::uint32_t extended = 0;
    std::size_t prefix_bytes = 0;

    auto emit = [&](std::size_t offset, std::uint8_t op, std::optional<std::uint32_t> arg) {
        const auto& info = table->ops[op];
        instruction ins;
        ins.offset = offset;
        ins.opcode = op;
        if (info.name[0] == '\0') {
            ins.opname = unknown_names()[op];
            out.unknown.push_back({offset, op});
        } else {
            ins.opname = info.name;
            if (arg) ins.resolved = resolve(code, version, info, ins.opname, *arg);
        }
        ins.argument = arg;
        out.instructions.push_back(std::move(ins));
    };

    std::size_t pc = 0;
    while (pc < bc.size()) {
        const std::size_t at = pc;
        const std::uint8_t op = bc[pc];
        std::optional<std::uint32_t> arg;
        std::size_t width;
        if (wordcode) {
            if (pc + 2 > bc.size()) {
                out.truncated = true;
                break;
            }
            width = 2;
            if (op >= table->have_argument) arg = bc[pc + 1] | extended;
        } else {
            width = op >= table->have_argument ? 3 : 1;
            if (pc + width > bc.size()) {
                out.truncated = true;
                break;
            }
            if (width == 3) arg = static_cast<std::uint32_t>(bc[pc + 1] | (bc[pc + 2] << 8)) | extended;
        }
        pc += width;

        if (op == table->extended_arg && arg && pc < bc.size()) {
            extended = wordcode ? (*arg << 8) : (*arg << 16);
            prefix_bytes += width;
            continue;
        }
        out.folded_bytes += prefix_bytes;
        prefix_bytes = 0;
        extended = 0;
        emit(at, op, arg);
    }
    return out;
}

} // namespace pyxray::pyc
