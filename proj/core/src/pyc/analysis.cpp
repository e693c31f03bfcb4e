#include "pyxray/pyc/analysis.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "pyxray/text.hpp"

namespace pyxray::pyc {

namespace {

constexpr std::uint32_t co_newlocals = 0x2;

bool holds_docstring(const code_object& code) {
    if (std::find(code.names.begin(), code.names.end(), "__doc__") != code.names.end()) return true;
    return !code.name.empty() && code.name.front() != '<' && (code.flags & co_newlocals);
}

void harvest_value(const value_ptr& v, const std::vector<std::string>& path, const std::string& location, bool doc,
                   std::vector<harvested_string>& out, const code_object& owner);

void harvest_code(const code_object& code, std::vector<std::string> path, std::vector<harvested_string>& out) {
    path.push_back(code.name);
    const auto where = join_path(path);
    const bool doc = holds_docstring(code);
    for (std::size_t i = 0; i < code.consts.size(); ++i) {
        harvest_value(code.consts[i], path, fmt::format("{}:consts[{}]", where, i), doc && i == 0, out, code);
    }
    auto names = [&](const std::vector<std::string>& table, std::string_view label) {
        for (std::size_t i = 0; i < table.size(); ++i) {
            out.push_back({table[i], provenance::name, path, fmt::format("{}:{}[{}]", where, label, i), false});
        }
    };
    names(code.names, "names");
    names(code.varnames, "varnames");
    names(code.freevars, "freevars");
    names(code.cellvars, "cellvars");
}

void harvest_value(const value_ptr& v, const std::vector<std::string>& path, const std::string& location, bool doc,
                   std::vector<harvested_string>& out, const code_object& owner) {
    if (const auto* t = v->text()) {
        out.push_back({*t, doc ? provenance::docstring : provenance::constant, path, location, false});
    } else if (const auto* b = v->bytes()) {
        out.push_back({lossy_utf8(*b), provenance::constant, path, location, true});
    } else if (const auto* seq = v->sequence()) {
        for (std::size_t i = 0; i < seq->items.size(); ++i) {
            harvest_value(seq->items[i], path, fmt::format("{}[{}]", location, i), false, out, owner);
        }
    } else if (const auto* c = v->code()) {
        std::vector<std::string> parent(path);
        harvest_code(*c, parent, out);
    }
}

void collect_listings(const code_object& code, py_version ver, std::vector<std::string> path,
                      std::vector<code_listing>& out) {
    path.push_back(code.name);
    out.push_back({&code, path, disassemble(code, ver)});
    for (const auto* child : code.children()) collect_listings(*child, ver, path, out);
}

bool any_bytes_at_least(const std::vector<value_ptr>& values, std::size_t n) {
    for (const auto& v : values) {
        if (const auto* b = v->bytes(); b && b->size() >= n) return true;
        if (const auto* s = v->sequence(); s && any_bytes_at_least(s->items, n)) return true;
    }
    return false;
}

bool is_xor(const instruction& ins) {
    if (ins.opname == "BINARY_XOR" || ins.opname == "INPLACE_XOR") return true;
    return ins.opname == "BINARY_OP" && ins.argument && (*ins.argument == 12 || *ins.argument == 25);
}

bool is_loop(const instruction& ins) {
    return ins.opname == "FOR_ITER" || ins.opname == "JUMP_BACKWARD" || ins.opname == "JUMP_BACKWARD_NO_INTERRUPT";
}

const std::set<std::string_view> base64_decoders = {"b64decode",  "standard_b64decode", "urlsafe_b64decode",
                                                     "decodebytes", "decodestring",      "a2b_base64"};
const std::set<std::string_view> spawn_names = {"subprocess",   "Popen",           "check_output", "check_call",
                                                "getoutput",    "getstatusoutput", "ShellExecuteA", "ShellExecuteW",
                                                "CreateProcessA", "CreateProcessW", "WinExec"};
const std::set<std::string_view> os_spawn_names = {"system", "popen",  "spawnl", "spawnle",   "spawnlp",     "spawnv",
                                                   "spawnve", "spawnvp", "execv", "execve", "execl", "execvp",
                                                   "startfile", "posix_spawn"};

} // namespace

std::string_view to_string(provenance p) noexcept {
    switch (p) {
    case provenance::constant: return "const";
    case provenance::name: return "name";
    case provenance::docstring: return "docstring";
    }
    return "const";
}

std::string join_path(const std::vector<std::string>& path) {
    std::string out;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) out += '/';
        out += path[i];
    }
    return out;
}

std::vector<harvested_string> harvest_strings(const code_object& root) {
    std::vector<harvested_string> out;
    harvest_code(root, {}, out);
    return out;
}

std::vector<code_listing> disassemble_tree(const code_object& root, py_version version) {
    std::vector<code_listing> out;
    collect_listings(root, version, {}, out);
    return out;
}

std::vector<indicator> bytecode_indicators(const code_object& root, const std::vector<code_listing>& listings) {
    std::vector<indicator> out;

    // name tables across the whole tree, first location wins
    std::vector<std::pair<std::string, std::string>> names;
    std::vector<std::pair<const code_object*, std::string>> codes;
    {
        std::vector<std::pair<const code_object*, std::vector<std::string>>> stack{{&root, {}}};
        while (!stack.empty()) {
            auto [code, path] = stack.back();
            stack.pop_back();
            path.push_back(code->name);
            auto where = join_path(path);
            codes.emplace_back(code, where);
            for (const auto& n : code->names) names.emplace_back(n, where);
            auto kids = code->children();
            for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.emplace_back(*it, path);
        }
    }
    auto find_name = [&](const auto& set) -> const std::pair<std::string, std::string>* {
        for (const auto& n : names) {
            if (set.contains(n.first)) return &n;
        }
        return nullptr;
    };

    for (const auto& l : listings) {
        bool hit = false;
        for (const auto& ins : l.listing.instructions) {
            if (!ins.resolved) continue;
            const auto& r = *ins.resolved;
            bool builtin_load = ins.opname == "LOAD_NAME" || ins.opname == "LOAD_GLOBAL";
            bool attr_load = ins.opname == "LOAD_ATTR" || ins.opname == "LOAD_METHOD";
            if ((builtin_load && (r == "exec" || r == "eval" || r == "compile")) ||
                (attr_load && (r == "exec" || r == "eval"))) {
                out.push_back(make_indicator("EXEC_DYNAMIC", fmt::format("{}@{}", join_path(l.path), ins.offset),
                                             fmt::format("{} {}", ins.opname, r)));
                hit = true;
                break;
            }
        }
        if (hit) break;
    }

    const auto* spawn = find_name(spawn_names);
    if (!spawn) {
        bool has_os = std::any_of(names.begin(), names.end(), [](const auto& n) { return n.first == "os"; });
        if (has_os) spawn = find_name(os_spawn_names);
    }
    if (spawn) {
        out.push_back(make_indicator("SUBPROCESS_USE", spawn->second, fmt::format("name table references {}", spawn->first)));
    }

    for (const auto& [code, where] : codes) {
        if (any_bytes_at_least(code->consts, large_bytes_threshold)) {
            std::size_t biggest = 0;
            for (const auto& c : code->consts) {
                if (const auto* b = c->bytes()) biggest = std::max(biggest, b->size());
            }
            out.push_back(make_indicator("LARGE_BYTES_CONST", where,
                                         biggest ? fmt::format("{}-byte constant", biggest) : "large byte constant"));
            break;
        }
    }

    if (const auto* decoder = find_name(base64_decoders)) {
        for (const auto& l : listings) {
            const auto& ins = l.listing.instructions;
            auto xor_it = std::find_if(ins.begin(), ins.end(), is_xor);
            if (xor_it == ins.end()) continue;
            const std::uint32_t unit = l.code->version >= py_version{3, 10} ? 2 : 1;
            bool loop = std::any_of(ins.begin(), ins.end(), is_loop) ||
                        std::any_of(ins.begin(), ins.end(), [unit](const instruction& i) {
                            return i.opname == "JUMP_ABSOLUTE" && i.argument && *i.argument * unit <= i.offset;
                        });
            if (!loop) continue;
            out.push_back(make_indicator("DECODE_CHAIN", fmt::format("{}@{}", join_path(l.path), xor_it->offset),
                                         fmt::format("{} plus an XOR loop", decoder->first)));
            break;
        }
    }

    std::size_t unknown = 0;
    const code_listing* first_unknown = nullptr;
    for (const auto& l : listings) {
        unknown += l.listing.unknown.size();
        if (!first_unknown && !l.listing.unknown.empty()) first_unknown = &l;
    }
    if (first_unknown) {
        out.push_back(make_indicator("UNKNOWN_OPCODE",
                                     fmt::format("{}@{}", join_path(first_unknown->path), first_unknown->listing.unknown[0].offset),
                                     fmt::format("{} undefined opcode(s)", unknown)));
    }

    sort_by_id(out);
    return out;
}

} // namespace pyxray::pyc
