#pragma once

#include <string>
#include <vector>

#include "pyxray/indicator.hpp"
#include "pyxray/pyc/disasm.hpp"
#include "pyxray/pyc/marshal.hpp"

namespace pyxray::pyc {

enum class provenance { constant, name, docstring };

std::string_view to_string(provenance p) noexcept;

struct harvested_string {
    std::string text; // byte constants rendered lossily
    provenance origin = provenance::constant;
    std::vector<std::string> path; // code-object names from the root down
    std::string location;          // "<module>/outer:consts[1]"
    bool from_bytes = false;
};

/// Every string constant (recursively), every name-table entry and every
/// docstring in the tree.
std::vector<harvested_string> harvest_strings(const code_object& root);

std::string join_path(const std::vector<std::string>& path);

struct code_listing {
    const code_object* code = nullptr;
    std::vector<std::string> path;
    disassembly listing;
};

/// Pre-order walk of the tree with each code object disassembled.
std::vector<code_listing> disassemble_tree(const code_object& root, py_version version);

std::vector<indicator> bytecode_indicators(const code_object& root, const std::vector<code_listing>& listings);

inline constexpr std::size_t large_bytes_threshold = 256;

} // namespace pyxray::pyc
