#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pyxray::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_suspicious = 1;
inline constexpr int exit_malicious = 2;
inline constexpr int exit_usage = 64;
inline constexpr int exit_no_input = 65;

inline constexpr const char* rules_env = "PYXRAY_RULES";

// args excludes the program name
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

} // namespace pyxray::cli
