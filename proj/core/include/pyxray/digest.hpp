#pragma once

#include <string>

#include "pyxray/bytes.hpp"

namespace pyxray {

/// Lower-case hex SHA-256.
std::string sha256_hex(byte_view data);

} // namespace pyxray
