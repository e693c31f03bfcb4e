#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pyxray {

/// Base for every error the library throws on hostile or malformed input.
/// Anything else escaping a parser is a bug.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A read past the end of a buffer. Parsers translate this into their own
/// module-level error before it leaves the module.
class bounds_error : public error {
public:
    bounds_error(std::size_t offset, std::size_t wanted, std::size_t size);

    std::size_t offset() const noexcept { return offset_; }
    std::size_t wanted() const noexcept { return wanted_; }
    std::size_t size() const noexcept { return size_; }

private:
    std::size_t offset_;
    std::size_t wanted_;
    std::size_t size_;
};

} // namespace pyxray
