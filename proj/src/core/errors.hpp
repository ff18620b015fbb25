#pragma once

#include <stdexcept>
#include <string>

namespace ltew {

// Filesystem-level failure: missing file, short read, unwritable path.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Content exists but is malformed: bad magic, truncated record, parse error,
// duplicate or missing named tensor.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Computation produced a non-finite value where one is not allowed.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ltew
