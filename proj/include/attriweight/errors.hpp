#pragma once

#include <stdexcept>
#include <string>

namespace attriweight {

/// File could not be opened, read, or written.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Text input (CSV, config, weights file) failed to parse.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Binary artifact has a bad magic, version, or is truncated.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Payload checksum does not match the stored CRC.
struct ChecksumError : std::runtime_error {
    explicit ChecksumError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Linear-algebra failure (e.g. Cholesky on a non-PD matrix).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace attriweight
