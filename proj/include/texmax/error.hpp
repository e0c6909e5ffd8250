#pragma once

#include <stdexcept>
#include <string>

namespace texmax {

// Error taxonomy. The CLI maps each family onto a process exit code.

/// Shapes or parameters that do not fit together.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// NaN/Inf or a diverging computation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed binary or image file; carries the byte offset where decoding failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          detail_(what), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }
    /// Message without the offset suffix.
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string detail_;
    std::size_t offset_;
};

/// Dataset content problems: missing files, bad rows, empty classes.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Broken internal contract (e.g. a pooling record used with the wrong gradient).
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace texmax
