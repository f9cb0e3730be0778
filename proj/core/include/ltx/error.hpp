#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ltx {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand dimensions are incompatible with the operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A file or serialized buffer is malformed. `offset` is the first byte that
/// could not be accepted.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    explicit FormatError(const std::string& what) : Error(what) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_ = 0;
};

/// Optimization produced a non-finite loss or otherwise diverged.
class TrainingError : public Error {
public:
    using Error::Error;
};

/// File system failure (missing file, unwritable path).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace ltx
