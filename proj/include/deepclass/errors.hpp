#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deepclass {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Kernel/window/image geometry produces an empty or unsupported result.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Input values violate a precondition (e.g. malformed one-hot rows).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Operation called in the wrong state (e.g. backward without a cached forward).
class StateError : public Error {
public:
    using Error::Error;
};

/// Caller passed an out-of-range argument.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Binary file is malformed; `offset` is the byte position where decoding failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Text input is malformed; `line` is 1-based.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Augmentation target cannot be met with the available transform vocabulary.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Filesystem read/write failure; the message names the path.
class IoError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t epoch, std::size_t batch)
        : Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                ", batch " + std::to_string(batch)),
          epoch_(epoch),
          batch_(batch) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

}  // namespace deepclass
