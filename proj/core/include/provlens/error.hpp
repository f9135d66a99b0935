#pragma once

#include <stdexcept>
#include <string>

namespace provlens {

/// Base of every error raised by the library. The CLI maps subclasses to
/// exit codes (argument-style errors -> 2, ResourceError -> 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Event appended or replayed out of timestamp order.
class OrderingError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

/// Malformed log line; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class VersionError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss during training or explanation.
class DivergenceError : public Error {
public:
    using Error::Error;
};

class ResourceError : public Error {
public:
    using Error::Error;
};

} // namespace provlens
