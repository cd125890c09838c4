#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tlsfd {

/// Base of every error the engine throws. Callers that only need a message
/// can catch this; the subclasses exist so tests and the CLI can tell the
/// failure classes apart.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A record violates a schema invariant (corpus, embedding table, model file).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A line-delimited file could not be parsed. `line()` is 1-based.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite values reached a numeric kernel.
class NumericError : public Error {
public:
    using Error::Error;
};

/// An argument is outside an operation's precondition (k = 0, tau <= 0, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

class SplitError : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

class EmbeddingError : public Error {
public:
    using Error::Error;
};

/// A caller broke an API contract, e.g. reused a forward cache after the
/// parameters it was computed with changed.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A lookup by id found nothing.
class NotFoundError : public Error {
public:
    using Error::Error;
};

}  // namespace tlsfd
