#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace exitbound {

/// Rejected input: malformed scenario, dimension mismatch, failed validation.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Syntax error in an expression or scenario file, with the byte offset of the
/// offending token.
class SyntaxError : public InputError {
public:
    SyntaxError(const std::string& what, std::size_t offset)
        : InputError(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}

    [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Evaluation outside the domain of an expression (sqrt of a negative,
/// division by zero).
class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Solver did not converge, system singular, too many censored paths.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace exitbound
