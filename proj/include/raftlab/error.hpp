#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace raftlab {

enum class ErrorKind {
    Dimension,
    DegenerateRepresentation,
    EmptyBatch,
    InsufficientBatch,
    Domain,
    Precondition,
    Contract,
    Config,
    Spec,
    Schedule,
    Batch,
    Format,
    Io,
    SingularMoment,
    NearOrthogonal,
    NonFiniteLoss,
    Eval,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; `kind()` tells callers which
/// contract was violated.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) {
        throw Error(kind, message);
    }
}

}  // namespace raftlab
