#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tflpi {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SyntaxError : Error {
    std::size_t position;
    SyntaxError(std::size_t pos, const std::string& msg)
        : Error("syntax error at position " + std::to_string(pos) + ": " + msg), position(pos) {}
};

struct UnknownVariableError : Error {
    std::string name;
    explicit UnknownVariableError(const std::string& ident)
        : Error("unknown variable '" + ident + "'"), name(ident) {}
};

struct DivByZeroError : Error {
    DivByZeroError() : Error("division by zero during evaluation") {}
};

struct FormatError : Error {
    int line;
    FormatError(int line_no, const std::string& msg)
        : Error("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
};

struct DimensionMismatchError : Error {
    using Error::Error;
};

struct NotOnSetError : Error {
    using Error::Error;
};

struct RankDropError : Error {
    using Error::Error;
};

struct NoConvergenceError : Error {
    using Error::Error;
};

struct IntegratorBlowupError : Error {
    using Error::Error;
};

struct IndependenceFailureError : Error {
    using Error::Error;
};

struct PreconditionError : Error {
    using Error::Error;
};

struct NotSymbolicError : Error {
    using Error::Error;
};

struct VerificationError : Error {
    std::string failed_check;
    VerificationError(const std::string& check, const std::string& msg)
        : Error("verification failed [" + check + "]: " + msg), failed_check(check) {}
};

}  // namespace tflpi
