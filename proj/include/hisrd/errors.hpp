#pragma once

#include <stdexcept>
#include <string>

namespace hisrd {

/// Base class for every failure raised by the library. `name()` is the stable
/// identifier the CLI prints next to its exit status.
class Error : public std::runtime_error {
public:
    Error(std::string name, const std::string& what)
        : std::runtime_error(name + ": " + what), name_(std::move(name)) {}

    [[nodiscard]] const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

/// Caller handed in something outside an operation's domain.
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error("InvalidArgument", what) {}
};

/// Numerical breakdown (factorization, eigensolver, optimizer).
class NumericalError : public Error {
public:
    using Error::Error;
};

class NotPositiveDefinite : public NumericalError {
public:
    explicit NotPositiveDefinite(const std::string& what)
        : NumericalError("NotPositiveDefinite", what) {}
};

class SingularTriangular : public NumericalError {
public:
    explicit SingularTriangular(const std::string& what)
        : NumericalError("SingularTriangular", what) {}
};

class ConvergenceFailure : public NumericalError {
public:
    ConvergenceFailure(const std::string& what, long iterations)
        : NumericalError("ConvergenceFailure", what + " (after " + std::to_string(iterations) + " iterations)"),
          iterations_(iterations) {}

    [[nodiscard]] long iterations() const noexcept { return iterations_; }

private:
    long iterations_;
};

/// The ray center ξ̄ violates at least one constraint, so the SRD-type
/// estimators are not applicable at this parameter.
class CenterInfeasible : public NumericalError {
public:
    explicit CenterInfeasible(const std::string& what)
        : NumericalError("CenterInfeasible", what) {}
};

class InfeasibleStart : public NumericalError {
public:
    explicit InfeasibleStart(const std::string& what)
        : NumericalError("InfeasibleStart", what) {}
};

/// Raised on bad configuration input (CLI exit code 2).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("ConfigError", what) {}
};

#define HISRD_REQUIRE(cond, msg)                                                   \
    do {                                                                           \
        if (!(cond)) throw ::hisrd::InvalidArgument(msg);                          \
    } while (0)

}  // namespace hisrd
