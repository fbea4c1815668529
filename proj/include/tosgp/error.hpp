#pragma once

#include <stdexcept>
#include <string>

namespace tosgp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad shapes, invalid graphs, unreadable files.
class DataError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: solver non-convergence or loss of positive definiteness.
class NumericalError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, double residual, int iterations)
        : NumericalError(what), residual_(residual), iterations_(iterations) {}

    [[nodiscard]] double residual() const noexcept { return residual_; }
    [[nodiscard]] int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

/// Archive written by an unsupported (newer) format version.
class VersionError : public DataError {
public:
    using DataError::DataError;
};

/// Archive contents do not match the stored checksum.
class ChecksumError : public DataError {
public:
    using DataError::DataError;
};

} // namespace tosgp
