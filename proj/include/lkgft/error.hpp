#pragma once

#include <stdexcept>
#include <string>

namespace lkgft {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value lies outside the domain of an observable (e.g. log of a non-positive number).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Inputs have incompatible sizes or violate a precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Numerical integration left the finite range.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t time_index)
        : Error(what), time_index_(time_index) {}

    std::size_t time_index() const noexcept { return time_index_; }

private:
    std::size_t time_index_;
};

/// A factorization or rank condition needed by the algorithm does not hold.
class NumericalError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

} // namespace detail
} // namespace lkgft
