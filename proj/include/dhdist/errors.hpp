#pragma once

#include <stdexcept>
#include <string>

namespace dhdist {

// Base class for all typed errors thrown by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input matrices malformed: wrong sizes, unreadable files, bad headers, ...
struct InputError : Error {
    explicit InputError(const std::string& msg) : Error(msg) {}
};

// skew_null_vector requires an odd dimension.
struct EvenDimension : Error {
    explicit EvenDimension(const std::string& msg) : Error(msg) {}
};

// skew_smallest_imag_pair requires an even dimension.
struct OddDimension : Error {
    explicit OddDimension(const std::string& msg) : Error(msg) {}
};

// An extremal eigenvalue needed by a gradient formula is (numerically) not
// simple; carries the offending gap so drivers can decide how to proceed.
struct DegenerateEigenvalue : Error {
    double gap;
    explicit DegenerateEigenvalue(const std::string& msg, double gap_) : Error(msg), gap(gap_) {}
};

// A rank-2 factor's S block is numerically singular where its inverse is needed.
struct SNearSingular : Error {
    double sigma_min;
    explicit SNearSingular(const std::string& msg, double s) : Error(msg), sigma_min(s) {}
};

// The adaptive Euler iteration could not find any step that decreases F.
struct StalledFlow : Error {
    explicit StalledFlow(const std::string& msg) : Error(msg) {}
};

// Bisection could not establish an upper bracket with f(eps_ub) <= tol.
struct NoUpperBracket : Error {
    explicit NoUpperBracket(const std::string& msg) : Error(msg) {}
};

// An operation received an identically-zero object it cannot normalize.
struct DegenerateInput : Error {
    explicit DegenerateInput(const std::string& msg) : Error(msg) {}
};

} // namespace dhdist
