#pragma once

#include <stdexcept>
#include <string>

namespace iids {

/// Bad user-supplied input: unreadable files, malformed CSV or config values.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical routine could not proceed (e.g. covariance not positive definite).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace iids
