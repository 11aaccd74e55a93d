#pragma once

#include <stdexcept>
#include <string>

namespace dyrect {

// Malformed, inconsistent or unreadable input data (files, configs, grids).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A computation produced non-finite values or otherwise diverged.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dyrect
