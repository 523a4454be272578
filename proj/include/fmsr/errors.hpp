#pragma once

#include <stdexcept>
#include <string>

namespace fmsr {

/// Contract violation on inputs: shapes, grids, file schemas, hashes.
/// The CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values or a diverging computation. The CLI maps it to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fmsr
