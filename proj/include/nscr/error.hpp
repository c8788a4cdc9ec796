#pragma once

#include <stdexcept>
#include <string>

namespace nscr {

// Error taxonomy maps to CLI exit codes: usage=1, data=2, numeric=3.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : DataError {
    using DataError::DataError;
};

struct ConfigError : UsageError {
    using UsageError::UsageError;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace nscr
