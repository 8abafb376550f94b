#pragma once

#include <stdexcept>
#include <string>

namespace thermsplat {

/// Raised for malformed inputs, unreadable files and violated preconditions
/// that depend on data. The CLI maps it to exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for invalid arguments or configuration. The CLI maps it to exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace thermsplat
