#pragma once

#include <stdexcept>
#include <string>

namespace bdma {

// Malformed or inconsistent input data: files, shapes, empty results.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric failure: non-finite loss or gradient, checksum mismatch aside.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bdma
