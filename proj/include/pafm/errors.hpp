#pragma once

#include <stdexcept>
#include <string>

namespace pafm {

// Invalid call arguments (bad counts, shape mismatch, out-of-range scalars).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Inconsistent or unparsable configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input data that cannot be used (missing files, degenerate series).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed tabular input; carries the 1-based location of the offending cell.
class FormatError : public DataError {
public:
    FormatError(const std::string& what, long row, long col)
        : DataError(what), row_(row), col_(col) {}

    long row() const noexcept { return row_; }
    long col() const noexcept { return col_; }

private:
    long row_;
    long col_;
};

// Non-finite values encountered during a numerical computation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Corrupt, truncated, or incompatible checkpoint file.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace pafm
