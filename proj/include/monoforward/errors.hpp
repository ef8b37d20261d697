#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mono {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class LabelError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Non-finite loss or parameter encountered during training.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, int layer) : std::runtime_error(what), layer_(layer) {}
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

/// Dataset missing or unreadable.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed dataset file (bad magic, truncated payload, inconsistent counts).
class FormatError : public DataError {
public:
    FormatError(const std::string& what, std::size_t offset)
        : DataError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace mono
