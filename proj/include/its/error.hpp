#pragma once

#include <stdexcept>
#include <string>

namespace its {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidRange : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class OrderingError : public Error {
public:
    using Error::Error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

class WeightSumError : public Error {
public:
    using Error::Error;
};

class DegenerateCalibration : public Error {
public:
    using Error::Error;
};

class StaleStats : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Raised by the experiment harness; the message is prefixed with the
/// failing cell so a long sweep can be diagnosed from the log alone.
class CellError : public Error {
public:
    CellError(std::string cell, const std::string& what)
        : Error(cell + ": " + what), cell_(std::move(cell)) {}

    const std::string& cell() const noexcept { return cell_; }

private:
    std::string cell_;
};

}  // namespace its
