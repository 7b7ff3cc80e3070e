#pragma once

#include <stdexcept>
#include <string>

namespace spn {

// Every failure raised by this library derives from Error so callers can
// catch one type at process boundaries (CLI exit codes, HTTP status codes).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File could not be read or decoded as the expected raster.
class DecodeError : public Error {
public:
    using Error::Error;
};

// Invalid or unknown configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A component returned data that violates its declared contract
// (wrong level count, wrong spatial size, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

// Tensor shapes disagree, including checkpoint shape-manifest mismatches.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Input outside the evaluation protocol (e.g. mask ratio outside (0, 0.6]).
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Operation requested in the wrong model mode.
class ModeError : public Error {
public:
    using Error::Error;
};

// Checkpoint written by an incompatible format version.
class CheckpointVersionError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

} // namespace spn
