#pragma once

#include <stdexcept>
#include <string>

namespace pixmamba {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes (matmul inner dims, broadcasting, ...).
class DimensionError : public Error {
public:
    using Error::Error;
};

// Invalid layer or model configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// API misuse, e.g. backward() on a non-scalar.
class UsageError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Checkpoint load failures. Each condition has its own type so callers can
// tell a corrupted file from an incompatible one.
class CheckpointError : public Error {
public:
    using Error::Error;
};

class ChecksumError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class VersionError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class FormatError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class ParameterShapeError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace pixmamba
