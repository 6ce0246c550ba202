// SPDX-License-Identifier: Apache-2.0
//
// Exception types shared by every module. The CLI maps each family onto an
// exit code (config/shape/usage -> 2, numeric -> 3, io -> 4).

#pragma once

#include <stdexcept>
#include <string>

namespace gdistil {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible matrix or parameter shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid hyperparameters or configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite values produced or consumed during computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Dataset contents that cannot satisfy a request (e.g. an empty domain).
class DataError : public Error {
public:
    using Error::Error;
};

/// Metrics requested on data that cannot define them.
class MetricError : public Error {
public:
    using Error::Error;
};

/// API misuse, such as a forward cache that does not belong to the model.
class ContractError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace gdistil
