#pragma once

#include <stdexcept>
#include <string>

namespace hbayes {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (wrong dimension, bad argument).
class ContractError : public Error {
public:
    using Error::Error;
};

/// A matrix that must be symmetric positive definite was not.
class FactorizationError : public Error {
public:
    using Error::Error;
};

/// Monte Carlo estimation failed, e.g. the potential returned a non-finite value.
class EstimationError : public Error {
public:
    using Error::Error;
};

/// The linear system of the flow step could not be solved.
class SolveError : public Error {
public:
    using Error::Error;
};

/// A forward model (FEM or boundary integral solver) failed.
class ForwardError : public Error {
public:
    using Error::Error;
};

/// Malformed or incomplete experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace hbayes
