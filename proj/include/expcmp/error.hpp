#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace expcmp {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid numeric argument (non-finite input, probability outside (0,1), df <= 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Invalid experiment/design configuration (bad enum combination, missing field, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// A statistic was requested from fewer observations than it needs.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

// Percent-difference denominators require strictly positive means.
class PositivityError : public Error {
public:
    using Error::Error;
};

// An (algorithm, instance) cell required by the analysis has no data.
class IncompleteDesignError : public Error {
public:
    using Error::Error;
};

// A sample-size scan exceeded its configured cap.
class OverflowError : public Error {
public:
    using Error::Error;
};

// Persisted state could not be read, written, or validated.
class StateError : public Error {
public:
    using Error::Error;
};

// A runner invocation failed; carries the run context for diagnostics.
class RunError : public Error {
public:
    RunError(std::string algorithm, std::string instance, std::uint64_t seed,
             const std::string& what)
        : Error("run failed [algorithm=" + algorithm + " instance=" + instance +
                " seed=" + std::to_string(seed) + "]: " + what),
          algorithm_id(std::move(algorithm)),
          instance_id(std::move(instance)),
          seed(seed) {}

    std::string algorithm_id;
    std::string instance_id;
    std::uint64_t seed = 0;
};

}  // namespace expcmp
