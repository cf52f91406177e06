#pragma once
#include <stdexcept>
#include <string>

namespace gsid {

/// Shape or precondition violation (dimension mismatch, too-short series, ...).
class StructuralError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure while integrating an ODE (non-finite state).
class IntegrationError : public std::runtime_error
{
public:
    IntegrationError(const std::string& msg, double time)
        : std::runtime_error(msg), time_(time) {}

    double time() const noexcept { return time_; }

private:
    double time_;
};

/// Unreadable or inconsistent user input (CSV files, model files).
class InputError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Experiment configuration violating the schema.
class ConfigError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

} // namespace gsid
