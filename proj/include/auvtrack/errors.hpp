#pragma once

#include <stdexcept>

namespace auvtrack {

/// Input outside an operation's mathematical domain (d <= 0, coincident agents, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Bad or inconsistent configuration (unknown scenario id, unsatisfiable spawn, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// NaN/Inf or a solver that failed to converge.
class NumericFault : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace auvtrack
