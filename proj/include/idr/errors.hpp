#pragma once

#include <stdexcept>
#include <string>

namespace idr {

// All library failures derive from Error so callers can catch one type.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
    using Error::Error;
};

// A relation row whose entries are all masked out; softmax would be undefined.
struct DegenerateRowError : Error {
    using Error::Error;
};

struct LabelRangeError : Error {
    using Error::Error;
};

// Operation called on a store/state in the wrong mode.
struct ModeError : Error {
    using Error::Error;
};

// K orthonormal rows of length Z requested with K > Z.
struct CapacityError : Error {
    using Error::Error;
};

// Inconsistent scene rule set (overlapping mandatory regions etc.).
struct RuleError : Error {
    using Error::Error;
};

struct CompatibilityError : Error {
    using Error::Error;
};

struct DeterminismError : Error {
    using Error::Error;
};

// Violated call contract (e.g. backward on a non-scalar root).
struct ContractError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace idr
