#pragma once

#include <stdexcept>
#include <string>

namespace prorobust {

// Every library error derives from Error so callers can map families of
// failures onto exit codes without listing each type.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : Error {
    using Error::Error;
};

// Raised when a loaded case violates an invariant. `field` names the
// offending entry, e.g. "lines[3].to".
struct ValidationError : Error {
    ValidationError(std::string field_name, const std::string& what)
        : Error(field_name + ": " + what), field(std::move(field_name)) {}
    std::string field;
};

struct SingularNetworkError : Error {
    using Error::Error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct InvalidArgument : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct EmptyDatasetError : Error {
    using Error::Error;
};

struct SolverFailure : Error {
    using Error::Error;
};

}  // namespace prorobust
