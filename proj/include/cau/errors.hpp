#pragma once

#include <stdexcept>
#include <string>

namespace cau {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input data (bad rows, bad headers, bad checkpoints).
struct ParseError : Error {
    using Error::Error;
};

// Invalid configuration or arguments. CLI exit code 2.
struct UsageError : Error {
    using Error::Error;
};

// Missing or stale upstream artifact. CLI exit code 3.
struct DependencyError : Error {
    using Error::Error;
};

// Unlearning divergence guard tripped. CLI exit code 4.
struct DivergenceError : Error {
    using Error::Error;
};

} // namespace cau
