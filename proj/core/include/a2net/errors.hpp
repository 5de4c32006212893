#pragma once

#include <stdexcept>

namespace a2net {

// Error families the command-line tools map to distinct exit codes.

/// Caller asked for something the interface cannot express
/// (bad flag, unknown config key, malformed override).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input artifacts are missing or corrupt
/// (unreadable dataset, truncated checkpoint, bad JSON).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Computation produced non-finite values or diverged.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace a2net
