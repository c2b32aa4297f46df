#pragma once

#include <stdexcept>

namespace kceval {

// Bad user input: missing files, malformed configs, refused preconditions.
// The CLI maps these to exit code 1.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Corrupted state the tool itself manages (caches, internal invariants).
// The CLI maps these to exit code 2.
struct InternalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace kceval
