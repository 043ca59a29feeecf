#pragma once

#include <stdexcept>
#include <string>

namespace surgtrack {

/// Malformed or out-of-contract input (bad file, bad schema, bad argument).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A runtime invariant was violated (out-of-order frames, registry mismatch).
class InvariantError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace surgtrack
