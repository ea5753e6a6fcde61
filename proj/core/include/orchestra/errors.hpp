#pragma once

#include <stdexcept>
#include <string>

namespace orchestra {

// Caller broke an API precondition (dimension mismatch, bad call order).
struct contract_error : std::logic_error {
    using std::logic_error::logic_error;
};

// Data handed in is malformed (non-finite values, negative mass, ...).
struct input_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Rejected configuration: unknown key, bad type, out-of-range value.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operation requested from a component that cannot provide it
// (e.g. oracle matchmaking without ground-truth reward access).
struct capability_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// World construction failed (partition retry exhaustion and the like).
struct setup_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace orchestra
