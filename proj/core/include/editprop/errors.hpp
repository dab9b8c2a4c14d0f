#pragma once

#include <stdexcept>
#include <string>

namespace editprop {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor / mask / frame dimensions do not line up.
struct ShapeError : Error {
    using Error::Error;
};

// Filesystem or encode/decode failure.
struct IoError : Error {
    using Error::Error;
};

// Persistent file (adapter, weights) is malformed or corrupted.
struct FormatError : Error {
    using Error::Error;
};

// Bad experiment config or command usage. The CLI maps this to exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

// Caption provider failed; carries the provider identity in the message.
struct CaptionError : Error {
    using Error::Error;
};

// Training loss became non-finite. Aborts the run with step diagnostics.
struct NanLossError : Error {
    int step;
    int sample_index;
    int timestep;
    NanLossError(int step_, int sample_index_, int timestep_)
        : Error("non-finite training loss at step " + std::to_string(step_) +
                " (sample " + std::to_string(sample_index_) + ", t=" + std::to_string(timestep_) + ")"),
          step(step_), sample_index(sample_index_), timestep(timestep_) {}
};

} // namespace editprop
