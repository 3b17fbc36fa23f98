// Exception types thrown across the library.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace xsa {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad caller-supplied values: non-finite data, empty shapes, out-of-range indices.
struct InvalidInput : Error {
    using Error::Error;
};

struct ShapeError : InvalidInput {
    using InvalidInput::InvalidInput;
};

// Iterative solver ran out of iterations; carries the last iterate so the
// caller can inspect how far it got.
struct ConvergenceFailure : Error {
    double last_estimate = 0.0;
    int iterations = 0;
    ConvergenceFailure(const std::string& msg, double last, int iters)
        : Error(msg), last_estimate(last), iterations(iters) {}
};

struct TrainingFailure : Error {
    std::vector<double> loss_history;
    TrainingFailure(const std::string& msg, std::vector<double> history)
        : Error(msg), loss_history(std::move(history)) {}
};

// Too many redistribution columns had a near-zero normalizer to build a usable matrix.
struct DegenerateMatrix : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace xsa
