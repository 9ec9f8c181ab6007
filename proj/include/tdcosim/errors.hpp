#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tdcosim {

/// Bad input: case files, scenario combinations, out-of-range parameters.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Linear network solution failed (structurally or numerically singular).
class SolveError : public std::runtime_error {
public:
    SolveError(const std::string& what, int pivot_hint = -1)
        : std::runtime_error(what), pivot_hint_(pivot_hint) {}

    /// Column index reported by the factorization, -1 when unknown.
    int pivot_hint() const { return pivot_hint_; }

private:
    int pivot_hint_;
};

/// Operation invoked in a state that does not allow it, e.g. clearing a
/// fault that was never applied.
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Forward-backward sweep did not converge. Carries the per-sweep maximum
/// voltage change so callers can show how the iteration behaved.
class FbsDivergence : public std::runtime_error {
public:
    FbsDivergence(const std::string& what, std::vector<double> trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}

    const std::vector<double>& trace() const { return trace_; }

private:
    std::vector<double> trace_;
};

/// Equivalent-load conversion attempted at a head voltage below the floor.
class LowVoltageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InitializationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tdcosim
