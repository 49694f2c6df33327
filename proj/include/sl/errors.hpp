#pragma once

#include <stdexcept>
#include <string>

namespace sl {

// Validation failure of an argument or configuration value.
struct InvalidInput : std::invalid_argument {
    explicit InvalidInput(const std::string& msg) : std::invalid_argument(msg) {}
};

// A matrix required to be positive semidefinite is not (beyond clip tolerance).
struct NotPSD : std::domain_error {
    explicit NotPSD(const std::string& msg) : std::domain_error(msg) {}
};

// Requested operation exists but is outside the supported regime.
struct Unsupported : std::logic_error {
    explicit Unsupported(const std::string& msg) : std::logic_error(msg) {}
};

// A simulation step produced increments that destroy weight precision.
struct NumericalBlowup : std::runtime_error {
    double t = 0.0;
    double control_norm = 0.0;
    int measure_index = -1;   // which marginal in a joint run, -1 if single
    long trajectory = -1;     // trajectory id when known

    NumericalBlowup(const std::string& msg, double time, double cnorm)
        : std::runtime_error(msg), t(time), control_norm(cnorm) {}
};

}  // namespace sl
