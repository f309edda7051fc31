#pragma once

#include <stdexcept>
#include <string>

namespace bsvie {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes.

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericalFailure : std::runtime_error {
    double condition_number = 0.0;
    NumericalFailure(const std::string& what, double cond)
        : std::runtime_error(what), condition_number(cond) {}
};

struct CertificationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CertificateRejected : std::runtime_error {
    double margin = 0.0;
    CertificateRejected(const std::string& what, double m) : std::runtime_error(what), margin(m) {}
};

struct SolverDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonConvergence : std::runtime_error {
    int iterations = 0;
    NonConvergence(const std::string& what, int it) : std::runtime_error(what), iterations(it) {}
};

struct Refused : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace bsvie
