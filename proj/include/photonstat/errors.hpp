#pragma once

#include <stdexcept>
#include <string>

namespace photonstat {

// Base class for everything this library throws on purpose.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid model parameters, configuration values or CLI usage (exit code 2).
struct parameter_error : error {
    explicit parameter_error(const std::string& msg) : error(msg) {}
};

// The radicand of the eigenvalue split went negative; the two decay
// eigenvalues become a complex pair and the closed-form correlator does
// not apply. Callers must not silently take the real part.
struct oscillatory_regime_error : parameter_error {
    explicit oscillatory_regime_error(const std::string& msg) : parameter_error(msg) {}
};

// Broken input files, empty streams, histograms that cannot be normalized
// and similar data-level problems (exit code 3).
struct data_error : error {
    explicit data_error(const std::string& msg) : error(msg) {}
};

}  // namespace photonstat
