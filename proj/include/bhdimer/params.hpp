// params.hpp — model parameters, solver settings and the error types shared by
// every engine.

#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace bhdimer {

inline constexpr const char* kLibraryVersion = "0.1.0";

// Rejected input: bad parameters, off-sphere states, malformed spec files.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// The adaptive step size collapsed; carries the time that was reached.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, double t_reached)
        : std::runtime_error(what), t_reached_(t_reached) {}
    double t_reached() const noexcept { return t_reached_; }

private:
    double t_reached_;
};

// Physical parameters with hbar = 1. `g` is the macroscopic interaction; the
// N-particle Hamiltonian uses g / N.
struct ModelParams {
    double epsilon{0.0};
    double v{1.0};
    double g{0.0};
    double gamma{0.0};

    void validate() const {
        auto check = [](double x, const char* name) {
            if (!std::isfinite(x)) {
                throw ValidationError(std::string("ModelParams: ") + name + " is not finite");
            }
        };
        check(epsilon, "epsilon");
        check(v, "v");
        check(g, "g");
        check(gamma, "gamma");
        if (gamma < 0.0) {
            throw ValidationError("ModelParams: gamma must be >= 0");
        }
    }

    // Interaction constant entering the N-particle Hamiltonian.
    double microscopic_interaction(int N) const { return g / static_cast<double>(N); }

    std::string to_string() const {
        std::ostringstream os;
        os.precision(17);
        os << "epsilon=" << epsilon << " v=" << v << " g=" << g << " gamma=" << gamma;
        return os.str();
    }
};

inline bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.epsilon == b.epsilon && a.v == b.v && a.g == b.g && a.gamma == b.gamma;
}

// Settings for the time integrators. A positive `fixed_step` switches from the
// adaptive Dormand-Prince pair to classical RK4 with that step.
struct SolverSettings {
    double rtol{1e-9};
    double atol{1e-12};
    double fixed_step{0.0};
    double initial_step{0.0};   // 0 selects an automatic first step
    long max_steps{50'000'000};
    // Many-particle engine only: replace Runge-Kutta by binary128 Taylor
    // stepping of the (constant) Hamiltonian.
    bool extended_precision{false};

    bool adaptive() const { return !(fixed_step > 0.0); }

    void validate() const {
        if (!(rtol > 0.0) || !(atol > 0.0) || !std::isfinite(rtol) || !std::isfinite(atol)) {
            throw ValidationError("SolverSettings: rtol and atol must be positive");
        }
        if (!(fixed_step >= 0.0) || !std::isfinite(fixed_step)) {
            throw ValidationError("SolverSettings: fixed_step must be >= 0");
        }
        if (max_steps <= 0) {
            throw ValidationError("SolverSettings: max_steps must be positive");
        }
    }
};

inline SolverSettings tight_settings() {
    SolverSettings s;
    s.rtol = 1e-13;
    s.atol = 1e-15;
    return s;
}

} // namespace bhdimer
