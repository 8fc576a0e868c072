// fock.hpp — exact N-particle dynamics of the decaying two-mode Bose-Hubbard
// dimer in the Fock basis |k, N-k>, k = number of particles in site 1.
//
// States are stored as a unit direction plus log<psi|psi>, which keeps the
// survival probability representable long after exp(-2 gamma N t) underflows.

#pragma once

#include "bhdimer/ode.hpp"
#include "bhdimer/params.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

namespace bhdimer::fock {

using cplx = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

inline void check_particle_number(int N) {
    if (N < 1) {
        throw ValidationError("fock: particle number N must be >= 1");
    }
}

// ---------------------------------------------------------------- Hamiltonian

// Complex-symmetric tridiagonal matrix in the Fock basis (not hermitian for
// gamma > 0): diag[k] and off[k] = H[k][k+1] = H[k+1][k].
struct Hamiltonian {
    int N{0};
    ModelParams params;
    VectorXcd diag;
    VectorXcd off;

    Eigen::Index dim() const { return diag.size(); }

    VectorXcd apply(const VectorXcd& x) const {
        const Eigen::Index n = dim();
        VectorXcd y = diag.cwiseProduct(x);
        if (n > 1) {
            y.head(n - 1) += off.cwiseProduct(x.tail(n - 1));
            y.tail(n - 1) += off.cwiseProduct(x.head(n - 1));
        }
        return y;
    }

    MatrixXcd dense() const {
        const Eigen::Index n = dim();
        MatrixXcd H = MatrixXcd::Zero(n, n);
        for (Eigen::Index k = 0; k < n; ++k) {
            H(k, k) = diag(k);
            if (k + 1 < n) {
                H(k, k + 1) = off(k);
                H(k + 1, k) = off(k);
            }
        }
        return H;
    }
};

inline Hamiltonian build_hamiltonian(const ModelParams& p, int N) {
    check_particle_number(N);
    p.validate();
    const double c = p.microscopic_interaction(N);
    Hamiltonian H;
    H.N = N;
    H.params = p;
    H.diag.resize(N + 1);
    H.off.resize(N);
    for (int k = 0; k <= N; ++k) {
        const double imbalance = 2.0 * k - N;
        H.diag(k) = cplx(p.epsilon, -2.0 * p.gamma) * static_cast<double>(k) -
                    p.epsilon * static_cast<double>(N - k) + 0.5 * c * imbalance * imbalance;
        if (k < N) {
            H.off(k) = p.v * std::sqrt(static_cast<double>(k + 1) * static_cast<double>(N - k));
        }
    }
    return H;
}

// -------------------------------------------------------------------- States

struct ManyParticleState {
    VectorXcd direction;       // unit norm
    double log_survival{0.0};  // log <psi|psi>

    int N() const { return static_cast<int>(direction.size()) - 1; }
    double survival() const { return std::exp(log_survival); }
    VectorXcd amplitudes() const { return std::exp(0.5 * log_survival) * direction; }

    void validate() const {
        if (direction.size() < 2) {
            throw ValidationError("ManyParticleState: need at least two Fock states");
        }
        if (!direction.allFinite() || !std::isfinite(log_survival)) {
            throw ValidationError("ManyParticleState: non-finite entries");
        }
        if (std::abs(direction.norm() - 1.0) > 1e-10) {
            throw ValidationError("ManyParticleState: direction is not normalized");
        }
    }
};

// Wraps an arbitrary nonzero amplitude vector.
inline ManyParticleState from_amplitudes(const VectorXcd& psi) {
    const double norm2 = psi.squaredNorm();
    if (psi.size() < 2 || !(norm2 > 0.0) || !std::isfinite(norm2)) {
        throw ValidationError("from_amplitudes: need a finite nonzero vector of length >= 2");
    }
    return {psi / std::sqrt(norm2), std::log(norm2)};
}

inline ManyParticleState fock_state(int k, int N) {
    check_particle_number(N);
    if (k < 0 || k > N) {
        throw ValidationError("fock_state: k out of range");
    }
    VectorXcd d = VectorXcd::Zero(N + 1);
    d(k) = 1.0;
    return {d, 0.0};
}

// SU(2) coherent state (x1 a1^+ + x2 a2^+)^N |0> / sqrt(N!), with amplitudes
// sqrt(binom(N,k)) x1^k x2^(N-k) and squared norm (|x1|^2 + |x2|^2)^N.
inline ManyParticleState coherent_state(cplx x1, cplx x2, int N) {
    check_particle_number(N);
    const double n = std::norm(x1) + std::norm(x2);
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw ValidationError("coherent_state: spinor must be finite and nonzero");
    }
    const double r = std::sqrt(n);
    const cplx u1 = x1 / r;
    const cplx u2 = x2 / r;
    const double lg_n1 = std::lgamma(N + 1.0);
    VectorXcd d(N + 1);
    for (int k = 0; k <= N; ++k) {
        const int m = N - k;
        if ((k > 0 && u1 == 0.0) || (m > 0 && u2 == 0.0)) {
            d(k) = 0.0;
            continue;
        }
        const double log_binom = lg_n1 - std::lgamma(k + 1.0) - std::lgamma(m + 1.0);
        double log_mag = 0.5 * log_binom;
        double phase = 0.0;
        if (k > 0) {
            log_mag += k * std::log(std::abs(u1));
            phase += k * std::arg(u1);
        }
        if (m > 0) {
            log_mag += m * std::log(std::abs(u2));
            phase += m * std::arg(u2);
        }
        d(k) = std::polar(std::exp(log_mag), phase);
    }
    d /= d.norm();
    return {d, N * std::log(n)};
}

// -------------------------------------------------------------- Observables

enum class Observable { Lx, Ly, Lz, N };

inline const char* to_string(Observable o) {
    switch (o) {
    case Observable::Lx: return "Lx";
    case Observable::Ly: return "Ly";
    case Observable::Lz: return "Lz";
    case Observable::N: return "N";
    }
    return "?";
}

// Dense matrix of L_x = (a1^+ a2 + a1 a2^+)/2, L_y = (a1^+ a2 - a1 a2^+)/(2i),
// L_z = (n1 - n2)/2 or the number operator in the N-particle sector.
inline MatrixXcd operator_matrix(Observable o, int N) {
    check_particle_number(N);
    MatrixXcd A = MatrixXcd::Zero(N + 1, N + 1);
    for (int k = 0; k <= N; ++k) {
        switch (o) {
        case Observable::Lz: A(k, k) = k - 0.5 * N; break;
        case Observable::N: A(k, k) = static_cast<double>(N); break;
        default: break;
        }
        if (k < N) {
            // a1^+ a2 |k> = sqrt((k+1)(N-k)) |k+1>
            const double up = std::sqrt(static_cast<double>(k + 1) * static_cast<double>(N - k));
            if (o == Observable::Lx) {
                A(k + 1, k) = 0.5 * up;
                A(k, k + 1) = 0.5 * up;
            } else if (o == Observable::Ly) {
                A(k + 1, k) = cplx(0.0, -0.5 * up);
                A(k, k + 1) = cplx(0.0, 0.5 * up);
            }
        }
    }
    return A;
}

struct ObservableRecord {
    double t{0.0};
    double sx{0.0}, sy{0.0}, sz{0.0};  // <L_i> / N, normalized expectations
    double survival{1.0};
    double pop1{0.5}, pop2{0.5};       // <psi|a_j^+ a_j|psi> / N
};

// <a1^+ a2> / N for the normalized direction; its real and imaginary parts are
// s_x and s_y.
inline cplx raising_expectation(const VectorXcd& d) {
    const Eigen::Index n = d.size();
    const int N = static_cast<int>(n) - 1;
    cplx acc = 0.0;
    for (int k = 0; k < N; ++k) {
        acc += std::conj(d(k + 1)) * d(k) *
               std::sqrt(static_cast<double>(k + 1) * static_cast<double>(N - k));
    }
    return acc / static_cast<double>(N);
}

inline double lz_expectation(const VectorXcd& d) {
    const int N = static_cast<int>(d.size()) - 1;
    double acc = 0.0;
    for (int k = 0; k <= N; ++k) {
        acc += (k - 0.5 * N) * std::norm(d(k));
    }
    return acc;
}

inline ObservableRecord observables(const ManyParticleState& s, double t = 0.0) {
    const int N = s.N();
    check_particle_number(N);
    ObservableRecord r;
    r.t = t;
    const cplx lp = raising_expectation(s.direction);
    r.sx = lp.real();
    r.sy = lp.imag();
    r.sz = lz_expectation(s.direction) / N;
    r.survival = s.survival();
    r.pop1 = (0.5 + r.sz) * r.survival;
    r.pop2 = (0.5 - r.sz) * r.survival;
    return r;
}

inline double expectation(const MatrixXcd& A, const VectorXcd& d) {
    return d.dot(A * d).real();
}

// Normalized <[A,B]_+> for hermitian A, B.
inline double anticommutator_expectation(const MatrixXcd& A, const MatrixXcd& B,
                                         const VectorXcd& d) {
    return (d.dot(A * (B * d)) + d.dot(B * (A * d))).real();
}

// Delta^2_{AB} = <[A,B]_+ / 2> - <A><B>.
inline double covariance(const ManyParticleState& s, Observable a, Observable b) {
    const int N = s.N();
    const MatrixXcd A = operator_matrix(a, N);
    const MatrixXcd B = operator_matrix(b, N);
    return 0.5 * anticommutator_expectation(A, B, s.direction) -
           expectation(A, s.direction) * expectation(B, s.direction);
}

// ---------------------------------------------------------------- Propagation

namespace detail {

// Folds the norm of psi into the log-survival accumulator.
struct Renormalize {
    double* log_survival;
    void operator()(double, VectorXcd& psi) const {
        const double norm2 = psi.squaredNorm();
        *log_survival += std::log(norm2);
        psi /= std::sqrt(norm2);
    }
};

} // namespace detail

namespace detail {

using quad = __float128;

// Taylor-series propagation of i psi' = H psi in binary128. The propagator of
// the decaying dimer is strongly non-normal (eigenvector overlaps grow like
// (gamma/v)^N), so rounding errors injected at one time can be amplified by
// many orders of magnitude later on; 113-bit arithmetic keeps that floor far
// below double resolution.
class QuadTaylor {
public:
    // Matrix elements are rebuilt from the model parameters in binary128;
    // rounding them to double would already break the SU(2) structure at the
    // 1e-16 level.
    explicit QuadTaylor(const Hamiltonian& H)
        : n_(static_cast<std::size_t>(H.dim())), dr_(n_), di_(n_), off_(n_ > 0 ? n_ - 1 : 0) {
        const int N = H.N;
        const ModelParams& p = H.params;
        const quad eps = p.epsilon, v = p.v, gam = p.gamma;
        const quad c = quad(p.g) / quad(N);
        double bound = 0.0;
        for (std::size_t k = 0; k < n_; ++k) {
            const quad kk = static_cast<double>(k);
            const quad imbalance = quad(2) * kk - quad(N);
            dr_[k] = eps * kk - eps * (quad(N) - kk) + c / quad(2) * imbalance * imbalance;
            di_[k] = quad(-2) * gam * kk;
            if (k + 1 < n_) {
                off_[k] = v * sqrt_q(quad(static_cast<double>((k + 1) * (static_cast<std::size_t>(N) - k))));
            }
        }
        for (std::size_t k = 0; k < n_; ++k) {
            double row = std::hypot(static_cast<double>(dr_[k]), static_cast<double>(di_[k]));
            if (k > 0) row += std::abs(static_cast<double>(off_[k - 1]));
            if (k + 1 < n_) row += std::abs(static_cast<double>(off_[k]));
            bound = std::max(bound, row);
        }
        max_step_ = bound > 0.0 ? 1.0 / bound : 1.0;
    }

    static quad sqrt_q(quad x) {
        if (x <= 0) {
            return 0;
        }
        quad r = std::sqrt(static_cast<double>(x));
        for (int it = 0; it < 3; ++it) {
            r = quad(0.5) * (r + x / r);
        }
        return r;
    }

    double max_step() const { return max_step_; }

    // Advances (re, im) by dt (either sign) and returns log of the squared norm
    // removed by renormalization.
    double step(std::vector<quad>& re, std::vector<quad>& im, double dt) const {
        std::vector<quad> tr = re, ti = im, nr(n_), ni(n_);
        std::vector<quad> ar = re, ai = im;
        const quad h = dt;
        const quad tiny = 1e-33;
        for (int k = 1; k <= 200; ++k) {
            // t <- (-i h / k) H t
            const quad scale = h / k;
            quad term_norm = 0;
            for (std::size_t j = 0; j < n_; ++j) {
                quad hr = dr_[j] * tr[j] - di_[j] * ti[j];
                quad hi = dr_[j] * ti[j] + di_[j] * tr[j];
                if (j > 0) {
                    hr += off_[j - 1] * tr[j - 1];
                    hi += off_[j - 1] * ti[j - 1];
                }
                if (j + 1 < n_) {
                    hr += off_[j] * tr[j + 1];
                    hi += off_[j] * ti[j + 1];
                }
                nr[j] = scale * hi;
                ni[j] = -scale * hr;
                term_norm += nr[j] * nr[j] + ni[j] * ni[j];
            }
            tr.swap(nr);
            ti.swap(ni);
            quad acc_norm = 0;
            for (std::size_t j = 0; j < n_; ++j) {
                ar[j] += tr[j];
                ai[j] += ti[j];
                acc_norm += ar[j] * ar[j] + ai[j] * ai[j];
            }
            if (term_norm <= tiny * tiny * acc_norm) {
                break;
            }
        }
        quad norm2 = 0;
        for (std::size_t j = 0; j < n_; ++j) {
            norm2 += ar[j] * ar[j] + ai[j] * ai[j];
        }
        // 1/sqrt(norm2): double seed, two Newton steps in binary128.
        quad inv = 1.0 / std::sqrt(static_cast<double>(norm2));
        for (int it = 0; it < 3; ++it) {
            inv = inv * (quad(1.5) - quad(0.5) * norm2 * inv * inv);
        }
        for (std::size_t j = 0; j < n_; ++j) {
            re[j] = ar[j] * inv;
            im[j] = ai[j] * inv;
        }
        // log(norm2) = log(double(norm2)) loses nothing that matters here:
        // norm2 is O(1) per step.
        return std::log(static_cast<double>(norm2));
    }

private:
    std::size_t n_;
    std::vector<quad> dr_, di_, off_;
    double max_step_{1.0};
};

} // namespace detail

namespace detail {

template <class Observer>
ManyParticleState propagate_extended(const ManyParticleState& state, const Hamiltonian& H, double t0,
                                     std::span<const double> samples, Observer& observe) {
    const QuadTaylor taylor(H);
    const std::size_t n = static_cast<std::size_t>(H.dim());
    std::vector<quad> re(n), im(n);
    for (std::size_t j = 0; j < n; ++j) {
        re[j] = state.direction(static_cast<Eigen::Index>(j)).real();
        im[j] = state.direction(static_cast<Eigen::Index>(j)).imag();
    }
    double log_survival = state.log_survival;
    auto snapshot = [&]() {
        VectorXcd d(static_cast<Eigen::Index>(n));
        for (std::size_t j = 0; j < n; ++j) {
            d(static_cast<Eigen::Index>(j)) = cplx(static_cast<double>(re[j]), static_cast<double>(im[j]));
        }
        return ManyParticleState{d, log_survival};
    };
    if (samples.empty()) {
        return state;
    }
    const double dir = samples.back() >= t0 ? 1.0 : -1.0;
    double t = t0;
    for (double target : samples) {
        if (!std::isfinite(target) || dir * (target - t) < 0.0) {
            throw ValidationError("propagate: sample times must be monotone away from t0");
        }
        const double span = target - t;
        if (span != 0.0) {
            const auto steps = static_cast<long>(std::ceil(std::abs(span) / taylor.max_step()));
            const double dt = span / static_cast<double>(steps);
            for (long k = 0; k < steps; ++k) {
                log_survival += taylor.step(re, im, dt);
            }
        }
        t = target;
        observe(t, snapshot());
    }
    return snapshot();
}

} // namespace detail

// Solves i d|psi>/dt = H |psi> from t0 through each sample time (monotone,
// possibly backwards), reporting observe(t, state) at every sample.
template <class Observer>
ManyParticleState propagate_sampled(const ManyParticleState& state, const Hamiltonian& H, double t0,
                                    std::span<const double> samples,
                                    const SolverSettings& settings, Observer&& observe) {
    state.validate();
    if (state.direction.size() != H.dim()) {
        throw ValidationError("propagate: state and Hamiltonian dimensions differ");
    }
    if (settings.extended_precision) {
        return detail::propagate_extended(state, H, t0, samples, observe);
    }
    VectorXcd psi = state.direction;
    double log_survival = state.log_survival;
    const cplx minus_i(0.0, -1.0);
    auto rhs = [&H, minus_i](double, const VectorXcd& x) -> VectorXcd { return minus_i * H.apply(x); };
    ode::integrate(rhs, psi, t0, samples, settings,
                   [&](double t, const VectorXcd& x) {
                       observe(t, ManyParticleState{x, log_survival});
                   },
                   detail::Renormalize{&log_survival});
    return {psi, log_survival};
}

inline ManyParticleState propagate(const ManyParticleState& state, const Hamiltonian& H, double t0,
                                   double t1, const SolverSettings& settings = {}) {
    if (t1 < t0) {
        throw ValidationError("propagate: t1 must be >= t0");
    }
    const double samples[1] = {t1};
    return propagate_sampled(state, H, t0, std::span<const double>(samples), settings,
                             [](double, const ManyParticleState&) {});
}

// Observable records on a time grid starting at t0.
inline std::vector<ObservableRecord> evolve_observables(const ManyParticleState& state,
                                                        const Hamiltonian& H, double t0,
                                                        std::span<const double> samples,
                                                        const SolverSettings& settings = {}) {
    std::vector<ObservableRecord> out;
    out.reserve(samples.size());
    propagate_sampled(state, H, t0, samples, settings,
                      [&out](double t, const ManyParticleState& s) { out.push_back(observables(s, t)); });
    return out;
}

// ------------------------------------------------- Exact evolution equations

// Right-hand sides of the exact equations of motion for <L_x>, <L_y>, <L_z>
// and for log<psi|psi>, evaluated from expectations and covariances.
struct HeisenbergRates {
    std::array<double, 3> dL{};
    double dlog_survival{0.0};
};

inline HeisenbergRates heisenberg_rates(const ManyParticleState& s, const ModelParams& p) {
    const int N = s.N();
    const double c = p.microscopic_interaction(N);
    const VectorXcd& d = s.direction;
    const MatrixXcd Lx = operator_matrix(Observable::Lx, N);
    const MatrixXcd Ly = operator_matrix(Observable::Ly, N);
    const MatrixXcd Lz = operator_matrix(Observable::Lz, N);
    const double ex = expectation(Lx, d), ey = expectation(Ly, d), ez = expectation(Lz, d);
    auto cov = [&](const MatrixXcd& A, double ea, const MatrixXcd& B, double eb) {
        return 0.5 * anticommutator_expectation(A, B, d) - ea * eb;
    };
    // Covariances with N vanish identically inside a fixed-N sector.
    HeisenbergRates r;
    r.dL[0] = -2.0 * p.epsilon * ey - 2.0 * c * anticommutator_expectation(Ly, Lz, d) -
              2.0 * p.gamma * (2.0 * cov(Lx, ex, Lz, ez) + covariance(s, Observable::Lx, Observable::N));
    r.dL[1] = 2.0 * p.epsilon * ex + 2.0 * c * anticommutator_expectation(Lx, Lz, d) -
              2.0 * p.v * ez -
              2.0 * p.gamma * (2.0 * cov(Ly, ey, Lz, ez) + covariance(s, Observable::Ly, Observable::N));
    r.dL[2] = 2.0 * p.v * ey -
              2.0 * p.gamma * (2.0 * cov(Lz, ez, Lz, ez) + covariance(s, Observable::Lz, Observable::N));
    r.dlog_survival = -2.0 * p.gamma * (2.0 * ez + N);
    return r;
}

struct HeisenbergCheck {
    HeisenbergRates predicted;                // exact right-hand sides
    HeisenbergRates measured;                 // central finite differences
    std::array<double, 3> residual{};         // predicted - measured, per component
    double log_survival_residual{0.0};
};

// Compares the exact right-hand sides with a fourth-order central difference of
// propagated expectations (step h). The short propagations use `settings`,
// which should be much tighter than h^4.
inline HeisenbergCheck heisenberg_residual(const ManyParticleState& s, const ModelParams& p,
                                           double h = 1e-4,
                                           const SolverSettings& settings = tight_settings()) {
    s.validate();
    if (!(h > 0.0)) {
        throw ValidationError("heisenberg_residual: step must be positive");
    }
    const int N = s.N();
    const Hamiltonian H = build_hamiltonian(p, N);

    struct Sample {
        std::array<double, 3> L;
        double log_survival;
    };
    auto sample = [&](double dt) {
        ManyParticleState st = s;
        if (dt != 0.0) {
            const double grid[1] = {dt};
            st = propagate_sampled(s, H, 0.0, std::span<const double>(grid), settings,
                                   [](double, const ManyParticleState&) {});
        }
        const ObservableRecord o = observables(st);
        return Sample{{o.sx * N, o.sy * N, o.sz * N}, st.log_survival};
    };
    const Sample m2 = sample(-2.0 * h), m1 = sample(-h), p1 = sample(h), p2 = sample(2.0 * h);
    auto stencil = [h](double fm2, double fm1, double fp1, double fp2) {
        return (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
    };

    HeisenbergCheck out;
    out.predicted = heisenberg_rates(s, p);
    for (int i = 0; i < 3; ++i) {
        out.measured.dL[i] = stencil(m2.L[i], m1.L[i], p1.L[i], p2.L[i]);
        out.residual[i] = out.predicted.dL[i] - out.measured.dL[i];
    }
    out.measured.dlog_survival =
        stencil(m2.log_survival, m1.log_survival, p1.log_survival, p2.log_survival);
    out.log_survival_residual = out.predicted.dlog_survival - out.measured.dlog_survival;
    return out;
}

// Largest deviation, over i, j in {x, y, z}, between <[L_i, L_j]_+> and
// 2(1 - 1/N)<L_i><L_j> + delta_ij N/2 in the coherent state |x1, x2>.
inline double factorization_check(cplx x1, cplx x2, int N) {
    const ManyParticleState s = coherent_state(x1, x2, N);
    const std::array<MatrixXcd, 3> L = {operator_matrix(Observable::Lx, N),
                                        operator_matrix(Observable::Ly, N),
                                        operator_matrix(Observable::Lz, N)};
    std::array<double, 3> mean{};
    for (int i = 0; i < 3; ++i) {
        mean[i] = expectation(L[i], s.direction);
    }
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const double lhs = anticommutator_expectation(L[i], L[j], s.direction);
            const double rhs = 2.0 * (1.0 - 1.0 / N) * mean[i] * mean[j] + (i == j ? 0.5 * N : 0.0);
            worst = std::max(worst, std::abs(lhs - rhs));
        }
    }
    return worst;
}

} // namespace bhdimer::fock
