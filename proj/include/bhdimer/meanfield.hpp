// meanfield.hpp — nonlinear Bloch equations for the per-particle spin
// (s_x, s_y, s_z) with the decaying norm n, and the equivalent discrete
// non-hermitian GPE for the spinor (psi1, psi2).

#pragma once

#include "bhdimer/ode.hpp"
#include "bhdimer/params.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <span>
#include <vector>

namespace bhdimer::meanfield {

using cplx = std::complex<double>;

inline constexpr double kSphereTolerance = 1e-9;

struct BlochState {
    double sx{0.0}, sy{0.0}, sz{0.5};
    double n{1.0};

    double radius_squared() const { return sx * sx + sy * sy + sz * sz; }
    double sphere_defect() const { return std::abs(radius_squared() - 0.25); }

    void validate(double tol = kSphereTolerance) const {
        if (!std::isfinite(sx) || !std::isfinite(sy) || !std::isfinite(sz) || !std::isfinite(n)) {
            throw ValidationError("BlochState: non-finite component");
        }
        if (sphere_defect() > tol) {
            throw ValidationError("BlochState: initial state is off the sphere s^2 = 1/4");
        }
        if (!(n > 0.0)) {
            throw ValidationError("BlochState: norm n must be positive");
        }
    }
};

inline BlochState north_pole() { return {0.0, 0.0, 0.5, 1.0}; }
inline BlochState south_pole() { return {0.0, 0.0, -0.5, 1.0}; }

struct BlochRates {
    double dsx{0.0}, dsy{0.0}, dsz{0.0}, dn{0.0};
};

// Right-hand side of the nonlinear Bloch equations and of the norm decay.
inline BlochRates bloch_rhs(const BlochState& s, const ModelParams& p) {
    const double eps = p.epsilon, v = p.v, g = p.g, gam = p.gamma;
    BlochRates r;
    r.dsx = -2.0 * eps * s.sy - 4.0 * g * s.sz * s.sy + 4.0 * gam * s.sz * s.sx;
    r.dsy = 2.0 * eps * s.sx + 4.0 * g * s.sz * s.sx - 2.0 * v * s.sz + 4.0 * gam * s.sz * s.sy;
    r.dsz = 2.0 * v * s.sy - gam * (1.0 - 4.0 * s.sz * s.sz);
    r.dn = -2.0 * gam * (2.0 * s.sz + 1.0) * s.n;
    return r;
}

struct BlochSample {
    double t{0.0};
    BlochState s;
    double log_n{0.0};
};

// Integrates the Bloch flow; the norm is carried as log n so it never
// underflows. Emits one sample per requested time.
inline std::vector<BlochSample> integrate_bloch(const BlochState& s0, const ModelParams& p,
                                                double t0, std::span<const double> samples,
                                                const SolverSettings& settings = {}) {
    s0.validate();
    using Vec4 = Eigen::Vector4d;
    auto rhs = [&p](double, const Vec4& y) -> Vec4 {
        const BlochRates r = bloch_rhs({y(0), y(1), y(2), 1.0}, p);
        return {r.dsx, r.dsy, r.dsz, -2.0 * p.gamma * (2.0 * y(2) + 1.0)};
    };
    Vec4 y(s0.sx, s0.sy, s0.sz, std::log(s0.n));
    std::vector<BlochSample> out;
    out.reserve(samples.size());
    ode::integrate(rhs, y, t0, samples, settings, [&out](double t, const Vec4& x) {
        out.push_back({t, {x(0), x(1), x(2), std::exp(x(3))}, x(3)});
    });
    return out;
}

inline std::vector<BlochSample> integrate_bloch(const BlochState& s0, const ModelParams& p,
                                                double t0, double t1, std::size_t count,
                                                const SolverSettings& settings = {}) {
    const std::vector<double> grid = ode::uniform_grid(t0, t1, count);
    return integrate_bloch(s0, p, t0, grid, settings);
}

// -------------------------------------------------------------------- Spinor

struct SpinorState {
    cplx psi1{1.0, 0.0};
    cplx psi2{0.0, 0.0};
    double beta{0.0};

    double norm() const { return std::norm(psi1) + std::norm(psi2); }
};

// kappa = (|psi1|^2 - |psi2|^2) / n; the unnormalized variant drops the 1/n
// and gives a different (non-equivalent) dynamics.
enum class KappaConvention { Normalized, Unnormalized };

inline double kappa(const SpinorState& s, KappaConvention conv = KappaConvention::Normalized) {
    const double diff = std::norm(s.psi1) - std::norm(s.psi2);
    return conv == KappaConvention::Normalized ? diff / s.norm() : diff;
}

struct SpinorRates {
    cplx dpsi1, dpsi2;
    double dbeta{0.0};
};

// Discrete non-hermitian GPE:
//   i psi1' = (eps + g kappa - 2i gamma) psi1 + v psi2
//   i psi2' = v psi1 - (eps + g kappa) psi2,     beta' = -g kappa^2
inline SpinorRates gpe_rhs(const SpinorState& s, const ModelParams& p,
                           KappaConvention conv = KappaConvention::Normalized) {
    if (!(s.norm() > 0.0)) {
        throw ValidationError("gpe_rhs: zero spinor");
    }
    const double k = kappa(s, conv);
    const cplx minus_i(0.0, -1.0);
    const double shift = p.epsilon + p.g * k;
    SpinorRates r;
    r.dpsi1 = minus_i * (cplx(shift, -2.0 * p.gamma) * s.psi1 + p.v * s.psi2);
    r.dpsi2 = minus_i * (p.v * s.psi1 - shift * s.psi2);
    r.dbeta = -p.g * k * k;
    return r;
}

struct SpinorSample {
    double t{0.0};
    SpinorState psi;
    double log_n{0.0};  // log(|psi1|^2 + |psi2|^2)
};

// Integrates the GPE. With the normalized kappa the flow is homogeneous of
// degree one in psi, so the spinor is renormalized after every step and its
// norm tracked as log n; the unnormalized variant is integrated as is.
inline std::vector<SpinorSample> integrate_gpe(const SpinorState& s0, const ModelParams& p,
                                               double t0, std::span<const double> samples,
                                               const SolverSettings& settings = {},
                                               KappaConvention conv = KappaConvention::Normalized) {
    const double n0 = s0.norm();
    if (!(n0 > 0.0) || !std::isfinite(n0) || !std::isfinite(s0.beta)) {
        throw ValidationError("integrate_gpe: initial spinor must be finite and nonzero");
    }
    using Vec3c = Eigen::Vector3cd;  // (psi1, psi2, beta)
    auto rhs = [&p, conv](double, const Vec3c& y) -> Vec3c {
        const SpinorRates r = gpe_rhs({y(0), y(1), y(2).real()}, p, conv);
        return {r.dpsi1, r.dpsi2, cplx(r.dbeta, 0.0)};
    };
    std::vector<SpinorSample> out;
    out.reserve(samples.size());

    if (conv == KappaConvention::Unnormalized) {
        Vec3c y(s0.psi1, s0.psi2, cplx(s0.beta, 0.0));
        ode::integrate(rhs, y, t0, samples, settings, [&out](double t, const Vec3c& x) {
            const SpinorState st{x(0), x(1), x(2).real()};
            out.push_back({t, st, std::log(st.norm())});
        });
        return out;
    }

    const double r0 = std::sqrt(n0);
    Vec3c y(s0.psi1 / r0, s0.psi2 / r0, cplx(s0.beta, 0.0));
    double log_n = std::log(n0);
    auto renormalize = [&log_n](double, Vec3c& x) {
        const double n = std::norm(x(0)) + std::norm(x(1));
        log_n += std::log(n);
        const double r = std::sqrt(n);
        x(0) /= r;
        x(1) /= r;
    };
    ode::integrate(rhs, y, t0, samples, settings,
                   [&out, &log_n](double t, const Vec3c& x) {
                       const double scale = std::exp(0.5 * log_n);
                       out.push_back({t, {scale * x(0), scale * x(1), x(2).real()}, log_n});
                   },
                   renormalize);
    return out;
}

// ------------------------------------------------------------ Conversions

// s_x + i s_y = psi1^* psi2 / n,  s_z = (|psi1|^2 - |psi2|^2) / (2n).
inline BlochState bloch_from_spinor(const SpinorState& s) {
    const double n = s.norm();
    if (!(n > 0.0)) {
        throw ValidationError("bloch_from_spinor: zero spinor");
    }
    const cplx w = std::conj(s.psi1) * s.psi2 / n;
    return {w.real(), w.imag(), 0.5 * (std::norm(s.psi1) - std::norm(s.psi2)) / n, n};
}

// Inverse map in the gauge psi2 >= 0 real (psi1 >= 0 real at the north pole,
// where psi2 vanishes).
inline SpinorState spinor_from_bloch(const BlochState& s, double beta = 0.0) {
    s.validate();
    const double upper = std::max(0.0, 0.5 + s.sz);
    const double lower = std::max(0.0, 0.5 - s.sz);
    const double phase = (s.sx == 0.0 && s.sy == 0.0) ? 0.0 : std::atan2(s.sy, s.sx);
    const double r = std::sqrt(s.n);
    return {std::polar(r * std::sqrt(upper), -phase), cplx(r * std::sqrt(lower), 0.0), beta};
}

} // namespace bhdimer::meanfield
