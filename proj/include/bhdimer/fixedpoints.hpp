// fixedpoints.hpp — stationary points of the nonlinear Bloch flow, their
// stability on the sphere, the (g, gamma) region taxonomy for epsilon = 0 and
// grid scans for bifurcation boundaries.

#pragma once

#include "bhdimer/meanfield.hpp"
#include "bhdimer/params.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace bhdimer::fixedpoints {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;

inline constexpr double kResidualTolerance = 1e-10;
inline constexpr double kImagCutoff = 1e-10;
inline constexpr double kClassifyTolerance = 1e-8;
inline constexpr double kMarginalDistance = 1e-8;

enum class Stability { Center, Saddle, Sink, Source, Marginal };

inline const char* to_string(Stability s) {
    switch (s) {
    case Stability::Center: return "center";
    case Stability::Saddle: return "saddle";
    case Stability::Sink: return "sink";
    case Stability::Source: return "source";
    case Stability::Marginal: return "marginal";
    }
    return "?";
}

// Spectrum inside the tolerance band; no class can be assigned.
class MarginalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Classification {
    std::array<cplx, 2> eigenvalues{};
    Stability stability{Stability::Marginal};
    int index{0};
};

struct FixedPointRecord {
    Vec3 s{Vec3::Zero()};
    std::array<cplx, 2> eigenvalues{};
    Stability stability{Stability::Marginal};
    int index{0};  // Poincare index, 0 when marginal
    double residual{0.0};
};

inline Vec3 rhs(const Vec3& s, const ModelParams& p) {
    const auto r = meanfield::bloch_rhs({s(0), s(1), s(2), 1.0}, p);
    return {r.dsx, r.dsy, r.dsz};
}

inline double residual(const Vec3& s, const ModelParams& p) { return rhs(s, p).cwiseAbs().maxCoeff(); }

inline Eigen::Matrix3d jacobian(const Vec3& s, const ModelParams& p) {
    const double eps = p.epsilon, v = p.v, g = p.g, gam = p.gamma;
    const double sx = s(0), sy = s(1), sz = s(2);
    Eigen::Matrix3d J;
    J << 4.0 * gam * sz, -2.0 * eps - 4.0 * g * sz, -4.0 * g * sy + 4.0 * gam * sx,
        2.0 * eps + 4.0 * g * sz, 4.0 * gam * sz, 4.0 * g * sx - 2.0 * v + 4.0 * gam * sy,
        0.0, 2.0 * v, 8.0 * gam * sz;
    return J;
}

// Orthonormal basis (e1, e2) of the tangent plane at s.
inline std::pair<Vec3, Vec3> tangent_basis(const Vec3& s) {
    const Vec3 normal = s.normalized();
    Eigen::Index axis = 0;
    normal.cwiseAbs().minCoeff(&axis);
    const Vec3 seed = Vec3::Unit(axis);
    const Vec3 e1 = (seed - seed.dot(normal) * normal).normalized();
    return {e1, normal.cross(e1)};
}

inline Eigen::Matrix2d tangent_jacobian(const Vec3& s, const ModelParams& p) {
    const auto [e1, e2] = tangent_basis(s);
    Eigen::Matrix<double, 3, 2> E;
    E.col(0) = e1;
    E.col(1) = e2;
    return E.transpose() * jacobian(s, p) * E;
}

inline std::array<cplx, 2> eigenvalues2(const Eigen::Matrix2d& P) {
    const double half_tr = 0.5 * P.trace();
    const double disc = half_tr * half_tr - P.determinant();
    if (disc < 0.0) {
        const double im = std::sqrt(-disc);
        return {cplx(half_tr, im), cplx(half_tr, -im)};
    }
    const double root = std::sqrt(disc);
    // Larger-magnitude root first, the other from det / root1 for accuracy.
    const double r1 = half_tr >= 0.0 ? half_tr + root : half_tr - root;
    const double r2 = r1 != 0.0 ? P.determinant() / r1 : 0.0;
    return {cplx(std::min(r1, r2), 0.0), cplx(std::max(r1, r2), 0.0)};
}

inline Classification classify_spectrum(const std::array<cplx, 2>& ev, double tau = kClassifyTolerance) {
    Classification c;
    c.eigenvalues = ev;
    const double re1 = ev[0].real(), re2 = ev[1].real();
    const bool complex_pair = ev[0].imag() != 0.0;
    if (complex_pair && std::abs(re1) < tau && std::abs(ev[0].imag()) > tau) {
        c.stability = Stability::Center;
    } else if (!complex_pair && std::min(re1, re2) < -tau && std::max(re1, re2) > tau) {
        c.stability = Stability::Saddle;
    } else if (re1 < -tau && re2 < -tau) {
        c.stability = Stability::Sink;
    } else if (re1 > tau && re2 > tau) {
        c.stability = Stability::Source;
    } else {
        throw MarginalError("classify: eigenvalues inside the tolerance band");
    }
    c.index = c.stability == Stability::Saddle ? -1 : 1;
    return c;
}

// Linear stability of the flow restricted to the sphere at s.
inline Classification classify(const Vec3& s, const ModelParams& p, double tau = kClassifyTolerance) {
    if (residual(s, p) >= kResidualTolerance) {
        throw ValidationError("classify: point is not a fixed point of the Bloch flow");
    }
    return classify_spectrum(eigenvalues2(tangent_jacobian(s, p)), tau);
}

// ------------------------------------------------------------------ Regions

struct RegionLabel {
    char label{'a'};
    double distance_self_trapping{0.0};  // | sqrt(g^2 + gamma^2) - |v| |
    double distance_decay{0.0};          // | |gamma| - |v| |

    bool marginal(double tol = kMarginalDistance) const {
        return distance_self_trapping < tol || distance_decay < tol;
    }
};

inline RegionLabel region(const ModelParams& p) {
    p.validate();
    if (p.epsilon != 0.0) {
        throw ValidationError("region: the region taxonomy is defined for epsilon = 0 only");
    }
    const double av = std::abs(p.v);
    const double G = p.g * p.g + p.gamma * p.gamma;
    RegionLabel r;
    r.distance_self_trapping = std::abs(std::sqrt(G) - av);
    r.distance_decay = std::abs(std::abs(p.gamma) - av);
    if (G < p.v * p.v) {
        r.label = 'a';
    } else if (std::abs(p.gamma) > av) {
        r.label = 'b';
    } else {
        r.label = 'c';
    }
    return r;
}

inline bool is_exceptional_point(const ModelParams& p, double tol = kMarginalDistance) {
    return p.epsilon == 0.0 && std::abs(p.g) < tol && std::abs(std::abs(p.gamma) - std::abs(p.v)) < tol;
}

// ---------------------------------------------------------------- Polynomial

// Real roots of sum_i coeffs[i] z^(d-i) (highest degree first) via the
// eigenvalues of the companion matrix. Exact zero roots are deflated first.
inline std::vector<double> real_polynomial_roots(std::vector<double> coeffs,
                                                 double imag_cutoff = kImagCutoff) {
    while (!coeffs.empty() && coeffs.front() == 0.0) {
        coeffs.erase(coeffs.begin());
    }
    std::vector<double> roots;
    while (coeffs.size() > 1 && coeffs.back() == 0.0) {
        coeffs.pop_back();
        roots.push_back(0.0);
    }
    const std::size_t d = coeffs.empty() ? 0 : coeffs.size() - 1;
    if (d == 0) {
        return roots;
    }
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t i = 1; i < d; ++i) {
        C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
    }
    for (std::size_t i = 0; i < d; ++i) {
        C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d - 1)) = -coeffs[d - i] / coeffs[0];
    }
    const Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
    auto eval = [&coeffs](cplx z) {
        cplx p = 0.0, dp = 0.0;
        for (double c : coeffs) {
            dp = dp * z + p;
            p = p * z + c;
        }
        return std::pair{p, dp};
    };
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        cplx z = es.eigenvalues()(i);
        // Newton polish, kept only while it reduces |p|.
        for (int it = 0; it < 3; ++it) {
            const auto [p, dp] = eval(z);
            if (std::abs(dp) == 0.0) {
                break;
            }
            const cplx next = z - p / dp;
            if (std::abs(eval(next).first) >= std::abs(p)) {
                break;
            }
            z = next;
        }
        if (std::abs(z.imag()) < imag_cutoff) {
            roots.push_back(z.real());
        }
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

// Coefficients of the fixed-point quartic in s_z, highest degree first.
inline std::vector<double> fixed_point_quartic(const ModelParams& p) {
    const double G = p.g * p.g + p.gamma * p.gamma;
    const double e = p.epsilon;
    return {4.0 * G, 4.0 * p.g * e, e * e + p.v * p.v - G, -p.g * e, -0.25 * e * e};
}

// ---------------------------------------------------------------- Fixed points

namespace detail {

inline void check_params(const ModelParams& p) {
    p.validate();
    if (p.v == 0.0) {
        throw ValidationError("fixed_points: coupling v must be nonzero");
    }
}

inline void dedupe(std::vector<Vec3>& pts, double tol = 1e-8) {
    std::vector<Vec3> out;
    for (const Vec3& s : pts) {
        const bool dup = std::any_of(out.begin(), out.end(),
                                     [&](const Vec3& q) { return (q - s).cwiseAbs().maxCoeff() < tol; });
        if (!dup) {
            out.push_back(s);
        }
    }
    pts = std::move(out);
}

// A few Newton steps on the full 3-d stationarity system, each followed by a
// projection back onto the sphere: the right-hand side also vanishes off the
// sphere (along the whole rotation axis when g = gamma = 0).
inline Vec3 polish(Vec3 s, const ModelParams& p) {
    for (int it = 0; it < 4; ++it) {
        const Vec3 f = rhs(s, p);
        if (f.cwiseAbs().maxCoeff() < 1e-15) {
            break;
        }
        const Vec3 step = jacobian(s, p).completeOrthogonalDecomposition().solve(f);
        Vec3 next = s - step;
        next *= 0.5 / next.norm();
        if (!next.allFinite() || residual(next, p) >= residual(s, p)) {
            break;
        }
        s = next;
    }
    return s;
}

inline FixedPointRecord make_record(const Vec3& s, const ModelParams& p, bool force_marginal) {
    FixedPointRecord r;
    r.s = s;
    r.residual = residual(s, p);
    const Eigen::Matrix2d P = tangent_jacobian(s, p);
    r.eigenvalues = eigenvalues2(P);
    if (force_marginal) {
        return r;
    }
    try {
        const Classification c = classify_spectrum(r.eigenvalues);
        r.stability = c.stability;
        r.index = c.index;
    } catch (const MarginalError&) {
        r.stability = Stability::Marginal;
        r.index = 0;
    }
    return r;
}

} // namespace detail

// Fixed points for epsilon = 0 from the closed forms: the equatorial pair
// (exists for |gamma| <= |v|) and the off-equator pair (g^2 + gamma^2 >= v^2).
inline std::vector<Vec3> closed_form_points(const ModelParams& p) {
    detail::check_params(p);
    if (p.epsilon != 0.0) {
        throw ValidationError("closed_form_points: epsilon must be 0");
    }
    const double v = p.v, g = p.g, gam = p.gamma;
    const double G = g * g + gam * gam;
    std::vector<Vec3> pts;
    if (std::abs(gam) <= std::abs(v)) {
        const double sy = gam / (2.0 * v);
        const double sx = std::sqrt(std::max(0.0, v * v - gam * gam)) / (2.0 * std::abs(v));
        pts.emplace_back(sx, sy, 0.0);
        pts.emplace_back(-sx, sy, 0.0);
    }
    if (G > 0.0 && G >= v * v) {
        // Written without dividing by gamma; gamma -> 0 gives the hermitian
        // self-trapped pair directly.
        const double sx = v * g / (2.0 * G);
        const double sy = v * gam / (2.0 * G);
        const double sz = std::sqrt(G - v * v) / (2.0 * std::sqrt(G));
        pts.emplace_back(sx, sy, sz);
        pts.emplace_back(sx, sy, -sz);
    }
    detail::dedupe(pts);
    return pts;
}

// Fixed points for arbitrary epsilon from the real roots of the quartic,
// reconstructing (s_x, s_y) from stationarity and the sphere constraint.
inline std::vector<Vec3> quartic_points(const ModelParams& p) {
    detail::check_params(p);
    std::vector<Vec3> pts;
    for (double sz : real_polynomial_roots(fixed_point_quartic(p))) {
        if (std::abs(sz) > 0.5 + 1e-9) {
            continue;
        }
        sz = std::clamp(sz, -0.5, 0.5);
        const double sy = p.gamma * (1.0 - 4.0 * sz * sz) / (2.0 * p.v);
        const double rem = 0.25 - sy * sy - sz * sz;
        if (rem < -1e-9) {
            continue;
        }
        const double mag = std::sqrt(std::max(0.0, rem));
        for (double sign : {1.0, -1.0}) {
            Vec3 s(sign * mag, sy, sz);
            if (residual(s, p) >= kResidualTolerance) {
                s = detail::polish(s, p);
            }
            if (residual(s, p) < kResidualTolerance && std::abs(s.squaredNorm() - 0.25) < 1e-12) {
                pts.push_back(s);
            }
            if (mag == 0.0) {
                break;
            }
        }
    }
    detail::dedupe(pts);
    return pts;
}

// All fixed points with stability data. For epsilon = 0 the closed forms are
// used and their analytic structure decides centers (equatorial points and the
// gamma = 0 off-equator pair have a traceless tangent Jacobian); the numerical
// spectrum must agree. Within kMarginalDistance of a bifurcation boundary every
// record is flagged marginal instead of classified.
inline std::vector<FixedPointRecord> fixed_points(const ModelParams& p) {
    detail::check_params(p);
    std::vector<FixedPointRecord> out;
    if (p.epsilon != 0.0) {
        for (const Vec3& s : quartic_points(p)) {
            out.push_back(detail::make_record(s, p, false));
        }
        return out;
    }
    const bool marginal = region(p).marginal();
    for (const Vec3& s : closed_form_points(p)) {
        FixedPointRecord r = detail::make_record(s, p, marginal);
        if (!marginal && r.stability != Stability::Marginal) {
            const bool traceless = s(2) == 0.0 || p.gamma == 0.0;
            const bool is_center = r.stability == Stability::Center;
            if (traceless) {
                const double det = tangent_jacobian(s, p).determinant();
                const Stability expected = det > 0.0 ? Stability::Center : Stability::Saddle;
                if (r.stability != expected) {
                    throw std::logic_error("fixed_points: numerical spectrum contradicts closed form");
                }
            } else if (is_center) {
                // Decaying foci with |Re lambda| below tolerance: ambiguous.
                r.stability = Stability::Marginal;
                r.index = 0;
            }
        }
        out.push_back(r);
    }
    return out;
}

inline int index_sum(const std::vector<FixedPointRecord>& records) {
    int sum = 0;
    for (const auto& r : records) {
        sum += r.index;
    }
    return sum;
}

inline bool any_marginal(const std::vector<FixedPointRecord>& records) {
    return std::any_of(records.begin(), records.end(),
                       [](const FixedPointRecord& r) { return r.stability == Stability::Marginal; });
}

// ------------------------------------------------------------------- Scans

struct ScanSpec {
    double v{1.0};
    double g_min{0.0}, g_max{2.0};
    int g_count{201};
    double gamma_min{0.0}, gamma_max{2.0};
    int gamma_count{201};
    unsigned threads{1};

    double g_at(int i) const {
        return g_count == 1 ? g_min : g_min + (g_max - g_min) * i / (g_count - 1);
    }
    double gamma_at(int j) const {
        return gamma_count == 1 ? gamma_min : gamma_min + (gamma_max - gamma_min) * j / (gamma_count - 1);
    }
    double g_step() const { return g_count > 1 ? (g_max - g_min) / (g_count - 1) : 0.0; }
    double gamma_step() const {
        return gamma_count > 1 ? (gamma_max - gamma_min) / (gamma_count - 1) : 0.0;
    }

    void validate() const {
        if (g_count < 1 || gamma_count < 1 || !(g_max >= g_min) || !(gamma_max >= gamma_min) ||
            gamma_min < 0.0 || v == 0.0 || !std::isfinite(v)) {
            throw ValidationError("ScanSpec: invalid grid");
        }
    }
};

struct ScanCell {
    double g{0.0}, gamma{0.0};
    int count{0};
    int centers{0}, saddles{0}, sinks{0}, sources{0}, marginal{0};
    char region{'a'};
    int index_sum{0};
    bool exceptional{false};
};

// Neighbouring grid points with different fixed-point counts; the boundary lies
// between (g0, gamma0) and (g1, gamma1).
struct BoundaryCrossing {
    double g0, gamma0, g1, gamma1;
    int count0, count1;

    double g_mid() const { return 0.5 * (g0 + g1); }
    double gamma_mid() const { return 0.5 * (gamma0 + gamma1); }
};

struct ScanResult {
    ScanSpec spec;
    std::vector<ScanCell> cells;  // row-major: index = j * g_count + i (gamma rows)
    std::vector<BoundaryCrossing> crossings;
    std::vector<std::pair<double, double>> exceptional_points;

    const ScanCell& at(int i, int j) const { return cells[static_cast<std::size_t>(j) * spec.g_count + i]; }
};

inline ScanCell scan_cell(double v, double g, double gamma, double half_dg, double half_dgamma) {
    ModelParams p{0.0, v, g, gamma};
    ScanCell c;
    c.g = g;
    c.gamma = gamma;
    const auto records = fixed_points(p);
    c.count = static_cast<int>(records.size());
    for (const auto& r : records) {
        switch (r.stability) {
        case Stability::Center: ++c.centers; break;
        case Stability::Saddle: ++c.saddles; break;
        case Stability::Sink: ++c.sinks; break;
        case Stability::Source: ++c.sources; break;
        case Stability::Marginal: ++c.marginal; break;
        }
    }
    c.region = region(p).label;
    c.index_sum = index_sum(records);
    // Both boundary curves pass within grid resolution of this point; they
    // only meet at g = 0, |gamma| = |v|.
    const double av = std::abs(v);
    c.exceptional = std::abs(g) <= std::max(half_dg, kMarginalDistance) &&
                    std::abs(std::abs(gamma) - av) <= std::max(half_dgamma, kMarginalDistance);
    return c;
}

inline ScanResult bifurcation_scan(const ScanSpec& spec) {
    spec.validate();
    ScanResult res;
    res.spec = spec;
    res.cells.resize(static_cast<std::size_t>(spec.g_count) * spec.gamma_count);
    const double half_dg = 0.5 * spec.g_step();
    const double half_dgamma = 0.5 * spec.gamma_step();

    auto work = [&](int row_begin, int row_end) {
        for (int j = row_begin; j < row_end; ++j) {
            for (int i = 0; i < spec.g_count; ++i) {
                res.cells[static_cast<std::size_t>(j) * spec.g_count + i] =
                    scan_cell(spec.v, spec.g_at(i), spec.gamma_at(j), half_dg, half_dgamma);
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(spec.threads, spec.gamma_count));
    if (threads == 1) {
        work(0, spec.gamma_count);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (spec.gamma_count + static_cast<int>(threads) - 1) / static_cast<int>(threads);
        for (unsigned t = 0; t < threads; ++t) {
            const int b = static_cast<int>(t) * chunk;
            const int e = std::min(spec.gamma_count, b + chunk);
            if (b < e) {
                pool.emplace_back(work, b, e);
            }
        }
        for (auto& th : pool) {
            th.join();
        }
    }

    for (int j = 0; j < spec.gamma_count; ++j) {
        for (int i = 0; i < spec.g_count; ++i) {
            const ScanCell& c = res.at(i, j);
            if (i + 1 < spec.g_count && res.at(i + 1, j).count != c.count) {
                const ScanCell& n = res.at(i + 1, j);
                res.crossings.push_back({c.g, c.gamma, n.g, n.gamma, c.count, n.count});
            }
            if (j + 1 < spec.gamma_count && res.at(i, j + 1).count != c.count) {
                const ScanCell& n = res.at(i, j + 1);
                res.crossings.push_back({c.g, c.gamma, n.g, n.gamma, c.count, n.count});
            }
            if (c.exceptional) {
                res.exceptional_points.emplace_back(c.g, c.gamma);
            }
        }
    }
    return res;
}

} // namespace bhdimer::fixedpoints
