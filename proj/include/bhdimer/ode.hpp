// ode.hpp — explicit Runge-Kutta drivers over Eigen column vectors (real or
// complex): the adaptive Dormand-Prince 5(4) pair and fixed-step classical RK4.
//
// Both drivers step exactly onto every requested sample time, so output grids
// never contain solver-internal points. A post-step hook may rewrite the state
// after each accepted step (the engines use it to renormalize directions and
// fold the discarded magnitude into a log-norm accumulator).

#pragma once

#include "bhdimer/params.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <type_traits>
#include <utility>
#include <sstream>
#include <vector>

namespace bhdimer::ode {

struct NoPostStep {
    template <class Vec>
    void operator()(double, Vec&) const noexcept {}
};

struct StepStats {
    long accepted{0};
    long rejected{0};
    long evaluations{0};
};

namespace detail {

// Dormand-Prince 5(4) tableau.
inline constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
inline constexpr double a21 = 1.0 / 5.0;
inline constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
inline constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
inline constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                        a54 = -212.0 / 729.0;
inline constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                        a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
inline constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                        b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
inline constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                        e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

template <class Vec>
double weighted_rms(const Vec& err, const Vec& y0, const Vec& y1, const SolverSettings& s) {
    const Eigen::Index n = err.size();
    if (n == 0) {
        return 0.0;
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double scale = s.atol + s.rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
        const double r = std::abs(err(i)) / scale;
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

// Starting step after Hairer, Norsett & Wanner (II.4).
template <class Vec, class F>
double initial_step(F& f, double t0, const Vec& y0, const Vec& f0, double dir,
                    const SolverSettings& s, StepStats& stats) {
    const double d0 = weighted_rms(y0, y0, y0, s);
    const double d1 = weighted_rms(f0, y0, y0, s);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    const Vec y1 = y0 + (dir * h0) * f0;
    const Vec f1 = f(t0 + dir * h0, y1);
    ++stats.evaluations;
    const double d2 = weighted_rms(Vec(f1 - f0), y0, y0, s) / h0;
    const double dmax = std::max(d1, d2);
    const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
    return std::min(100.0 * h0, h1);
}

inline void check_samples(double t0, std::span<const double> samples, double dir) {
    double prev = t0;
    for (double t : samples) {
        if (!std::isfinite(t) || dir * (t - prev) < 0.0) {
            throw ValidationError("ode: sample times must be finite and monotone away from t0");
        }
        prev = t;
    }
}

} // namespace detail

// Integrates y' = f(t, y) from t0 through every time in `samples`, calling
// observe(t, y) at each of them. `samples` may run backwards from t0 as long as
// they are monotone. Returns solver statistics; y holds the final state.
template <class Vec, class F, class Observer, class PostStep = NoPostStep>
StepStats integrate(F&& f, Vec& y, double t0, std::span<const double> samples,
                    const SolverSettings& settings, Observer&& observe, PostStep&& post = {}) {
    settings.validate();
    StepStats stats;
    if (samples.empty()) {
        return stats;
    }
    const double dir = samples.back() >= t0 ? 1.0 : -1.0;
    detail::check_samples(t0, samples, dir);

    double t = t0;
    std::size_t next = 0;
    while (next < samples.size() && samples[next] == t) {
        observe(t, std::as_const(y));
        ++next;
    }

    if (!settings.adaptive()) {
        const double h = settings.fixed_step;
        while (next < samples.size()) {
            const double target = samples[next];
            while (dir * (target - t) > 0.0) {
                double step = std::min(h, dir * (target - t));
                // Snap onto the target when the remainder is at rounding level.
                const double left = dir * (target - t) - step;
                if (left > 0.0 && left < 1e-12 * std::max(1.0, std::abs(target))) {
                    step += left;
                }
                const double hs = dir * step;
                const Vec k1 = f(t, y);
                const Vec k2 = f(t + 0.5 * hs, Vec(y + (0.5 * hs) * k1));
                const Vec k3 = f(t + 0.5 * hs, Vec(y + (0.5 * hs) * k2));
                const Vec k4 = f(t + hs, Vec(y + hs * k3));
                stats.evaluations += 4;
                y += (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                t = (std::abs(target - (t + hs)) <= 1e-12 * std::max(1.0, std::abs(target)))
                        ? target
                        : t + hs;
                post(t, y);
                ++stats.accepted;
                if (stats.accepted > settings.max_steps) {
                    throw IntegrationError("ode: maximum number of steps exceeded", t);
                }
            }
            t = target;
            observe(t, std::as_const(y));
            ++next;
        }
        return stats;
    }

    using namespace detail;
    Vec k1 = f(t, y);
    ++stats.evaluations;
    double h = settings.initial_step > 0.0 ? settings.initial_step
                                            : initial_step(f, t, y, k1, dir, settings, stats);

    while (next < samples.size()) {
        const double target = samples[next];
        if (dir * (target - t) <= 0.0) {
            observe(t, std::as_const(y));
            ++next;
            continue;
        }
        const double span = dir * (target - t);
        bool hits_target = false;
        double step = h;
        if (step >= span) {
            step = span;
            hits_target = true;
        }
        const double hmin = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t));
        if (step < hmin) {
            std::ostringstream os;
            os << "ode: step size underflow at t=" << t;
            throw IntegrationError(os.str(), t);
        }
        const double hs = dir * step;
        const Vec k2 = f(t + c2 * hs, Vec(y + hs * (a21 * k1)));
        const Vec k3 = f(t + c3 * hs, Vec(y + hs * (a31 * k1 + a32 * k2)));
        const Vec k4 = f(t + c4 * hs, Vec(y + hs * (a41 * k1 + a42 * k2 + a43 * k3)));
        const Vec k5 = f(t + c5 * hs, Vec(y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
        const Vec k6 =
            f(t + hs, Vec(y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)));
        const Vec y_new = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const Vec k7 = f(t + hs, y_new);
        stats.evaluations += 6;
        const Vec err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        const double en = weighted_rms(err, y, y_new, settings);

        if (en <= 1.0 && std::isfinite(en)) {
            t = hits_target ? target : t + hs;
            y = y_new;
            post(t, y);
            if constexpr (std::is_same_v<std::decay_t<PostStep>, NoPostStep>) {
                k1 = k7;
            } else {
                // The hook may rescale y, which invalidates the FSAL stage.
                k1 = f(t, y);
                ++stats.evaluations;
            }
            ++stats.accepted;
            const double factor = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
            // Keep the controller's own step; a truncated final step says
            // nothing about the scale of the next one.
            h = hits_target ? std::max(h, step * factor) : step * factor;
            if (hits_target) {
                observe(t, std::as_const(y));
                ++next;
            }
        } else {
            ++stats.rejected;
            const double factor =
                std::isfinite(en) ? std::clamp(0.9 * std::pow(en, -0.2), 0.2, 1.0) : 0.2;
            h = step * factor;
        }
        if (stats.accepted + stats.rejected > settings.max_steps) {
            throw IntegrationError("ode: maximum number of steps exceeded", t);
        }
    }
    return stats;
}

// Convenience wrapper: integrate from t0 to t1 without intermediate output.
template <class Vec, class F, class PostStep = NoPostStep>
StepStats integrate_to(F&& f, Vec& y, double t0, double t1, const SolverSettings& settings,
                       PostStep&& post = {}) {
    const double samples[1] = {t1};
    return integrate(std::forward<F>(f), y, t0, std::span<const double>(samples), settings,
                     [](double, const Vec&) {}, std::forward<PostStep>(post));
}

// Uniform grid of `count` points on [t0, t1] (count >= 2), with the end points
// reproduced exactly.
inline std::vector<double> uniform_grid(double t0, double t1, std::size_t count) {
    if (count < 2) {
        throw ValidationError("uniform_grid: need at least two points");
    }
    std::vector<double> ts(count);
    const double dt = (t1 - t0) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) {
        ts[i] = t0 + dt * static_cast<double>(i);
    }
    ts.back() = t1;
    return ts;
}

} // namespace bhdimer::ode
