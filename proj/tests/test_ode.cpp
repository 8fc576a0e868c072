#include "bhdimer/ode.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <vector>

using namespace bhdimer;
using Vec1 = Eigen::Matrix<double, 1, 1>;

namespace {

SolverSettings tol(double rtol, double atol) {
    SolverSettings s;
    s.rtol = rtol;
    s.atol = atol;
    return s;
}

} // namespace

TEST(Ode, ExponentialDecayMatchesClosedForm) {
    Vec1 y(1.0);
    const auto ts = ode::uniform_grid(0.0, 5.0, 51);
    std::vector<double> got;
    ode::integrate([](double, const Vec1& x) -> Vec1 { return -x; }, y, 0.0, ts, tol(1e-11, 1e-14),
                   [&got](double, const Vec1& x) { got.push_back(x(0)); });
    ASSERT_EQ(got.size(), ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        EXPECT_NEAR(got[i], std::exp(-ts[i]), 1e-10 * std::exp(-ts[i]) + 1e-13);
    }
}

TEST(Ode, ComplexRotationKeepsModulus) {
    Eigen::VectorXcd y(2);
    y << 1.0, std::complex<double>(0.0, 1.0);
    const std::complex<double> i(0.0, 1.0);
    ode::integrate_to([i](double, const Eigen::VectorXcd& x) -> Eigen::VectorXcd { return i * x; }, y, 0.0,
                      10.0, tol(1e-11, 1e-13));
    EXPECT_NEAR(std::abs(y(0) - std::exp(i * 10.0)), 0.0, 1e-9);
    EXPECT_NEAR(std::abs(y(1) - i * std::exp(i * 10.0)), 0.0, 1e-9);
}

TEST(Ode, ObservesExactlyTheRequestedTimes) {
    Vec1 y(1.0);
    const std::vector<double> ts = {0.0, 0.1, 0.1, 0.7, 1.3, 2.9};
    std::vector<double> seen;
    ode::integrate([](double t, const Vec1&) -> Vec1 { return Vec1(std::cos(t)); }, y, 0.0, ts, {},
                   [&seen](double t, const Vec1&) { seen.push_back(t); });
    EXPECT_EQ(seen, ts);
}

TEST(Ode, IntegratesBackwards) {
    Vec1 y(std::exp(1.0));
    const std::vector<double> ts = {0.5, 0.0};
    std::vector<double> got;
    ode::integrate([](double, const Vec1& x) -> Vec1 { return x; }, y, 1.0, ts, tol(1e-11, 1e-14),
                   [&got](double, const Vec1& x) { got.push_back(x(0)); });
    EXPECT_NEAR(got[0], std::exp(0.5), 1e-9);
    EXPECT_NEAR(got[1], 1.0, 1e-9);
}

TEST(Ode, RejectsNonMonotoneSamples) {
    Vec1 y(1.0);
    const std::vector<double> ts = {0.0, 1.0, 0.5};
    EXPECT_THROW(ode::integrate([](double, const Vec1& x) -> Vec1 { return x; }, y, 0.0, ts, {},
                                [](double, const Vec1&) {}),
                 ValidationError);
}

TEST(Ode, RejectsInvalidSettings) {
    Vec1 y(1.0);
    SolverSettings s;
    s.rtol = 0.0;
    EXPECT_THROW(ode::integrate_to([](double, const Vec1& x) -> Vec1 { return x; }, y, 0.0, 1.0, s),
                 ValidationError);
    s = {};
    s.fixed_step = -1.0;
    EXPECT_THROW(ode::integrate_to([](double, const Vec1& x) -> Vec1 { return x; }, y, 0.0, 1.0, s),
                 ValidationError);
}

TEST(Ode, FixedStepRk4IsFourthOrder) {
    auto err = [](double h) {
        Vec1 y(1.0);
        SolverSettings s;
        s.fixed_step = h;
        ode::integrate_to([](double t, const Vec1& x) -> Vec1 { return Vec1(-2.0 * t * x(0)); }, y, 0.0, 2.0, s);
        return std::abs(y(0) - std::exp(-4.0));
    };
    const double ratio = err(0.05) / err(0.025);
    EXPECT_GT(ratio, 13.0);
    EXPECT_LT(ratio, 19.0);
}

TEST(Ode, FixedStepRunsAreBitIdentical) {
    auto run = [] {
        Eigen::Vector2d y(1.0, 0.0);
        SolverSettings s;
        s.fixed_step = 0.013;
        std::vector<double> out;
        ode::integrate([](double, const Eigen::Vector2d& x) -> Eigen::Vector2d { return {x(1), -std::sin(x(0))}; },
                       y, 0.0, ode::uniform_grid(0.0, 7.0, 29), s,
                       [&out](double, const Eigen::Vector2d& x) { out.push_back(x(0)); });
        return out;
    };
    EXPECT_EQ(run(), run());
}

TEST(Ode, StepUnderflowReportsTimeReached) {
    Vec1 y(1.0);
    try {
        ode::integrate_to([](double, const Vec1& x) -> Vec1 { return Vec1(x(0) * x(0)); }, y, 0.0, 2.0, {});
        FAIL() << "blow-up at t = 1 must not integrate through";
    } catch (const IntegrationError& e) {
        EXPECT_GT(e.t_reached(), 0.99);
        EXPECT_LT(e.t_reached(), 1.0);
    }
}

TEST(Ode, PostStepHookRescalesState) {
    Vec1 y(1.0);
    double log_scale = 0.0;
    auto hook = [&log_scale](double, Vec1& x) {
        log_scale += std::log(x(0));
        x(0) = 1.0;
    };
    ode::integrate_to([](double, const Vec1& x) -> Vec1 { return 3.0 * x; }, y, 0.0, 4.0, tol(1e-12, 1e-14), hook);
    EXPECT_DOUBLE_EQ(y(0), 1.0);
    EXPECT_NEAR(log_scale, 12.0, 1e-9);
}

TEST(Ode, UniformGridHitsEndpointsExactly) {
    const auto g = ode::uniform_grid(0.0, 0.3, 7);
    ASSERT_EQ(g.size(), 7u);
    EXPECT_EQ(g.front(), 0.0);
    EXPECT_EQ(g.back(), 0.3);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_GT(g[i], g[i - 1]);
    EXPECT_THROW(ode::uniform_grid(0.0, 1.0, 1), ValidationError);
}
