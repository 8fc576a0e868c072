#include "bhdimer/fock.hpp"
#include "bhdimer/meanfield.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <random>

using namespace bhdimer;
using namespace bhdimer::fock;
using cplx = std::complex<double>;

namespace {

SolverSettings tight(double rtol = 1e-12, double atol = 1e-14) {
    SolverSettings s;
    s.rtol = rtol;
    s.atol = atol;
    return s;
}

ManyParticleState random_state(int N, std::mt19937_64& rng) {
    Eigen::VectorXcd v(N + 1);
    for (int k = 0; k <= N; ++k) v(k) = oracle::random_complex(rng);
    return from_amplitudes(v);
}

} // namespace

// ---------------------------------------------------------------- Hamiltonian

TEST(FockHamiltonian, SingleParticleInteractionFree) {
    const auto H = build_hamiltonian({0.0, 1.0, 0.0, 0.0}, 1).dense();
    Eigen::Matrix2cd expected;
    expected << 0.0, 1.0, 1.0, 0.0;
    EXPECT_LT((H - expected).norm(), 1e-15);
}

TEST(FockHamiltonian, SingleParticleAllTerms) {
    const auto H = build_hamiltonian({0.5, 1.0, 2.0, 0.25}, 1);
    EXPECT_NEAR(std::abs(H.diag(0) - cplx(0.5, 0.0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(H.diag(1) - cplx(1.5, -0.5)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(H.off(0) - 1.0), 0.0, 1e-15);
}

TEST(FockHamiltonian, TwoParticleLadderElements) {
    const auto H = build_hamiltonian({0.0, 1.0, 0.0, 0.0}, 2);
    EXPECT_NEAR(H.off(0).real(), std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(H.off(1).real(), std::sqrt(2.0), 1e-15);
    EXPECT_LT(H.diag.norm(), 1e-15);
}

TEST(FockHamiltonian, MatchesSecondQuantizedConstruction) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2.0, 2.0), ug(0.0, 1.5);
    for (int N = 1; N <= 6; ++N) {
        for (int trial = 0; trial < 5; ++trial) {
            const ModelParams p{u(rng), u(rng), u(rng), ug(rng)};
            const auto H = build_hamiltonian(p, N).dense();
            const auto ref = oracle::TwoMode(N).hamiltonian(p.epsilon, p.v, p.g, p.gamma);
            EXPECT_LT((H - ref).cwiseAbs().maxCoeff(), 1e-12) << "N=" << N << " " << p.to_string();
        }
    }
}

TEST(FockHamiltonian, ComplexSymmetricAndHermitianWithoutDecay) {
    const auto H = build_hamiltonian({0.3, 0.7, 1.1, 0.4}, 9).dense();
    EXPECT_LT((H - H.transpose()).norm(), 1e-15);
    EXPECT_GT((H - H.adjoint()).norm(), 1.0);
    const auto Hh = build_hamiltonian({0.3, 0.7, 1.1, 0.0}, 9).dense();
    EXPECT_LT((Hh - Hh.adjoint()).norm(), 1e-15);
}

TEST(FockHamiltonian, DimensionIsNPlusOne) {
    for (int N : {1, 2, 7, 40}) {
        const auto H = build_hamiltonian({0.1, 1.0, 0.2, 0.3}, N);
        EXPECT_EQ(H.dim(), N + 1);
        EXPECT_EQ(H.dense().rows(), N + 1);
    }
}

TEST(FockHamiltonian, RejectsInvalidInput) {
    EXPECT_THROW(build_hamiltonian({0.0, 1.0, 0.0, 0.0}, 0), ValidationError);
    EXPECT_THROW(build_hamiltonian({0.0, 1.0, 0.0, -0.1}, 3), ValidationError);
    EXPECT_THROW(build_hamiltonian({std::nan(""), 1.0, 0.0, 0.0}, 3), ValidationError);
    EXPECT_THROW(build_hamiltonian({0.0, INFINITY, 0.0, 0.0}, 3), ValidationError);
}

// -------------------------------------------------------------- Coherent states

TEST(FockCoherent, NorthPole) {
    const auto s = coherent_state(1.0, 0.0, 5);
    EXPECT_NEAR(std::abs(s.direction(5) - 1.0), 0.0, 1e-15);
    EXPECT_LT(s.direction.head(5).norm(), 1e-15);
    EXPECT_EQ(s.log_survival, 0.0);
}

TEST(FockCoherent, BalancedTwoParticles) {
    const double r = 1.0 / std::sqrt(2.0);
    const auto s = coherent_state(r, r, 2);
    EXPECT_NEAR(s.direction(0).real(), 0.5, 1e-15);
    EXPECT_NEAR(s.direction(1).real(), r, 1e-15);
    EXPECT_NEAR(s.direction(2).real(), 0.5, 1e-15);
    EXPECT_NEAR(s.log_survival, 0.0, 1e-15);
}

TEST(FockCoherent, NormLaw) {
    const auto s = coherent_state(1.0, 1.0, 2);
    const auto ref = coherent_state(1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 2);
    EXPECT_LT((s.direction - ref.direction).norm(), 1e-15);
    EXPECT_NEAR(s.log_survival, 2.0 * std::log(2.0), 1e-15);
}

TEST(FockCoherent, MatchesBinomialExpansion) {
    std::mt19937_64 rng(3);
    for (int N : {1, 3, 10, 25, 40}) {
        for (int trial = 0; trial < 5; ++trial) {
            const cplx x1 = oracle::random_complex(rng), x2 = oracle::random_complex(rng);
            const auto s = coherent_state(x1, x2, N);
            const auto ref = oracle::coherent_amplitudes(x1, x2, N);
            EXPECT_LT((s.amplitudes() - ref).norm() / ref.norm(), 1e-12);
            EXPECT_NEAR(s.log_survival, N * std::log(std::norm(x1) + std::norm(x2)), 1e-12 * N);
        }
    }
}

TEST(FockCoherent, RejectsZeroSpinor) {
    EXPECT_THROW(coherent_state(0.0, 0.0, 3), ValidationError);
    EXPECT_THROW(coherent_state(1.0, 0.0, 0), ValidationError);
}

// ----------------------------------------------------------------- Observables

TEST(FockObservables, PolarFockState) {
    const auto o = observables(fock_state(7, 7));
    EXPECT_NEAR(o.sz, 0.5, 1e-15);
    EXPECT_NEAR(o.sx, 0.0, 1e-15);
    EXPECT_NEAR(o.sy, 0.0, 1e-15);
}

TEST(FockObservables, CoherentOnEquator) {
    const double r = 1.0 / std::sqrt(2.0);
    for (int N : {1, 4, 17}) {
        const auto ox = observables(coherent_state(r, r, N));
        EXPECT_NEAR(ox.sx, 0.5, 1e-13);
        EXPECT_NEAR(ox.sy, 0.0, 1e-13);
        EXPECT_NEAR(ox.sz, 0.0, 1e-13);
        const auto oy = observables(coherent_state(r, cplx(0.0, r), N));
        EXPECT_NEAR(oy.sx, 0.0, 1e-13);
        EXPECT_NEAR(oy.sy, 0.5, 1e-13);
        EXPECT_NEAR(oy.sz, 0.0, 1e-13);
    }
}

TEST(FockObservables, AgreeWithLadderOperatorMatrices) {
    std::mt19937_64 rng(5);
    for (int N = 1; N <= 6; ++N) {
        const oracle::TwoMode tm(N);
        EXPECT_LT((operator_matrix(Observable::Lx, N) - tm.Lx()).norm(), 1e-13);
        EXPECT_LT((operator_matrix(Observable::Ly, N) - tm.Ly()).norm(), 1e-13);
        EXPECT_LT((operator_matrix(Observable::Lz, N) - tm.Lz()).norm(), 1e-13);
        for (int trial = 0; trial < 4; ++trial) {
            const auto s = random_state(N, rng);
            const auto o = observables(s);
            const auto psi = s.amplitudes();
            EXPECT_NEAR(o.sx, oracle::expect(tm.Lx(), psi) / N, 1e-13);
            EXPECT_NEAR(o.sy, oracle::expect(tm.Ly(), psi) / N, 1e-13);
            EXPECT_NEAR(o.sz, oracle::expect(tm.Lz(), psi) / N, 1e-13);
        }
    }
}

TEST(FockObservables, PopulationsSumToSurvivalAndVectorInsideBall) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        const int N = 1 + trial % 12;
        auto s = random_state(N, rng);
        s.log_survival = -0.1 * trial;
        const auto o = observables(s);
        EXPECT_NEAR(o.pop1 + o.pop2, o.survival, 1e-12);
        EXPECT_LE(o.sx * o.sx + o.sy * o.sy + o.sz * o.sz, 0.25 + 1e-12);
    }
    const auto c = observables(coherent_state(cplx(0.3, 0.2), cplx(-0.4, 0.9), 11));
    EXPECT_NEAR(c.sx * c.sx + c.sy * c.sy + c.sz * c.sz, 0.25, 1e-12);
}

TEST(FockCovariance, Examples) {
    for (int N : {1, 3, 8}) {
        const auto top = fock_state(N, N);
        EXPECT_NEAR(covariance(top, Observable::Lz, Observable::Lz), 0.0, 1e-13);
        EXPECT_NEAR(covariance(top, Observable::Lx, Observable::Lx), N / 4.0, 1e-12);
    }
    std::mt19937_64 rng(2);
    for (int N : {2, 5, 9}) {
        const auto s = random_state(N, rng);
        EXPECT_NEAR(covariance(s, Observable::Lz, Observable::N), 0.0, 1e-12);
        EXPECT_NEAR(covariance(s, Observable::Lx, Observable::N), 0.0, 1e-12);
        const MatrixXcd Lz = operator_matrix(Observable::Lz, N), Nop = operator_matrix(Observable::N, N);
        EXPECT_NEAR(0.5 * anticommutator_expectation(Lz, Nop, s.direction), N * expectation(Lz, s.direction),
                    1e-12);
    }
}

// ----------------------------------------------------------------- Propagation

TEST(FockPropagate, HermitianLimitKeepsSurvivalAndEnergy) {
    std::mt19937_64 rng(4);
    const ModelParams p{0.3, 1.0, 1.5, 0.0};
    const auto H = build_hamiltonian(p, 8);
    const auto s0 = random_state(8, rng);
    const auto settings = tight(1e-10, 1e-13);
    const auto s1 = propagate(s0, H, 0.0, 7.0, settings);
    EXPECT_NEAR(s1.log_survival, s0.log_survival, 1e-9);
    const auto Hd = H.dense();
    EXPECT_NEAR(expectation(Hd, s1.direction), expectation(Hd, s0.direction), 1e-8);
}

TEST(FockPropagate, RabiHalfCycle) {
    const auto H = build_hamiltonian({0.0, 1.0, 0.0, 0.0}, 1);
    const auto s = propagate(fock_state(1, 1), H, 0.0, std::numbers::pi / 2, tight());
    const auto o = observables(s);
    EXPECT_NEAR(o.pop2, 1.0, 1e-10);
    EXPECT_NEAR(o.pop1, 0.0, 1e-10);
}

TEST(FockPropagate, DirectionStaysNormalized) {
    const auto H = build_hamiltonian({0.2, 1.0, 0.8, 0.6}, 10);
    const auto ts = ode::uniform_grid(0.0, 5.0, 41);
    propagate_sampled(coherent_state(1.0, 0.0, 10), H, 0.0, ts, {}, [](double, const ManyParticleState& s) {
        EXPECT_NEAR(s.direction.norm(), 1.0, 1e-12);
    });
}

TEST(FockPropagate, CoherenceExactnessForTwoParticles) {
    const ModelParams p{0.0, 1.0, 0.0, 0.75};
    const SolverSettings settings;  // defaults rtol 1e-9, atol 1e-12
    const auto x = meanfield::spinor_from_bloch({0.3, -0.1, std::sqrt(0.25 - 0.09 - 0.01), 1.0});
    const auto ts = ode::uniform_grid(0.0, 10.0, 101);
    const auto mp = evolve_observables(coherent_state(x.psi1, x.psi2, 2), build_hamiltonian(p, 2), 0.0, ts, settings);
    const auto mf = meanfield::integrate_bloch(meanfield::bloch_from_spinor(x), p, 0.0, ts, settings);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        EXPECT_NEAR(mp[i].sz, mf[i].s.sz, 10 * settings.rtol) << "t=" << ts[i];
        EXPECT_NEAR(mp[i].sx, mf[i].s.sx, 10 * settings.rtol) << "t=" << ts[i];
        EXPECT_NEAR(mp[i].sy, mf[i].s.sy, 10 * settings.rtol) << "t=" << ts[i];
    }
}

TEST(FockPropagate, InteractionFreeCoherentStateFollowsSingleParticlePropagator) {
    const ModelParams p{0.2, 1.0, 0.0, 0.3};
    const int N = 10;
    const cplx x1(0.6, 0.1), x2(-0.2, 0.7);
    const double t = 4.0;
    const auto s = propagate(coherent_state(x1, x2, N), build_hamiltonian(p, N), 0.0, t, tight());
    const Eigen::Vector2cd y = oracle::two_level_propagator(p.epsilon, p.v, p.gamma, t) * Eigen::Vector2cd(x1, x2);
    const auto ref = oracle::coherent_amplitudes(y(0), y(1), N);
    EXPECT_LT((s.amplitudes() - ref).norm() / ref.norm(), 1e-9);
}

TEST(FockPropagate, MatchesDenseExponentialOracle) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1.0, 1.0), ug(0.0, 0.3);
    for (int trial = 0; trial < 8; ++trial) {
        const int N = 1 + trial % 6;
        ModelParams p{u(rng), u(rng), u(rng), ug(rng)};
        if (std::abs(p.v) < 0.2) p.v = 0.5;
        const auto H = build_hamiltonian(p, N);
        const auto s0 = random_state(N, rng);
        const auto s1 = propagate(s0, H, 0.0, 10.0, tight());
        const auto ref = from_amplitudes(oracle::expm_apply(H.dense(), 10.0, s0.amplitudes()));
        EXPECT_LT((s1.direction - ref.direction).norm(), 1e-8) << p.to_string() << " N=" << N;
        EXPECT_NEAR(s1.log_survival, ref.log_survival, 1e-8);
    }
}

TEST(FockPropagate, ExtendedPrecisionAgreesWithRungeKutta) {
    const auto H = build_hamiltonian({0.1, 1.0, 0.5, 0.2}, 12);
    SolverSettings quad;
    quad.extended_precision = true;
    const auto s0 = coherent_state(0.8, cplx(0.3, 0.4), 12);
    const auto a = propagate(s0, H, 0.0, 6.0, tight());
    const auto b = propagate(s0, H, 0.0, 6.0, quad);
    EXPECT_LT((a.direction - b.direction).norm(), 1e-8);
    EXPECT_NEAR(a.log_survival, b.log_survival, 1e-9);
}

TEST(FockPropagate, BackwardThenForwardReturnsToStart) {
    const auto H = build_hamiltonian({0.1, 1.0, 0.7, 0.4}, 6);
    const auto s0 = coherent_state(0.5, cplx(0.1, 0.8), 6);
    const double back[1] = {-0.5};
    const auto sb = propagate_sampled(s0, H, 0.0, std::span<const double>(back), tight(),
                                      [](double, const ManyParticleState&) {});
    const auto sf = propagate(sb, H, -0.5, 0.0, tight());
    EXPECT_LT((sf.direction - s0.direction).norm(), 1e-10);
    EXPECT_NEAR(sf.log_survival, s0.log_survival, 1e-10);
}

TEST(FockPropagate, RejectsBadInput) {
    const auto H = build_hamiltonian({0.0, 1.0, 0.0, 0.0}, 3);
    EXPECT_THROW(propagate(fock_state(0, 3), H, 1.0, 0.0), ValidationError);
    EXPECT_THROW(propagate(fock_state(0, 4), H, 0.0, 1.0), ValidationError);
}

TEST(FockPropagate, NormDecayLaw) {
    std::mt19937_64 rng(9);
    const ModelParams p{0.3, 1.0, 1.2, 0.4};
    const int N = 7;
    const double h = 1e-4;
    std::vector<double> ts;
    for (int i = 1; i <= 10; ++i) {
        for (double off : {-h, 0.0, h}) ts.push_back(0.5 * i + off);
    }
    std::vector<ManyParticleState> states;
    propagate_sampled(random_state(N, rng), build_hamiltonian(p, N), 0.0, ts, tight(1e-13, 1e-15),
                      [&states](double, const ManyParticleState& s) { states.push_back(s); });
    ASSERT_EQ(states.size(), ts.size());
    for (std::size_t i = 0; i < ts.size(); i += 3) {
        const double fd = (states[i + 2].log_survival - states[i].log_survival) / (2.0 * h);
        const double law = -2.0 * p.gamma * (2.0 * lz_expectation(states[i + 1].direction) + N);
        EXPECT_NEAR(fd, law, 1e-6) << "t=" << ts[i + 1];
    }
}

// --------------------------------------------------- Exact evolution equations

TEST(FockHeisenberg, StationaryStateHasZeroResidual) {
    const ModelParams p{0.2, 1.0, 1.3, 0.0};
    const int N = 6;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(build_hamiltonian(p, N).dense());
    const auto s = from_amplitudes(es.eigenvectors().col(2));
    const auto r = heisenberg_residual(s, p);
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(r.residual[i], 0.0, 1e-8);
        EXPECT_NEAR(r.predicted.dL[i], 0.0, 1e-8);
    }
}

TEST(FockHeisenberg, RandomStatesSatisfyExactEquations) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-1.5, 1.5), ug(0.0, 1.0);
    for (int trial = 0; trial < 6; ++trial) {
        const ModelParams p{u(rng), u(rng), u(rng), ug(rng)};
        const auto s = random_state(6, rng);
        const auto r = heisenberg_residual(s, p, 1e-4);
        for (int i = 0; i < 3; ++i) EXPECT_LT(std::abs(r.residual[i]), 1e-6) << p.to_string();
        EXPECT_LT(std::abs(r.log_survival_residual), 1e-6);
    }
}

TEST(FockHeisenberg, CoherentStateWithoutInteractionFollowsMeanField) {
    const ModelParams p{0.4, 1.0, 0.0, 0.6};
    const int N = 9;
    const cplx x1(0.5, 0.3), x2(0.2, -0.7);
    const auto s = coherent_state(x1, x2, N);
    const auto r = heisenberg_residual(s, p);
    const auto b = meanfield::bloch_from_spinor({x1, x2, 0.0});
    const auto mf = meanfield::bloch_rhs(b, p);
    const double rates[3] = {mf.dsx, mf.dsy, mf.dsz};
    for (int i = 0; i < 3; ++i) {
        EXPECT_LT(std::abs(r.residual[i]), 1e-6);
        EXPECT_NEAR(r.predicted.dL[i] / N, rates[i], 1e-6);
    }
}

TEST(FockFactorization, RandomCoherentStates) {
    std::mt19937_64 rng(17);
    for (int N : {1, 2, 5, 13, 30, 50}) {
        for (int trial = 0; trial < 3; ++trial) {
            EXPECT_LT(factorization_check(oracle::random_complex(rng), oracle::random_complex(rng), N), 1e-10);
        }
    }
}

TEST(FockFactorization, PoleAndSingleParticle) {
    for (int N : {1, 4, 20}) {
        const auto s = coherent_state(1.0, 0.0, N);
        const MatrixXcd Lz = operator_matrix(Observable::Lz, N);
        const double lhs = anticommutator_expectation(Lz, Lz, s.direction);
        EXPECT_NEAR(lhs, 0.5 * N * N, 1e-12);
        EXPECT_NEAR(2.0 * (1.0 - 1.0 / N) * 0.25 * N * N + 0.5 * N, 0.5 * N * N, 1e-12);
        EXPECT_LT(factorization_check(1.0, 0.0, N), 1e-12);
    }
    const auto s = coherent_state(cplx(0.3, 0.1), cplx(-0.5, 0.2), 1);
    for (auto a : {Observable::Lx, Observable::Ly, Observable::Lz}) {
        for (auto b : {Observable::Lx, Observable::Ly, Observable::Lz}) {
            const double v = anticommutator_expectation(operator_matrix(a, 1), operator_matrix(b, 1), s.direction);
            EXPECT_NEAR(v, a == b ? 0.5 : 0.0, 1e-14);
        }
    }
}
