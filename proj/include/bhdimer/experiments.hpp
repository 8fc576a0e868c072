// experiments.hpp — many-particle vs. mean-field comparison runs, the figure
// presets, deviation metrics and CSV / JSON-manifest output.

#pragma once

#include "bhdimer/fixedpoints.hpp"
#include "bhdimer/fock.hpp"
#include "bhdimer/meanfield.hpp"
#include "bhdimer/params.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace bhdimer::experiments {

using cplx = std::complex<double>;
using meanfield::BlochState;
using meanfield::SpinorState;

inline constexpr double kRelativeFloor = 1e-12;

// How an interaction value read from a figure caption maps onto the
// macroscopic g: as is, or as the microscopic c with g = N c.
enum class Convention { Macroscopic, Microscopic };

inline const char* to_string(Convention c) {
    return c == Convention::Macroscopic ? "macroscopic" : "microscopic";
}

struct TimeGrid {
    double t_max{10.0};
    std::size_t samples{1001};

    std::vector<double> times() const { return ode::uniform_grid(0.0, t_max, samples); }
};

using InitialCondition = std::variant<BlochState, SpinorState>;

struct ExperimentSpec {
    std::string id{"run"};
    ModelParams params;
    int N{20};
    InitialCondition initial{meanfield::north_pole()};
    TimeGrid grid;
    Convention convention{Convention::Macroscopic};
    std::string output_path;
    SolverSettings solver;

    ModelParams effective_params() const {
        ModelParams p = params;
        if (convention == Convention::Microscopic) {
            p.g = params.g * N;
        }
        return p;
    }

    SpinorState initial_spinor() const {
        if (const auto* s = std::get_if<SpinorState>(&initial)) {
            return *s;
        }
        return meanfield::spinor_from_bloch(std::get<BlochState>(initial));
    }

    BlochState initial_bloch() const { return meanfield::bloch_from_spinor(initial_spinor()); }

    void validate() const {
        params.validate();
        solver.validate();
        fock::check_particle_number(N);
        if (!(grid.t_max > 0.0) || !std::isfinite(grid.t_max) || grid.samples < 2) {
            throw ValidationError("ExperimentSpec: time grid must be strictly increasing");
        }
        if (const auto* b = std::get_if<BlochState>(&initial)) {
            b->validate();
        } else {
            const auto& s = std::get<SpinorState>(initial);
            if (!(s.norm() > 0.0) || !std::isfinite(s.norm())) {
                throw ValidationError("ExperimentSpec: initial spinor must be finite and nonzero");
            }
        }
    }
};

// -------------------------------------------------------------- Comparison

inline double relative_deviation(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(b), kRelativeFloor);
}

struct ComparisonRow {
    double t{0.0};
    fock::ObservableRecord mp;
    BlochState mf;
    double log_survival_mp{0.0};
    double survival_mf{1.0};  // n^N
    double pop1_mf{0.5}, pop2_mf{0.5};
    double rel_dev_survival{0.0}, rel_dev_pop1{0.0}, rel_dev_pop2{0.0};
    double abs_dev_sx{0.0}, abs_dev_sy{0.0}, abs_dev_sz{0.0};
};

struct ComparisonSeries {
    std::vector<ComparisonRow> rows;

    std::vector<double> times() const {
        std::vector<double> t;
        for (const auto& r : rows) t.push_back(r.t);
        return t;
    }
};

inline ComparisonRow make_row(double t, const fock::ObservableRecord& mp, double log_survival_mp,
                              const BlochState& mf, double log_n, int N) {
    ComparisonRow r;
    r.t = t;
    r.mp = mp;
    r.mf = mf;
    r.log_survival_mp = log_survival_mp;
    r.survival_mf = std::exp(N * log_n);
    r.pop1_mf = (0.5 + mf.sz) * r.survival_mf;
    r.pop2_mf = (0.5 - mf.sz) * r.survival_mf;
    r.rel_dev_survival = relative_deviation(mp.survival, r.survival_mf);
    r.rel_dev_pop1 = relative_deviation(mp.pop1, r.pop1_mf);
    r.rel_dev_pop2 = relative_deviation(mp.pop2, r.pop2_mf);
    r.abs_dev_sx = std::abs(mp.sx - mf.sx);
    r.abs_dev_sy = std::abs(mp.sy - mf.sy);
    r.abs_dev_sz = std::abs(mp.sz - mf.sz);
    return r;
}

// Runs both engines from the coherent state of the initial spinor and pairs
// the samples on the requested grid.
inline ComparisonSeries compare(const ExperimentSpec& spec) {
    spec.validate();
    const ModelParams p = spec.effective_params();
    const std::vector<double> ts = spec.grid.times();
    const SpinorState x = spec.initial_spinor();

    const fock::Hamiltonian H = fock::build_hamiltonian(p, spec.N);
    const fock::ManyParticleState psi0 = fock::coherent_state(x.psi1, x.psi2, spec.N);
    std::vector<std::pair<fock::ObservableRecord, double>> mp;
    mp.reserve(ts.size());
    fock::propagate_sampled(psi0, H, 0.0, ts, spec.solver, [&mp](double t, const fock::ManyParticleState& s) {
        mp.emplace_back(fock::observables(s, t), s.log_survival);
    });

    const auto mf = meanfield::integrate_bloch(meanfield::bloch_from_spinor(x), p, 0.0, ts, spec.solver);

    ComparisonSeries out;
    out.rows.reserve(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        out.rows.push_back(make_row(ts[i], mp[i].first, mp[i].second, mf[i].s, mf[i].log_n, spec.N));
    }
    return out;
}

// ---------------------------------------------------------------- Analysis

// Upward crossings of x - mean(x), located by linear interpolation.
inline std::vector<double> upward_crossings(const std::vector<double>& t, const std::vector<double>& x) {
    std::vector<double> out;
    if (x.size() < 2) {
        return out;
    }
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        const double a = x[i] - mean, b = x[i + 1] - mean;
        if (a < 0.0 && b >= 0.0) {
            out.push_back(t[i] + (t[i + 1] - t[i]) * (-a) / (b - a));
        }
    }
    return out;
}

// Median spacing of upward mean crossings; empty with fewer than two.
inline std::optional<double> oscillation_period(const std::vector<double>& t, const std::vector<double>& x) {
    const auto c = upward_crossings(t, x);
    if (c.size() < 2) {
        return std::nullopt;
    }
    std::vector<double> d;
    for (std::size_t i = 0; i + 1 < c.size(); ++i) d.push_back(c[i + 1] - c[i]);
    std::sort(d.begin(), d.end());
    const std::size_t m = d.size() / 2;
    return d.size() % 2 ? d[m] : 0.5 * (d[m - 1] + d[m]);
}

// Half the peak-to-peak excursion inside consecutive windows of length
// `period`, starting at t[0].
inline std::vector<double> amplitude_envelope(const std::vector<double>& t, const std::vector<double>& x,
                                              double period, std::size_t windows) {
    std::vector<double> env;
    for (std::size_t w = 0; w < windows; ++w) {
        const double lo = t.front() + period * w, hi = lo + period;
        double mx = -1e300, mn = 1e300;
        bool any = false;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t[i] >= lo && t[i] <= hi) {
                mx = std::max(mx, x[i]);
                mn = std::min(mn, x[i]);
                any = true;
            }
        }
        if (!any) break;
        env.push_back(0.5 * (mx - mn));
    }
    return env;
}

// Restriction of (t, x) to t <= t_end.
inline std::pair<std::vector<double>, std::vector<double>> window(const std::vector<double>& t,
                                                                  const std::vector<double>& x, double t_end) {
    std::pair<std::vector<double>, std::vector<double>> out;
    for (std::size_t i = 0; i < t.size() && t[i] <= t_end; ++i) {
        out.first.push_back(t[i]);
        out.second.push_back(x[i]);
    }
    return out;
}

// First time the survival drops below 1/2, linearly interpolated between
// samples; empty when it never does on the grid.
inline std::optional<double> half_life(const std::vector<double>& t, const std::vector<double>& survival) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (survival[i] < 0.5) {
            if (i == 0) return t[0];
            const double a = survival[i - 1], b = survival[i];
            return t[i - 1] + (t[i] - t[i - 1]) * (a - 0.5) / (a - b);
        }
    }
    return std::nullopt;
}

struct DeviationSummary {
    double max_rel_dev_survival{0.0};
    double mean_rel_dev_survival{0.0};
    double max_abs_dev_sz{0.0};
    std::optional<double> half_life_mp, half_life_mf;
    std::optional<double> half_life_rel_mismatch;
    std::optional<double> period_mp, period_mf;
};

inline DeviationSummary deviation_metrics(const ComparisonSeries& s) {
    DeviationSummary d;
    if (s.rows.empty()) {
        return d;
    }
    std::vector<double> t, smp, smf, zmp, zmf;
    for (const auto& r : s.rows) {
        d.max_rel_dev_survival = std::max(d.max_rel_dev_survival, r.rel_dev_survival);
        d.mean_rel_dev_survival += r.rel_dev_survival;
        d.max_abs_dev_sz = std::max(d.max_abs_dev_sz, r.abs_dev_sz);
        t.push_back(r.t);
        smp.push_back(r.mp.survival);
        smf.push_back(r.survival_mf);
        zmp.push_back(r.mp.sz);
        zmf.push_back(r.mf.sz);
    }
    d.mean_rel_dev_survival /= static_cast<double>(s.rows.size());
    d.half_life_mp = half_life(t, smp);
    d.half_life_mf = half_life(t, smf);
    if (d.half_life_mp && d.half_life_mf && *d.half_life_mf > 0.0) {
        d.half_life_rel_mismatch = std::abs(*d.half_life_mp - *d.half_life_mf) / *d.half_life_mf;
    }
    d.period_mp = oscillation_period(t, zmp);
    d.period_mf = oscillation_period(t, zmf);
    return d;
}

// -------------------------------------------------------- Survival staircase

struct StaircaseDiagnostics {
    std::vector<double> decay_rate;  // -d log<psi|psi>/dt on the grid
    std::size_t steps{0};            // upward crossings of the decay rate
    std::optional<double> rate_period;
    bool survival_non_increasing{true};
    std::vector<double> deviation_window_maxima;  // windows of length pi/|v|
    bool deviation_grows{true};
};

struct StaircaseResult {
    ComparisonSeries series;
    StaircaseDiagnostics diagnostics;
    DeviationSummary summary;
};

// Central differences inside, one-sided at the ends.
inline std::vector<double> derivative(const std::vector<double>& t, const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<double> d(n, 0.0);
    if (n < 2) return d;
    d[0] = (x[1] - x[0]) / (t[1] - t[0]);
    d[n - 1] = (x[n - 1] - x[n - 2]) / (t[n - 1] - t[n - 2]);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        d[i] = (x[i + 1] - x[i - 1]) / (t[i + 1] - t[i - 1]);
    }
    return d;
}

inline StaircaseResult run_survival_staircase(const ExperimentSpec& spec) {
    StaircaseResult res;
    res.series = compare(spec);
    res.summary = deviation_metrics(res.series);
    const auto& rows = res.series.rows;
    std::vector<double> t, logs;
    for (const auto& r : rows) {
        t.push_back(r.t);
        logs.push_back(r.log_survival_mp);
    }
    auto& d = res.diagnostics;
    d.decay_rate = derivative(t, logs);
    for (double& r : d.decay_rate) r = -r;
    d.steps = upward_crossings(t, d.decay_rate).size();
    d.rate_period = oscillation_period(t, d.decay_rate);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].log_survival_mp > rows[i - 1].log_survival_mp) {
            d.survival_non_increasing = false;
        }
    }
    const double w = std::numbers::pi / std::abs(spec.effective_params().v);
    for (std::size_t k = 0;; ++k) {
        const double lo = k * w, hi = lo + w;
        if (lo >= t.back()) break;
        double mx = 0.0;
        for (const auto& r : rows) {
            if (r.t >= lo && r.t < hi) mx = std::max(mx, r.rel_dev_survival);
        }
        d.deviation_window_maxima.push_back(mx);
    }
    // The last window may be partial; only complete windows count.
    if (!d.deviation_window_maxima.empty() &&
        std::floor(t.back() / w) < static_cast<double>(d.deviation_window_maxima.size())) {
        d.deviation_window_maxima.pop_back();
    }
    for (std::size_t k = 1; k < d.deviation_window_maxima.size(); ++k) {
        if (d.deviation_window_maxima[k] < d.deviation_window_maxima[k - 1]) {
            d.deviation_grows = false;
        }
    }
    return res;
}

// ------------------------------------------------------ Population imbalance

struct ImbalanceDiagnostics {
    std::optional<double> period_mp, period_mf;  // over the first `periods` MF periods
    std::vector<double> envelope_mp, envelope_mf;
    bool envelope_mp_decreasing{false};
    std::optional<double> sink_sz;
    std::optional<double> sink_distance;  // |sz_mp(T) - sz_sink|
};

struct ImbalanceResult {
    ComparisonSeries series;
    ImbalanceDiagnostics diagnostics;
    DeviationSummary summary;
};

inline ImbalanceResult run_population_imbalance(const ExperimentSpec& spec, std::size_t periods = 5) {
    ImbalanceResult res;
    res.series = compare(spec);
    res.summary = deviation_metrics(res.series);
    std::vector<double> t, zmp, zmf;
    for (const auto& r : res.series.rows) {
        t.push_back(r.t);
        zmp.push_back(r.mp.sz);
        zmf.push_back(r.mf.sz);
    }
    auto& d = res.diagnostics;
    const auto full_mf = oscillation_period(t, zmf);
    if (full_mf) {
        const double t_end = std::min(t.back(), periods * *full_mf);
        const auto [tw, mpw] = window(t, zmp, t_end);
        const auto mfw = window(t, zmf, t_end).second;
        d.period_mp = oscillation_period(tw, mpw);
        d.period_mf = oscillation_period(tw, mfw);
        const double T = d.period_mf.value_or(*full_mf);
        d.envelope_mp = amplitude_envelope(t, zmp, T, periods);
        d.envelope_mf = amplitude_envelope(t, zmf, T, periods);
        d.envelope_mp_decreasing = d.envelope_mp.size() == periods;
        for (std::size_t k = 1; k < d.envelope_mp.size(); ++k) {
            if (!(d.envelope_mp[k] < d.envelope_mp[k - 1])) d.envelope_mp_decreasing = false;
        }
    }
    const ModelParams p = spec.effective_params();
    if (p.epsilon == 0.0 && p.v != 0.0) {
        for (const auto& r : fixedpoints::fixed_points(p)) {
            if (r.stability == fixedpoints::Stability::Sink) {
                d.sink_sz = r.s(2);
                d.sink_distance = std::abs(res.series.rows.back().mp.sz - r.s(2));
            }
        }
    }
    return res;
}

// ----------------------------------------------------------- Phase portraits

struct Trajectory {
    BlochState seed;
    std::vector<meanfield::BlochSample> samples;
};

struct PhasePortrait {
    ModelParams params;
    std::vector<Trajectory> trajectories;
    std::vector<fixedpoints::FixedPointRecord> fixed_points;
};

// Seeds on latitude circles strictly between the poles plus both poles.
inline std::vector<BlochState> sphere_seed_grid(int latitudes, int longitudes) {
    if (latitudes < 1 || longitudes < 1) {
        throw ValidationError("sphere_seed_grid: need at least one latitude and longitude");
    }
    std::vector<BlochState> seeds{meanfield::north_pole(), meanfield::south_pole()};
    for (int i = 1; i <= latitudes; ++i) {
        const double theta = std::numbers::pi * i / (latitudes + 1);
        for (int j = 0; j < longitudes; ++j) {
            const double phi = 2.0 * std::numbers::pi * j / longitudes;
            seeds.push_back({0.5 * std::sin(theta) * std::cos(phi), 0.5 * std::sin(theta) * std::sin(phi),
                             0.5 * std::cos(theta), 1.0});
        }
    }
    return seeds;
}

inline PhasePortrait run_phase_portrait(const ModelParams& p, const std::vector<BlochState>& seeds,
                                        const TimeGrid& grid, const SolverSettings& solver = {}) {
    p.validate();
    PhasePortrait out;
    out.params = p;
    const auto ts = grid.times();
    for (const auto& s : seeds) {
        out.trajectories.push_back({s, meanfield::integrate_bloch(s, p, 0.0, ts, solver)});
    }
    if (p.v != 0.0) {
        out.fixed_points = fixedpoints::fixed_points(p);
    }
    return out;
}

// ------------------------------------------------------------------ Presets

// Survival staircase: caption values c = 0.1, gamma = 0.01, v = 1, N = 20,
// initial state at the south pole (the non-decaying site populated).
inline ExperimentSpec figure2_spec(Convention conv) {
    ExperimentSpec s;
    s.id = std::string("figure2_") + to_string(conv);
    s.params = {0.0, 1.0, 0.1, 0.01};
    s.N = 20;
    s.initial = meanfield::south_pole();
    s.grid = {20.0, 2001};
    s.convention = conv;
    return s;
}

// Population imbalance from the north pole, N = 20: top (g, gamma) = (0.5, 0.1),
// bottom (2, 0.5).
inline ExperimentSpec figure3_spec(bool bottom, Convention conv = Convention::Macroscopic) {
    ExperimentSpec s;
    s.id = std::string("figure3_") + (bottom ? "bottom" : "top");
    s.params = bottom ? ModelParams{0.0, 1.0, 2.0, 0.5} : ModelParams{0.0, 1.0, 0.5, 0.1};
    s.N = 20;
    s.initial = meanfield::north_pole();
    s.grid = {40.0, 4001};
    s.convention = conv;
    return s;
}

// The four Bloch-sphere panels: (g, gamma) in {0, 2} x {0, 0.75}, epsilon = 0, v = 1.
inline std::vector<std::pair<std::string, ModelParams>> figure1_panels() {
    return {{"figure1_g0_gamma0", {0.0, 1.0, 0.0, 0.0}},
            {"figure1_g2_gamma0", {0.0, 1.0, 2.0, 0.0}},
            {"figure1_g0_gamma0.75", {0.0, 1.0, 0.0, 0.75}},
            {"figure1_g2_gamma0.75", {0.0, 1.0, 2.0, 0.75}}};
}

// ------------------------------------------------------------------- Output

inline std::string format_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string format_optional(const std::optional<double>& x) {
    return x ? format_number(*x) : std::string("undefined");
}

inline void ensure_parent(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
}

inline const std::vector<std::string>& comparison_columns() {
    static const std::vector<std::string> cols = {
        "t",          "survival_mp",  "survival_mf",  "log_survival_mp", "pop1_mp",
        "pop1_mf",    "pop2_mp",      "pop2_mf",      "sx_mp",           "sx_mf",
        "sy_mp",      "sy_mf",        "sz_mp",        "sz_mf",           "n_mf",
        "rel_dev_survival", "rel_dev_pop1", "rel_dev_pop2", "abs_dev_sx", "abs_dev_sy",
        "abs_dev_sz"};
    return cols;
}

inline void write_comparison_csv(const std::filesystem::path& path, const ComparisonSeries& s) {
    ensure_parent(path);
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string());
    }
    const auto& cols = comparison_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        os << (i ? "," : "") << cols[i];
    }
    os << '\n';
    for (const auto& r : s.rows) {
        const double vals[] = {r.t,          r.mp.survival, r.survival_mf, r.log_survival_mp, r.mp.pop1,
                               r.pop1_mf,    r.mp.pop2,     r.pop2_mf,     r.mp.sx,           r.mf.sx,
                               r.mp.sy,      r.mf.sy,       r.mp.sz,       r.mf.sz,           r.mf.n,
                               r.rel_dev_survival, r.rel_dev_pop1, r.rel_dev_pop2, r.abs_dev_sx,
                               r.abs_dev_sy, r.abs_dev_sz};
        for (std::size_t i = 0; i < std::size(vals); ++i) {
            os << (i ? "," : "") << format_number(vals[i]);
        }
        os << '\n';
    }
}

inline void write_fixed_points_csv(std::ostream& os, const std::vector<fixedpoints::FixedPointRecord>& records) {
    os << "sx,sy,sz,class,index,lambda1_re,lambda1_im,lambda2_re,lambda2_im,residual\n";
    for (const auto& r : records) {
        os << format_number(r.s(0)) << ',' << format_number(r.s(1)) << ',' << format_number(r.s(2)) << ','
           << fixedpoints::to_string(r.stability) << ',' << r.index << ','
           << format_number(r.eigenvalues[0].real()) << ',' << format_number(r.eigenvalues[0].imag()) << ','
           << format_number(r.eigenvalues[1].real()) << ',' << format_number(r.eigenvalues[1].imag()) << ','
           << format_number(r.residual) << '\n';
    }
}

inline void write_portrait_csv(const std::filesystem::path& trajectories_path,
                               const std::filesystem::path& fixed_points_path, const PhasePortrait& p) {
    ensure_parent(trajectories_path);
    std::ofstream os(trajectories_path, std::ios::binary);
    os << "seed,t,sx,sy,sz,n\n";
    for (std::size_t k = 0; k < p.trajectories.size(); ++k) {
        for (const auto& s : p.trajectories[k].samples) {
            os << k << ',' << format_number(s.t) << ',' << format_number(s.s.sx) << ','
               << format_number(s.s.sy) << ',' << format_number(s.s.sz) << ',' << format_number(s.s.n) << '\n';
        }
    }
    std::ofstream fp(fixed_points_path, std::ios::binary);
    write_fixed_points_csv(fp, p.fixed_points);
}

inline void write_scan_csv(std::ostream& os, const fixedpoints::ScanResult& res) {
    os << "g,gamma,count,centers,saddles,sinks,sources,marginal,region,index_sum,exceptional\n";
    for (const auto& c : res.cells) {
        os << format_number(c.g) << ',' << format_number(c.gamma) << ',' << c.count << ',' << c.centers << ','
           << c.saddles << ',' << c.sinks << ',' << c.sources << ',' << c.marginal << ',' << c.region << ','
           << c.index_sum << ',' << (c.exceptional ? 1 : 0) << '\n';
    }
}

inline void write_crossings_csv(std::ostream& os, const fixedpoints::ScanResult& res) {
    os << "g0,gamma0,g1,gamma1,count0,count1\n";
    for (const auto& b : res.crossings) {
        os << format_number(b.g0) << ',' << format_number(b.gamma0) << ',' << format_number(b.g1) << ','
           << format_number(b.gamma1) << ',' << b.count0 << ',' << b.count1 << '\n';
    }
}

inline nlohmann::ordered_json solver_json(const SolverSettings& s) {
    nlohmann::ordered_json j;
    j["method"] = s.adaptive() ? "dormand-prince-5(4)" : "rk4-fixed";
    j["rtol"] = s.rtol;
    j["atol"] = s.atol;
    j["fixed_step"] = s.fixed_step;
    j["extended_precision"] = s.extended_precision;
    return j;
}

inline nlohmann::ordered_json summary_json(const DeviationSummary& d) {
    auto opt = [](const std::optional<double>& x) -> nlohmann::ordered_json {
        return x ? nlohmann::ordered_json(*x) : nlohmann::ordered_json("undefined");
    };
    nlohmann::ordered_json j;
    j["max_rel_dev_survival"] = d.max_rel_dev_survival;
    j["mean_rel_dev_survival"] = d.mean_rel_dev_survival;
    j["max_abs_dev_sz"] = d.max_abs_dev_sz;
    j["half_life_mp"] = opt(d.half_life_mp);
    j["half_life_mf"] = opt(d.half_life_mf);
    j["half_life_rel_mismatch"] = opt(d.half_life_rel_mismatch);
    j["period_mp"] = opt(d.period_mp);
    j["period_mf"] = opt(d.period_mf);
    return j;
}

// Manifest skeleton; `spec` is the flat key/value description that reproduces
// the run.
inline nlohmann::ordered_json manifest(const std::string& run_id, const std::string& kind,
                                       const nlohmann::ordered_json& spec, const SolverSettings& solver) {
    nlohmann::ordered_json j;
    j["run"] = run_id;
    j["kind"] = kind;
    j["library_version"] = kLibraryVersion;
    j["spec"] = spec;
    j["solver"] = solver_json(solver);
    j["outputs"] = nlohmann::ordered_json::array();
    return j;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
    ensure_parent(path);
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string());
    }
    os << j.dump(2) << '\n';
}

} // namespace bhdimer::experiments
