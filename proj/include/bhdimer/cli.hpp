// cli.hpp — the `bhdimer` command line: subcommands, spec-file merging,
// dataset and manifest output. `run_cli` is the whole program; the tool's
// main() only forwards argv and the standard streams.
//
// Exit codes: 0 success, 1 invalid input, 2 numerical or I/O failure.

#pragma once

#include "bhdimer/config.hpp"
#include "bhdimer/experiments.hpp"
#include "bhdimer/fixedpoints.hpp"
#include "bhdimer/fock.hpp"
#include "bhdimer/meanfield.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace bhdimer::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum ExitCode : int { kSuccess = 0, kInvalidInput = 1, kNumericalFailure = 2 };

inline constexpr const char* kOutputEnv = "BHDIMER_OUT";
inline constexpr const char* kDefaultOutput = "out";

// ----------------------------------------------------------- Key catalogue

struct KeyInfo {
    const char* key;
    const char* help;
};

inline const std::vector<KeyInfo>& key_catalogue() {
    static const std::vector<KeyInfo> keys = {
        {"id", "run identifier, used as the output file stem"},
        {"epsilon", "site detuning epsilon"},
        {"v", "tunnelling coupling v"},
        {"g", "interaction (macroscopic g, or microscopic c under --convention micro)"},
        {"gamma", "decay rate gamma >= 0 of site 1"},
        {"N", "particle number"},
        {"t_max", "final time of the output grid starting at 0"},
        {"samples", "number of output samples including both ends"},
        {"rtol", "relative tolerance of the adaptive integrator"},
        {"atol", "absolute tolerance of the adaptive integrator"},
        {"fixed_step", "fixed RK4 step; 0 selects the adaptive integrator"},
        {"extended_precision", "propagate the many-particle state in 128-bit arithmetic"},
        {"convention", "interaction convention: macroscopic | microscopic"},
        {"init", "initial state: north | south | bloch:sx,sy,sz | spinor:re1,im1,re2,im2"},
        {"kappa", "GPE nonlinearity: normalized | unnormalized"},
        {"analysis", "extra diagnostics: none | staircase | imbalance"},
        {"periods", "oscillation periods examined by the imbalance analysis"},
        {"g_min", "scan: smallest g"},
        {"g_max", "scan: largest g"},
        {"g_count", "scan: grid points along g"},
        {"gamma_min", "scan: smallest gamma"},
        {"gamma_max", "scan: largest gamma"},
        {"gamma_count", "scan: grid points along gamma"},
        {"latitudes", "portrait: latitude circles of seeds between the poles"},
        {"longitudes", "portrait: seeds per latitude circle"},
    };
    return keys;
}

inline std::string flag_name(const std::string& key) {
    std::string f = key;
    std::replace(f.begin(), f.end(), '_', '-');
    return "--" + f;
}

inline std::set<std::string> keys_for(const std::string& command) {
    const std::set<std::string> model = {"epsilon", "v", "g", "gamma"};
    const std::set<std::string> solver = {"rtol", "atol", "fixed_step"};
    const std::set<std::string> grid = {"t_max", "samples"};
    std::set<std::string> k = {"id"};
    auto add = [&k](const std::set<std::string>& s) { k.insert(s.begin(), s.end()); };
    if (command == "mp-evolve") {
        add(model), add(solver), add(grid), add({"N", "init", "convention", "extended_precision"});
    } else if (command == "mf-evolve") {
        add(model), add(solver), add(grid), add({"init"});
    } else if (command == "gpe-evolve") {
        add(model), add(solver), add(grid), add({"init", "kappa"});
    } else if (command == "compare") {
        add(model), add(solver), add(grid);
        add({"N", "init", "convention", "extended_precision", "analysis", "periods"});
    } else if (command == "fixed-points") {
        add(model);
    } else if (command == "region-scan") {
        add({"v", "g_min", "g_max", "g_count", "gamma_min", "gamma_max", "gamma_count"});
    } else if (command == "phase-portrait") {
        add(model), add(solver), add(grid), add({"latitudes", "longitudes"});
    } else {
        throw std::logic_error("keys_for: unknown command " + command);
    }
    return k;
}

// ------------------------------------------------------------ Resolution

// Reads typed values and records every resolved value, defaults included, so
// that the manifest alone reproduces the run.
class Resolver {
public:
    Resolver(const config::KeyValues& kv, const std::string& command)
        : reader_(kv, keys_for(command)), command_(command) {}

    double real(const std::string& key, double fallback) {
        const double x = reader_.real(key, fallback);
        spec_[key] = x;
        return x;
    }
    long integer(const std::string& key, long fallback) {
        const long x = reader_.integer(key, fallback);
        spec_[key] = x;
        return x;
    }
    bool boolean(const std::string& key, bool fallback) {
        const bool x = reader_.boolean(key, fallback);
        spec_[key] = x;
        return x;
    }
    std::string choice(const std::string& key, const std::string& fallback, const std::set<std::string>& allowed) {
        const std::string x = reader_.str(key, fallback);
        if (!allowed.count(x)) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : " | ") + a;
            const config::Entry e = reader_.has(key) ? reader_.entry(key) : config::Entry{x, "default"};
            throw reader_.error(e, key, "expected one of " + list + ", got '" + x + "'");
        }
        spec_[key] = x;
        return x;
    }
    experiments::InitialCondition initial(const std::string& fallback) {
        auto ic = config::parse_initial(reader_, "init", fallback);
        const std::string text = reader_.str("init", fallback);
        spec_["init"] = (text == "north" || text == "south") ? text : config::format_initial(ic);
        return ic;
    }
    std::string id() {
        const std::string x = reader_.str("id", default_id());
        const bool ok = !x.empty() && x.front() != '.' &&
                        std::all_of(x.begin(), x.end(), [](unsigned char c) {
                            return std::isalnum(c) || c == '_' || c == '-' || c == '.';
                        });
        if (!ok) {
            const config::Entry e = reader_.has("id") ? reader_.entry("id") : config::Entry{x, "default"};
            throw reader_.error(e, "id", "must be a plain file stem of letters, digits, '_', '-', '.'");
        }
        spec_["id"] = x;
        return x;
    }

    ModelParams model() {
        ModelParams p;
        p.epsilon = real("epsilon", 0.0);
        p.v = real("v", 1.0);
        p.g = real("g", 0.0);
        p.gamma = real("gamma", 0.0);
        p.validate();
        return p;
    }

    SolverSettings solver() {
        SolverSettings s;
        s.rtol = real("rtol", s.rtol);
        s.atol = real("atol", s.atol);
        s.fixed_step = real("fixed_step", 0.0);
        if (keys_for(command_).count("extended_precision")) {
            s.extended_precision = boolean("extended_precision", false);
        }
        s.validate();
        return s;
    }

    experiments::TimeGrid grid(double t_max, long samples) {
        experiments::TimeGrid g;
        g.t_max = real("t_max", t_max);
        const long n = integer("samples", samples);
        if (!(g.t_max > 0.0)) {
            throw ValidationError("key 't_max': must be positive");
        }
        if (n < 2 || n > 100'000'000) {
            throw ValidationError("key 'samples': must lie in [2, 1e8]");
        }
        g.samples = static_cast<std::size_t>(n);
        return g;
    }

    int particles() {
        const long n = integer("N", 20);
        if (n < 1 || n > 100'000) {
            throw ValidationError("key 'N': particle number must lie in [1, 100000]");
        }
        return static_cast<int>(n);
    }

    experiments::Convention convention() {
        const std::string c = choice("convention", "macroscopic", {"macroscopic", "microscopic", "macro", "micro"});
        const bool micro = c.rfind("micro", 0) == 0;
        spec_["convention"] = micro ? "microscopic" : "macroscopic";
        return micro ? experiments::Convention::Microscopic : experiments::Convention::Macroscopic;
    }

    const json& spec() const { return spec_; }

private:
    std::string default_id() const {
        std::string s = command_;
        std::replace(s.begin(), s.end(), '-', '_');
        return s;
    }

    config::Reader reader_;
    std::string command_;
    json spec_ = json::object();
};

// --------------------------------------------------------------- Running

struct RunContext {
    fs::path out_dir;
    bool out_requested{false};  // --out given or the environment variable set
};

struct RunReport {
    std::string text;  // human-readable summary for stdout
};

inline std::ofstream open_output(const fs::path& path) {
    experiments::ensure_parent(path);
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    return os;
}

inline void finish_manifest(json& m, const fs::path& dir, const std::string& id, const std::vector<fs::path>& files) {
    for (const auto& f : files) m["outputs"].push_back(f.filename().string());
    experiments::write_json(dir / (id + ".manifest.json"), m);
}

inline std::string describe_written(const fs::path& dir, const std::string& id) {
    return "wrote " + (dir / (id + ".manifest.json")).string() + "\n";
}

inline RunReport run_mp_evolve(const config::KeyValues& kv, const RunContext& ctx) {
    Resolver r(kv, "mp-evolve");
    const std::string id = r.id();
    experiments::ExperimentSpec spec;
    spec.params = r.model();
    spec.N = r.particles();
    spec.convention = r.convention();
    spec.initial = r.initial("north");
    spec.grid = r.grid(10.0, 1001);
    spec.solver = r.solver();
    spec.validate();

    const ModelParams p = spec.effective_params();
    const auto x = spec.initial_spinor();
    const auto H = fock::build_hamiltonian(p, spec.N);
    const auto ts = spec.grid.times();
    const fs::path csv = ctx.out_dir / (id + ".csv");
    auto os = open_output(csv);
    os << "t,sx,sy,sz,survival,log_survival,pop1,pop2\n";
    using experiments::format_number;
    fock::propagate_sampled(fock::coherent_state(x.psi1, x.psi2, spec.N), H, 0.0, ts, spec.solver,
                            [&os](double t, const fock::ManyParticleState& s) {
                                const auto o = fock::observables(s, t);
                                os << format_number(t) << ',' << format_number(o.sx) << ','
                                   << format_number(o.sy) << ',' << format_number(o.sz) << ','
                                   << format_number(o.survival) << ',' << format_number(s.log_survival) << ','
                                   << format_number(o.pop1) << ',' << format_number(o.pop2) << '\n';
                            });
    os.close();
    json m = experiments::manifest(id, "mp-evolve", r.spec(), spec.solver);
    finish_manifest(m, ctx.out_dir, id, {csv});
    return {describe_written(ctx.out_dir, id)};
}

inline RunReport run_mf_evolve(const config::KeyValues& kv, const RunContext& ctx) {
    Resolver r(kv, "mf-evolve");
    const std::string id = r.id();
    const ModelParams p = r.model();
    const auto ic = r.initial("north");
    const auto grid = r.grid(10.0, 1001);
    const SolverSettings solver = r.solver();
    const auto s0 = std::holds_alternative<meanfield::BlochState>(ic)
                        ? std::get<meanfield::BlochState>(ic)
                        : meanfield::bloch_from_spinor(std::get<meanfield::SpinorState>(ic));
    const auto ts = grid.times();
    const auto samples = meanfield::integrate_bloch(s0, p, 0.0, ts, solver);

    const fs::path csv = ctx.out_dir / (id + ".csv");
    auto os = open_output(csv);
    using experiments::format_number;
    os << "t,sx,sy,sz,n,log_n,sphere_defect\n";
    for (const auto& s : samples) {
        os << format_number(s.t) << ',' << format_number(s.s.sx) << ',' << format_number(s.s.sy) << ','
           << format_number(s.s.sz) << ',' << format_number(s.s.n) << ',' << format_number(s.log_n) << ','
           << format_number(s.s.sphere_defect()) << '\n';
    }
    os.close();
    json m = experiments::manifest(id, "mf-evolve", r.spec(), solver);
    finish_manifest(m, ctx.out_dir, id, {csv});
    return {describe_written(ctx.out_dir, id)};
}

inline RunReport run_gpe_evolve(const config::KeyValues& kv, const RunContext& ctx) {
    Resolver r(kv, "gpe-evolve");
    const std::string id = r.id();
    const ModelParams p = r.model();
    const auto ic = r.initial("north");
    const auto conv = r.choice("kappa", "normalized", {"normalized", "unnormalized"}) == "normalized"
                          ? meanfield::KappaConvention::Normalized
                          : meanfield::KappaConvention::Unnormalized;
    const auto grid = r.grid(10.0, 1001);
    const SolverSettings solver = r.solver();
    const auto psi0 = std::holds_alternative<meanfield::SpinorState>(ic)
                          ? std::get<meanfield::SpinorState>(ic)
                          : meanfield::spinor_from_bloch(std::get<meanfield::BlochState>(ic));
    const auto ts = grid.times();
    const auto samples = meanfield::integrate_gpe(psi0, p, 0.0, ts, solver, conv);

    const fs::path csv = ctx.out_dir / (id + ".csv");
    auto os = open_output(csv);
    using experiments::format_number;
    os << "t,psi1_re,psi1_im,psi2_re,psi2_im,beta,log_n,sx,sy,sz\n";
    for (const auto& s : samples) {
        const auto b = meanfield::bloch_from_spinor(s.psi);
        os << format_number(s.t) << ',' << format_number(s.psi.psi1.real()) << ','
           << format_number(s.psi.psi1.imag()) << ',' << format_number(s.psi.psi2.real()) << ','
           << format_number(s.psi.psi2.imag()) << ',' << format_number(s.psi.beta) << ','
           << format_number(s.log_n) << ',' << format_number(b.sx) << ',' << format_number(b.sy) << ','
           << format_number(b.sz) << '\n';
    }
    os.close();
    json m = experiments::manifest(id, "gpe-evolve", r.spec(), solver);
    finish_manifest(m, ctx.out_dir, id, {csv});
    return {describe_written(ctx.out_dir, id)};
}

inline json optional_json(const std::optional<double>& x) {
    return x ? json(*x) : json("undefined");
}

inline RunReport run_compare(const config::KeyValues& kv, const RunContext& ctx) {
    Resolver r(kv, "compare");
    experiments::ExperimentSpec spec;
    spec.id = r.id();
    spec.params = r.model();
    spec.N = r.particles();
    spec.convention = r.convention();
    spec.initial = r.initial("north");
    spec.grid = r.grid(10.0, 1001);
    spec.solver = r.solver();
    const std::string analysis = r.choice("analysis", "none", {"none", "staircase", "imbalance"});
    const long periods = analysis == "imbalance" ? r.integer("periods", 5) : 5;
    if (periods < 1) {
        throw ValidationError("key 'periods': must be at least 1");
    }
    spec.validate();

    json diagnostics = json::object();
    experiments::ComparisonSeries series;
    experiments::DeviationSummary summary;
    std::vector<fs::path> files;
    std::ostringstream text;
    using experiments::format_number;
    using experiments::format_optional;

    if (analysis == "staircase") {
        auto res = experiments::run_survival_staircase(spec);
        series = std::move(res.series);
        summary = res.summary;
        const auto& d = res.diagnostics;
        diagnostics["staircase_steps"] = d.steps;
        diagnostics["decay_rate_period"] = optional_json(d.rate_period);
        diagnostics["survival_non_increasing"] = d.survival_non_increasing;
        diagnostics["deviation_window_maxima"] = d.deviation_window_maxima;
        diagnostics["deviation_grows"] = d.deviation_grows;
        const fs::path rate = ctx.out_dir / (spec.id + "_decay_rate.csv");
        auto os = open_output(rate);
        os << "t,decay_rate_mp\n";
        for (std::size_t i = 0; i < series.rows.size(); ++i) {
            os << format_number(series.rows[i].t) << ',' << format_number(d.decay_rate[i]) << '\n';
        }
        files.push_back(rate);
        text << "  staircase steps: " << d.steps << ", decay-rate period: " << format_optional(d.rate_period)
             << "\n  survival non-increasing: " << (d.survival_non_increasing ? "yes" : "no")
             << ", deviation grows: " << (d.deviation_grows ? "yes" : "no") << '\n';
    } else if (analysis == "imbalance") {
        auto res = experiments::run_population_imbalance(spec, static_cast<std::size_t>(periods));
        series = std::move(res.series);
        summary = res.summary;
        const auto& d = res.diagnostics;
        diagnostics["period_mp"] = optional_json(d.period_mp);
        diagnostics["period_mf"] = optional_json(d.period_mf);
        diagnostics["envelope_mp"] = d.envelope_mp;
        diagnostics["envelope_mf"] = d.envelope_mf;
        diagnostics["envelope_mp_decreasing"] = d.envelope_mp_decreasing;
        diagnostics["sink_sz"] = optional_json(d.sink_sz);
        diagnostics["sink_distance"] = optional_json(d.sink_distance);
        text << "  sz period MP/MF: " << format_optional(d.period_mp) << " / " << format_optional(d.period_mf)
             << "\n  MP envelope decreasing: " << (d.envelope_mp_decreasing ? "yes" : "no")
             << ", distance to sink at t_max: " << format_optional(d.sink_distance) << '\n';
    } else {
        series = experiments::compare(spec);
        summary = experiments::deviation_metrics(series);
    }

    const fs::path csv = ctx.out_dir / (spec.id + ".csv");
    experiments::write_comparison_csv(csv, series);
    files.insert(files.begin(), csv);

    json m = experiments::manifest(spec.id, "compare", r.spec(), spec.solver);
    m["effective_g"] = spec.effective_params().g;
    m["summary"] = experiments::summary_json(summary);
    if (!diagnostics.empty()) m["diagnostics"] = diagnostics;
    finish_manifest(m, ctx.out_dir, spec.id, files);

    std::ostringstream head;
    head << spec.id << ": " << describe_written(ctx.out_dir, spec.id) << "  max relative survival deviation: "
         << format_number(summary.max_rel_dev_survival)
         << "\n  half-life MP/MF: " << format_optional(summary.half_life_mp) << " / "
         << format_optional(summary.half_life_mf) << '\n';
    return {head.str() + text.str()};
}

inline std::string fixed_point_table(const std::vector<fixedpoints::FixedPointRecord>& records) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-8s %16s %16s %16s %6s %22s %22s %10s\n", "class", "sx", "sy", "sz",
                  "index", "lambda1", "lambda2", "residual");
    os << line;
    auto fmt = [](std::complex<double> z) {
        char b[64];
        std::snprintf(b, sizeof b, "%.6g%+.6gi", z.real(), z.imag());
        return std::string(b);
    };
    for (const auto& r : records) {
        std::snprintf(line, sizeof line, "%-8s %16.12f %16.12f %16.12f %6d %22s %22s %10.2e\n",
                      fixedpoints::to_string(r.stability), r.s(0), r.s(1), r.s(2), r.index,
                      fmt(r.eigenvalues[0]).c_str(), fmt(r.eigenvalues[1]).c_str(), r.residual);
        os << line;
    }
    return os.str();
}

inline RunReport run_fixed_points(const config::KeyValues& kv, const RunContext& ctx) {
    Resolver r(kv, "fixed-points");
    const std::string id = r.id();
    const ModelParams p = r.model();
    const auto records = fixedpoints::fixed_points(p);
    std::ostringstream text;
    text << records.size() << " fixed points for " << p.to_string() << ", index sum "
         << fixedpoints::index_sum(records) << '\n'
         << fixed_point_table(records);
    if (p.epsilon == 0.0) {
        text << "region: " << fixedpoints::region(p).label << '\n';
    }
    if (ctx.out_requested) {
        const fs::path csv = ctx.out_dir / (id + ".csv");
        auto os = open_output(csv);
        experiments::write_fixed_points_csv(os, records);
        os.close();
        json m = experiments::manifest(id, "fixed-points", r.spec(), SolverSettings{});
        m.erase("solver");
        finish_manifest(m, ctx.out_dir, id, {csv});
        text << describe_written(ctx.out_dir, id);
    }
    return {text.str()};
}

inline RunReport run_region_scan(const config::KeyValues& kv, const RunContext& ctx, unsigned threads) {
    Resolver r(kv, "region-scan");
    const std::string id = r.id();
    fixedpoints::ScanSpec s;
    s.v = r.real("v", 1.0);
    s.g_min = r.real("g_min", s.g_min);
    s.g_max = r.real("g_max", s.g_max);
    s.g_count = static_cast<int>(r.integer("g_count", s.g_count));
    s.gamma_min = r.real("gamma_min", s.gamma_min);
    s.gamma_max = r.real("gamma_max", s.gamma_max);
    s.gamma_count = static_cast<int>(r.integer("gamma_count", s.gamma_count));
    s.threads = threads;
    const auto res = fixedpoints::bifurcation_scan(s);

    const fs::path cells = ctx.out_dir / (id + ".csv");
    const fs::path crossings = ctx.out_dir / (id + "_crossings.csv");
    {
        auto os = open_output(cells);
        experiments::write_scan_csv(os, res);
        auto oc = open_output(crossings);
        experiments::write_crossings_csv(oc, res);
    }
    std::size_t marginal = 0;
    for (const auto& c : res.cells) marginal += c.marginal ? 1 : 0;
    json m = experiments::manifest(id, "region-scan", r.spec(), SolverSettings{});
    m.erase("solver");
    m["summary"] = {{"cells", res.cells.size()},
                    {"marginal_cells", marginal},
                    {"crossings", res.crossings.size()},
                    {"exceptional_cells", res.exceptional_points.size()}};
    finish_manifest(m, ctx.out_dir, id, {cells, crossings});
    std::ostringstream text;
    text << id << ": " << res.cells.size() << " cells, " << res.crossings.size() << " count changes, "
         << marginal << " marginal cells\n"
         << describe_written(ctx.out_dir, id);
    return {text.str()};
}

inline RunReport run_phase_portrait(const config::KeyValues& kv, const RunContext& ctx) {
    Resolver r(kv, "phase-portrait");
    const std::string id = r.id();
    const ModelParams p = r.model();
    const auto grid = r.grid(10.0, 501);
    const SolverSettings solver = r.solver();
    const long lat = r.integer("latitudes", 5), lon = r.integer("longitudes", 8);
    if (lat < 1 || lon < 1 || lat * lon > 100'000) {
        throw ValidationError("keys 'latitudes', 'longitudes': need 1 <= latitudes, longitudes and at most 1e5 seeds");
    }
    const auto portrait = experiments::run_phase_portrait(
        p, experiments::sphere_seed_grid(static_cast<int>(lat), static_cast<int>(lon)), grid, solver);
    const fs::path traj = ctx.out_dir / (id + "_trajectories.csv");
    const fs::path fps = ctx.out_dir / (id + "_fixed_points.csv");
    experiments::write_portrait_csv(traj, fps, portrait);
    json m = experiments::manifest(id, "phase-portrait", r.spec(), solver);
    finish_manifest(m, ctx.out_dir, id, {traj, fps});
    std::ostringstream text;
    text << id << ": " << portrait.trajectories.size() << " trajectories, " << portrait.fixed_points.size()
         << " fixed points\n"
         << describe_written(ctx.out_dir, id);
    return {text.str()};
}

inline RunReport dispatch(const std::string& command, const config::KeyValues& kv, const RunContext& ctx,
                          unsigned threads) {
    if (command == "mp-evolve") return run_mp_evolve(kv, ctx);
    if (command == "mf-evolve") return run_mf_evolve(kv, ctx);
    if (command == "gpe-evolve") return run_gpe_evolve(kv, ctx);
    if (command == "compare") return run_compare(kv, ctx);
    if (command == "fixed-points") return run_fixed_points(kv, ctx);
    if (command == "region-scan") return run_region_scan(kv, ctx, threads);
    if (command == "phase-portrait") return run_phase_portrait(kv, ctx);
    throw std::logic_error("dispatch: unknown command " + command);
}

// ------------------------------------------------------------ Exceptions

inline int report_exception(std::ostream& err, const std::string& prefix) {
    try {
        throw;
    } catch (const ValidationError& e) {
        err << prefix << "error: " << e.what() << '\n';
        return kInvalidInput;
    } catch (const IntegrationError& e) {
        err << prefix << "numerical failure: " << e.what() << " (reached t = " << e.t_reached() << ")\n";
        return kNumericalFailure;
    } catch (const std::exception& e) {
        err << prefix << "failure: " << e.what() << '\n';
        return kNumericalFailure;
    }
}

struct Job {
    std::string command;
    config::KeyValues kv;
};

// Runs independent jobs on up to `threads` workers; reports are printed in
// job order. Returns the most severe exit code.
inline int run_jobs(const std::vector<Job>& jobs, const RunContext& ctx, unsigned threads, unsigned inner_threads,
                    std::ostream& out, std::ostream& err) {
    std::vector<std::string> texts(jobs.size()), errors(jobs.size());
    std::vector<int> codes(jobs.size(), kSuccess);
    std::size_t next = 0;
    std::mutex mu;
    auto worker = [&]() {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= jobs.size()) return;
                i = next++;
            }
            try {
                texts[i] = dispatch(jobs[i].command, jobs[i].kv, ctx, inner_threads).text;
            } catch (...) {
                std::ostringstream es;
                codes[i] = report_exception(es, jobs.size() > 1 ? "job " + std::to_string(i + 1) + ": " : "");
                errors[i] = es.str();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    int code = kSuccess;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        out << texts[i];
        err << errors[i];
        code = std::max(code, codes[i]);
    }
    return code;
}

// --------------------------------------------------------------- Presets

inline config::KeyValues preset_compare(const experiments::ExperimentSpec& s, const std::string& analysis) {
    const std::string origin = "preset " + s.id;
    config::KeyValues kv;
    auto put = [&](const std::string& k, const std::string& v) { kv[k] = {v, origin}; };
    using experiments::format_number;
    put("id", s.id);
    put("epsilon", format_number(s.params.epsilon));
    put("v", format_number(s.params.v));
    put("g", format_number(s.params.g));
    put("gamma", format_number(s.params.gamma));
    put("N", std::to_string(s.N));
    put("convention", experiments::to_string(s.convention));
    put("init", std::get<meanfield::BlochState>(s.initial).sz > 0 ? "north" : "south");
    put("t_max", format_number(s.grid.t_max));
    put("samples", std::to_string(s.grid.samples));
    put("analysis", analysis);
    return kv;
}

inline config::KeyValues preset_portrait(const std::string& id, const ModelParams& p) {
    const std::string origin = "preset " + id;
    config::KeyValues kv;
    auto put = [&](const std::string& k, const std::string& v) { kv[k] = {v, origin}; };
    using experiments::format_number;
    put("id", id);
    put("epsilon", format_number(p.epsilon));
    put("v", format_number(p.v));
    put("g", format_number(p.g));
    put("gamma", format_number(p.gamma));
    return kv;
}

inline void overlay(config::KeyValues& base, const config::KeyValues& over, const std::set<std::string>& keys) {
    for (const auto& [k, e] : over) {
        if (keys.count(k)) base[k] = e;
    }
}

// ----------------------------------------------------------------- Main

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Decaying two-site Bose-Hubbard dimer: many-particle and mean-field dynamics", "bhdimer"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kLibraryVersion));

    struct Sub {
        CLI::App* app;
        std::map<std::string, std::string> values;
        std::vector<std::string> specs;
        std::string out;
        unsigned threads{1};
    };
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"mp-evolve", "propagate the many-particle state from a coherent state"},
        {"mf-evolve", "integrate the non-hermitian Bloch equations"},
        {"gpe-evolve", "integrate the discrete non-hermitian Gross-Pitaevskii equation"},
        {"compare", "many-particle vs mean-field comparison (several --spec files run as a batch)"},
        {"fixed-points", "mean-field fixed points and their stability"},
        {"region-scan", "fixed-point counts over a (g, gamma) grid"},
        {"phase-portrait", "mean-field trajectories from a grid of seeds on the sphere"},
    };
    std::map<std::string, Sub> subs;
    for (const auto& [name, help] : commands) {
        Sub& s = subs[name];
        s.app = app.add_subcommand(name, help);
        for (const auto& info : key_catalogue()) {
            if (!keys_for(name).count(info.key)) continue;
            const std::string flag = flag_name(info.key);
            if (std::string(info.key) == "extended_precision") {
                s.app->add_flag(flag + "{true}", s.values[info.key], info.help);
            } else {
                s.app->add_option(flag, s.values[info.key], info.help);
            }
        }
        if (name == "compare") {
            s.app->add_option("--spec", s.specs, "spec file (key = value lines, or a run manifest); repeatable");
        } else {
            s.app->add_option("--spec", s.specs, "spec file (key = value lines, or a run manifest)")
                ->expected(0, 1);
        }
        s.app->add_option("--out", s.out, "output directory (default: $BHDIMER_OUT or ./out)");
        if (name == "compare" || name == "region-scan") {
            s.app->add_option("--threads", s.threads, "worker threads")->check(CLI::Range(1u, 1024u));
        }
    }

    std::string figure_which, panel = "both", fig_out, fig_convention;
    std::map<std::string, std::string> fig_values;
    unsigned fig_threads = 1;
    CLI::App* fig = app.add_subcommand("figure", "reproduce a figure preset: 1, 2 or 3");
    fig->add_option("which", figure_which, "figure number")->required()->check(CLI::IsMember({"1", "2", "3"}));
    fig->add_option("--panel", panel, "figure 3 panel: top | bottom | both")
        ->check(CLI::IsMember({"top", "bottom", "both"}));
    fig->add_option("--convention", fig_convention,
                    "interaction convention; figure 2 runs both unless one is given")
        ->check(CLI::IsMember({"macroscopic", "microscopic", "macro", "micro"}));
    fig->add_option("--out", fig_out, "output directory (default: $BHDIMER_OUT or ./out)");
    fig->add_option("--threads", fig_threads, "worker threads")->check(CLI::Range(1u, 1024u));
    for (const char* key : {"rtol", "atol", "fixed_step"}) {
        fig->add_option(flag_name(key), fig_values[key], "solver override");
    }
    fig->add_flag("--extended-precision{true}", fig_values["extended_precision"],
                  "propagate the many-particle state in 128-bit arithmetic");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kInvalidInput;
    }

    auto context = [](const std::string& flag_out) {
        RunContext ctx;
        if (!flag_out.empty()) {
            ctx.out_dir = flag_out;
            ctx.out_requested = true;
        } else if (const char* env = std::getenv(kOutputEnv); env && *env) {
            ctx.out_dir = env;
            ctx.out_requested = true;
        } else {
            ctx.out_dir = kDefaultOutput;
        }
        return ctx;
    };

    try {
        if (fig->parsed()) {
            const RunContext ctx = context(fig_out);
            config::KeyValues over;
            for (const auto& [k, v] : fig_values) {
                if (fig->count(flag_name(k)) > 0) over[k] = {v, flag_name(k) + " flag"};
            }
            std::vector<Job> jobs;
            if (figure_which == "1") {
                for (const auto& [id, p] : experiments::figure1_panels()) {
                    auto kv = preset_portrait(id, p);
                    overlay(kv, over, keys_for("phase-portrait"));
                    jobs.push_back({"phase-portrait", kv});
                }
            } else {
                using experiments::Convention;
                const bool has_conv = !fig_convention.empty();
                const Convention chosen = fig_convention.rfind("micro", 0) == 0 ? Convention::Microscopic
                                                                                : Convention::Macroscopic;
                std::vector<experiments::ExperimentSpec> specs;
                if (figure_which == "2") {
                    if (!has_conv || chosen == Convention::Macroscopic) {
                        specs.push_back(experiments::figure2_spec(Convention::Macroscopic));
                    }
                    if (!has_conv || chosen == Convention::Microscopic) {
                        specs.push_back(experiments::figure2_spec(Convention::Microscopic));
                    }
                } else {
                    const Convention c = has_conv ? chosen : Convention::Macroscopic;
                    if (panel != "bottom") specs.push_back(experiments::figure3_spec(false, c));
                    if (panel != "top") specs.push_back(experiments::figure3_spec(true, c));
                    if (has_conv && c == Convention::Microscopic) {
                        for (auto& s : specs) s.id += "_microscopic";
                    }
                }
                for (const auto& s : specs) {
                    auto kv = preset_compare(s, figure_which == "2" ? "staircase" : "imbalance");
                    overlay(kv, over, keys_for("compare"));
                    jobs.push_back({"compare", kv});
                }
            }
            return run_jobs(jobs, ctx, fig_threads, 1, out, err);
        }

        for (auto& [name, s] : subs) {
            if (!s.app->parsed()) continue;
            const RunContext ctx = context(s.out);
            config::KeyValues flags;
            for (const auto& [k, v] : s.values) {
                if (s.app->count(flag_name(k)) > 0) flags[k] = {v, flag_name(k) + " flag"};
            }
            std::vector<Job> jobs;
            if (s.specs.empty()) {
                jobs.push_back({name, flags});
            } else {
                for (const auto& path : s.specs) {
                    config::KeyValues kv = config::load_spec_file(path);
                    for (const auto& [k, e] : flags) kv[k] = e;
                    jobs.push_back({name, kv});
                }
            }
            if (jobs.size() > 1) {
                std::set<std::string> ids;
                for (std::size_t i = 0; i < jobs.size(); ++i) {
                    const auto it = jobs[i].kv.find("id");
                    const std::string id = it == jobs[i].kv.end() ? "" : it->second.value;
                    if (id.empty() || !ids.insert(id).second) {
                        throw ValidationError(s.specs[i] + ": batched runs need distinct 'id' values");
                    }
                }
            }
            const bool batch = name == "compare";
            return run_jobs(jobs, ctx, batch ? s.threads : 1, name == "region-scan" ? s.threads : 1, out, err);
        }
    } catch (...) {
        return report_exception(err, "");
    }
    return kInvalidInput;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, out, err);
}

} // namespace bhdimer::cli
