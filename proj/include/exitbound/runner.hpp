#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "exitbound/bound.hpp"
#include "exitbound/pde.hpp"
#include "exitbound/scenario.hpp"
#include "exitbound/sde.hpp"
#include "exitbound/stats.hpp"

namespace exitbound {

inline constexpr const char* kVersion = "1.0.0";

/// Process exit statuses; the only pass/fail channel of the tool.
enum ExitStatus : int { kPass = 0, kViolation = 2, kValidation = 3, kNumerical = 4 };

struct RunOptions {
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::ostream* log = &std::cout;
};

/// Fraction of censored replicates above which results are not trusted.
inline constexpr double kMaxCensoredFraction = 0.01;

namespace detail {

using json = nlohmann::ordered_json;

/// Shortest round-trip rendering, so CSV output is byte-stable.
inline std::string fmt(double x) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline json vec_json(const Vec& v) {
    json a = json::array();
    for (double x : v) a.push_back(x);
    return a;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

/// Runs `f`, prefixing any library error with the stage name while keeping
/// its category.
template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const InputError& e) {
        throw InputError(std::string(name) + ": " + e.what());
    } catch (const DomainError& e) {
        throw DomainError(std::string(name) + ": " + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(name) + ": " + e.what());
    }
}

struct SolvedProcess {
    MeanExitField fine;
    MeanExitField coarse;
    double sup_fine = 0.0;
    double sup_coarse = 0.0;
};

inline SolvedProcess solve_process(const Scenario& s, int i) {
    const auto& p = s.process(i);
    return stage("pde", [&] {
        MeanExitField fine = solve_mean_exit_time(s.region, p.spec, s.grid.resolution);
        MeanExitField coarse = solve_mean_exit_time(s.region, p.spec, coarser_resolution(s.grid.resolution));
        const double sf = sup_grad_norm(fine), sc = sup_grad_norm(coarse);
        return SolvedProcess{std::move(fine), std::move(coarse), sf, sc};
    });
}

/// Censoring horizon: declared, or 50 times the larger expected exit time
/// from the starts (falling back to the field maximum for starts on the
/// boundary).
inline double horizon(const Scenario& s, const MeanExitField& f1, const MeanExitField& f2, double dt) {
    if (s.mc.t_max) return *s.mc.t_max;
    double scale = std::max(f1.interpolate(s.process(1).start), f2.interpolate(s.process(2).start));
    if (!(50.0 * scale >= 10.0 * dt)) scale = std::max(f1.max_value(), f2.max_value());
    return std::max(50.0 * scale, 10.0 * dt);
}

inline json region_json(const Region& r) {
    json j;
    j["kind"] = r.kind();
    if (const auto* iv = r.as_interval()) {
        j["lo"] = iv->lo;
        j["hi"] = iv->hi;
    } else if (const auto* b = r.as_box()) {
        j["lo"] = vec_json(b->lo);
        j["hi"] = vec_json(b->hi);
    } else {
        j["center"] = vec_json(r.as_ball()->center);
        j["radius"] = r.as_ball()->radius;
    }
    return j;
}

inline json settings_json(const Scenario& s, double t_max) {
    json j;
    j["scenario"] = s.name;
    j["region"] = region_json(s.region);
    j["a1"] = vec_json(s.process(1).start);
    j["a2"] = vec_json(s.process(2).start);
    j["resolution"] = s.grid.resolution;
    j["replicates"] = s.mc.replicates;
    j["dt"] = s.mc.dt;
    j["t_max"] = t_max;
    j["bridge_correction"] = s.mc.bridge_correction;
    j["coupling"] = to_string(s.mc.coupling);
    j["base_seed"] = s.mc.base_seed;
    return j;
}

inline void write_field_csv(const std::filesystem::path& path, const MeanExitField& f) {
    const Grid& g = f.grid();
    const std::size_t n = g.dim();
    std::ostringstream os;
    for (std::size_t j = 0; j < n; ++j) os << 'y' << j + 1 << ',';
    os << "v";
    for (std::size_t j = 0; j < n; ++j) os << ",dv_dy" << j + 1;
    os << ",node\n";
    Vec p(n);
    for (std::size_t node = 0; node < g.node_count(); ++node) {
        const NodeKind kind = g.kind(node);
        if (kind == NodeKind::Exterior) continue;
        g.coordinates(node, p);
        for (double x : p) os << fmt(x) << ',';
        os << fmt(f.value(node));
        const bool grad = f.has_gradient(node);
        for (std::size_t j = 0; j < n; ++j) os << ',' << (grad ? fmt(f.gradient(node)[j]) : std::string());
        os << ',' << (kind == NodeKind::Interior ? "interior" : "boundary") << '\n';
    }
    write_text(path, os.str());
}

inline void write_replicates_csv(const std::filesystem::path& path, const std::vector<CoupledPairOutcome>& outs,
                                 std::size_t n) {
    std::ostringstream os;
    os << "replicate,T1,T2,T_tilde,e1,e2,censored1,censored2";
    for (int i = 1; i <= 2; ++i) {
        for (std::size_t j = 0; j < n; ++j) os << ",y" << i << "_Ttilde_" << j + 1;
    }
    for (int i = 1; i <= 2; ++i) {
        for (std::size_t j = 0; j < n; ++j) os << ",exit" << i << "_" << j + 1;
    }
    os << '\n';
    for (const auto& o : outs) {
        os << o.replicate << ',' << fmt(o.T1) << ',' << fmt(o.T2) << ',' << fmt(o.T_tilde) << ',' << o.e1 << ','
           << o.e2 << ',' << int(o.censored1) << ',' << int(o.censored2);
        for (const Vec* v : {&o.y1_at_Ttilde, &o.y2_at_Ttilde, &o.exit1_pos, &o.exit2_pos}) {
            for (double x : *v) os << ',' << fmt(x);
        }
        os << '\n';
    }
    write_text(path, os.str());
}

class Run {
public:
    Run(Scenario s, const RunOptions& opts, std::string command)
        : s_(std::move(s)), opts_(opts), command_(std::move(command)), log_(*opts.log) {
        if (opts_.seed) s_.mc.base_seed = *opts_.seed;
        if (opts_.out) {
            dir_ = *opts_.out;
        } else if (const char* env = std::getenv("EXITBOUND_OUT"); env && *env) {
            dir_ = env;
        } else {
            dir_ = s_.output.directory;
        }
        std::filesystem::create_directories(dir_);
        started_ = utc_now();
        t0_ = std::chrono::steady_clock::now();
    }

    int solve_pde() {
        json meta;
        meta["scenario"] = s_.name;
        meta["region"] = region_json(s_.region);
        meta["processes"] = json::array();
        for (int i = 1; i <= 2; ++i) {
            const SolvedProcess sp = solve_process(s_, i);
            const auto& p = s_.process(i);
            write_field_csv(dir_ / ("field_process" + std::to_string(i) + ".csv"), sp.fine);
            json j;
            j["process"] = i;
            j["resolution"] = s_.grid.resolution;
            j["unknowns"] = sp.fine.grid().interior_count();
            j["h"] = sp.fine.spacing();
            j["residual"] = sp.fine.residual();
            j["iterations"] = sp.fine.iterations();
            j["upwind_nodes"] = sp.fine.upwind_nodes();
            j["sup_grad_norm"] = sp.sup_fine;
            j["sup_grad_norm_coarse"] = sp.sup_coarse;
            j["h_coarse"] = sp.coarse.spacing();
            j["v_at_start"] = sp.fine.interpolate(p.start);
            j["v_max"] = sp.fine.max_value();
            j["ellipticity_min_eigenvalue"] = p.ellipticity.min_eigenvalue;
            j["ellipticity_pass"] = p.ellipticity.pass;
            meta["processes"].push_back(j);
            log_ << "process" << i << ": v(a" << i << ") = " << fmt(sp.fine.interpolate(p.start))
                 << ", sup|dv/dy| = " << fmt(sp.sup_fine) << " (h = " << fmt(sp.fine.spacing())
                 << "), coarse " << fmt(sp.sup_coarse) << " (h = " << fmt(sp.coarse.spacing()) << ")\n";
        }
        write_json(dir_ / "solve_pde.json", meta);
        finish();
        return kPass;
    }

    int simulate() {
        double t_max = 0.0;
        if (s_.mc.t_max) {
            t_max = *s_.mc.t_max;
        } else {
            const SolvedProcess p1 = solve_process(s_, 1), p2 = solve_process(s_, 2);
            t_max = horizon(s_, p1.fine, p2.fine, s_.mc.dt);
        }
        const auto outs = run_pairs(t_max);
        write_replicates_csv(dir_ / "replicates.csv", outs, s_.region.dim());
        json j = settings_json(s_, t_max);
        std::size_t censored = 0;
        for (const auto& o : outs) censored += o.censored() ? 1 : 0;
        j["n_censored"] = censored;
        if (outs.size() - censored >= kMinReplicates) {
            std::vector<double> t1, t2;
            for (const auto& o : outs) {
                if (o.censored()) continue;
                t1.push_back(o.T1);
                t2.push_back(o.T2);
            }
            const MeanSe m1 = mean_and_se(t1), m2 = mean_and_se(t2);
            const MeanSe lhs = estimate_lhs(outs), disp = estimate_displacement(outs);
            j["T1_mean"] = m1.mean;
            j["T1_se"] = m1.se;
            j["T2_mean"] = m2.mean;
            j["T2_se"] = m2.se;
            j["lhs_mean"] = lhs.mean;
            j["lhs_se"] = lhs.se;
            j["displacement_mean"] = disp.mean;
            j["displacement_se"] = disp.se;
            log_ << "E T1 = " << fmt(m1.mean) << " +- " << fmt(m1.se) << ", E T2 = " << fmt(m2.mean) << " +- "
                 << fmt(m2.se) << ", E|T1 - T2| = " << fmt(lhs.mean) << " +- " << fmt(lhs.se) << '\n';
        }
        write_json(dir_ / "simulate_summary.json", j);
        finish();
        return censored_status(censored, outs.size());
    }

    int verify_bound() {
        const SolvedProcess p1 = solve_process(s_, 1), p2 = solve_process(s_, 2);
        const double t_max = horizon(s_, p1.fine, p2.fine, s_.mc.dt);
        const auto outs = run_pairs(t_max);
        std::size_t kept = 0;
        for (const auto& o : outs) kept += o.censored() ? 0 : 1;
        if (kept < kMinReplicates) {
            throw NumericalError("sde: only " + std::to_string(kept) + " of " + std::to_string(outs.size()) +
                                 " replicates exited both chains before t_max = " + fmt(t_max) +
                                 "; raise mc.t_max");
        }
        BoundContext ctx{s_.process(1).start, s_.process(2).start, s_.mc.dt,
                         std::max(p1.sup_coarse, p2.sup_coarse),
                         std::max(p1.coarse.spacing(), p2.coarse.spacing())};
        const BoundReport rep = stage("bound", [&] { return exitbound::verify_bound(p1.fine, p2.fine, outs, ctx); });

        json j = settings_json(s_, t_max);
        const json body = to_json(rep);
        for (const auto& [k, v] : body.items()) j[k] = v;
        write_json(dir_ / "bound_report.json", j);
        const std::string table = "scenario: " + s_.name + "\n" + render_table(rep);
        write_text(dir_ / "bound_report.txt", table);
        log_ << table;
        if (s_.output.dump_replicates || !rep.holds) {
            write_replicates_csv(dir_ / "replicates.csv", outs, s_.region.dim());
        }
        finish();
        if (!rep.holds) {
            log_ << "BOUND VIOLATED: E|T1-T2| exceeds the bound by more than 3 combined SE; replicates dumped to "
                 << (dir_ / "replicates.csv").string() << '\n';
            return kViolation;
        }
        if (!rep.decomposition.pass()) {
            log_ << "decomposition identity residual " << fmt(rep.decomposition.residual) << " exceeds tolerance\n";
            return kNumerical;
        }
        return censored_status(rep.n_censored, rep.n_replicates);
    }

    int convergence() {
        const std::size_t levels = s_.grid.refinements + 1;
        json report;
        report["scenario"] = s_.name;
        std::ostringstream csv;
        csv << "study,process,level,step,size,value,error,se\n";
        bool pass = true;

        json spatial = json::array();
        std::optional<MeanExitField> finest1, finest2;
        for (int i = 1; i <= 2; ++i) {
            const auto& p = s_.process(i);
            std::vector<MeanExitField> fields;
            std::size_t upwind = 0;
            for (std::size_t k = 0; k < levels; ++k) {
                const std::size_t res = (s_.grid.resolution - 1) / (std::size_t{1} << (levels - 1 - k)) + 1;
                fields.push_back(stage("pde", [&] { return solve_mean_exit_time(s_.region, p.spec, res); }));
                upwind += fields.back().upwind_nodes();
            }
            // Probes: interior nodes of the coarsest grid, which are nodes of
            // every level, so no interpolation error enters the differences.
            std::vector<Vec> probes;
            const Grid& g0 = fields.front().grid();
            for (std::size_t node = 0; node < g0.node_count(); ++node) {
                if (g0.kind(node) != NodeKind::Interior) continue;
                Vec q(g0.dim());
                g0.coordinates(node, q);
                probes.push_back(std::move(q));
            }
            std::vector<double> hs, diffs;
            double vscale = 0.0;
            for (std::size_t k = 0; k < levels; ++k) {
                vscale = std::max(vscale, std::abs(fields[k].max_value()));
                const double vk = fields[k].interpolate(p.start);
                double diff = 0.0;
                if (k + 1 < levels) {
                    for (const auto& q : probes) {
                        diff = std::max(diff, std::abs(fields[k].interpolate(q) - fields[k + 1].interpolate(q)));
                    }
                    hs.push_back(fields[k].spacing());
                    diffs.push_back(diff);
                }
                csv << "spatial," << i << ',' << k << ',' << fmt(fields[k].spacing()) << ','
                    << fields[k].grid().resolution() << ',' << fmt(vk) << ',' << (k + 1 < levels ? fmt(diff) : "")
                    << ",0\n";
            }
            const double floor = 1e-10 * std::max(1.0, vscale);
            const bool exact = *std::max_element(diffs.begin(), diffs.end()) <= floor;
            const double target = (s_.region.is_ball() || upwind > 0) ? 0.9 : 1.9;
            const double order = exact ? 0.0 : fitted_order(hs, diffs);
            const bool ok = exact || order >= target;
            pass = pass && ok;
            json j;
            j["process"] = i;
            j["status"] = exact ? "exact" : "measured";
            if (exact) {
                j["fitted_order"] = nullptr;
            } else {
                j["fitted_order"] = order;
            }
            j["target"] = target;
            j["pass"] = ok;
            j["upwind_nodes"] = upwind;
            j["h"] = vec_json(hs);
            j["differences"] = vec_json(diffs);
            spatial.push_back(j);
            log_ << "spatial process" << i << ": "
                 << (exact ? std::string("exact to roundoff") : "order " + fmt(order)) << " (target "
                 << fmt(target) << ") " << (ok ? "PASS" : "FAIL") << '\n';
            (i == 1 ? finest1 : finest2).emplace(std::move(fields.back()));
        }
        report["spatial"] = spatial;

        // Euler exit-time bias of process 1 without bridge correction.
        const auto& p = s_.process(1);
        const double v_ref = finest1->interpolate(p.start);
        double t_max = horizon(s_, *finest1, *finest2, s_.convergence.dt);
        t_max = std::max(t_max, 10.0 * s_.convergence.dt);
        std::vector<double> dts, bias;
        json time;
        time["process"] = 1;
        time["reference"] = v_ref;
        time["replicates"] = s_.convergence.replicates;
        json rows = json::array();
        std::size_t censored = 0;
        for (std::size_t k = 0; k < s_.convergence.levels; ++k) {
            PathConfig c = s_.path_config(t_max);
            c.dt = s_.convergence.dt / std::pow(4.0, static_cast<double>(k));
            c.bridge_correction = false;
            const auto outs = stage("sde", [&] {
                const PairSimulator sim(p.spec, p.spec, p.start, p.start, s_.region, c);
                return simulate_single_replicates(sim, s_.convergence.replicates, opts_.workers);
            });
            std::vector<double> ts;
            for (const auto& o : outs) {
                if (o.censored) {
                    ++censored;
                } else {
                    ts.push_back(o.T);
                }
            }
            if (ts.size() < kMinReplicates) throw NumericalError("sde: too few uncensored replicates in bias study");
            const MeanSe m = mean_and_se(ts);
            dts.push_back(c.dt);
            bias.push_back(m.mean - v_ref);
            json r;
            r["dt"] = c.dt;
            r["mean_exit_time"] = m.mean;
            r["se"] = m.se;
            r["bias"] = m.mean - v_ref;
            rows.push_back(r);
            csv << "time,1," << k << ',' << fmt(c.dt) << ',' << ts.size() << ',' << fmt(m.mean) << ','
                << fmt(m.mean - v_ref) << ',' << fmt(m.se) << '\n';
        }
        time["levels"] = rows;
        const bool applicable = v_ref > 0.0;
        std::vector<double> abs_bias(bias.size());
        std::transform(bias.begin(), bias.end(), abs_bias.begin(), [](double b) { return std::abs(b); });
        const double order = applicable ? fitted_order(dts, abs_bias) : 0.0;
        const bool time_ok = !applicable || order >= 0.4;
        if (applicable) {
            time["fitted_order"] = order;
        } else {
            time["fitted_order"] = nullptr;
        }
        time["target"] = 0.4;
        time["pass"] = time_ok;
        time["n_censored"] = censored;
        report["time"] = time;
        pass = pass && time_ok;
        report["pass"] = pass;
        log_ << "Euler bias order in dt: " << (applicable ? fmt(order) : std::string("n/a (start on boundary)"))
             << " (target 0.4) " << (time_ok ? "PASS" : "FAIL") << '\n';

        write_text(dir_ / "convergence.csv", csv.str());
        write_json(dir_ / "convergence.json", report);
        finish();
        return pass ? kPass : kViolation;
    }

    [[nodiscard]] const std::filesystem::path& directory() const noexcept { return dir_; }

private:
    std::vector<CoupledPairOutcome> run_pairs(double t_max) {
        const auto& p1 = s_.process(1);
        const auto& p2 = s_.process(2);
        return stage("sde", [&] {
            const PairSimulator sim(p1.spec, p2.spec, p1.start, p2.start, s_.region, s_.path_config(t_max));
            return simulate_replicates(sim, s_.mc.replicates, opts_.workers);
        });
    }

    int censored_status(std::size_t censored, std::size_t total) {
        const double frac = total ? static_cast<double>(censored) / static_cast<double>(total) : 0.0;
        if (frac > kMaxCensoredFraction) {
            log_ << "censored fraction " << fmt(frac) << " exceeds " << fmt(kMaxCensoredFraction)
                 << "; raise mc.t_max\n";
            return kNumerical;
        }
        return kPass;
    }

    void finish() {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
        json j;
        j["command"] = command_;
        j["scenario_file"] = s_.source.string();
        j["started_at"] = started_;
        j["wall_seconds"] = wall;
        j["workers"] = opts_.workers;
        j["version"] = kVersion;
        write_json(dir_ / ("run_metadata_" + command_ + ".json"), j);
    }

    Scenario s_;
    RunOptions opts_;
    std::string command_;
    std::ostream& log_;
    std::filesystem::path dir_;
    std::string started_;
    std::chrono::steady_clock::time_point t0_;
};

}  // namespace detail

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> c{"solve-pde", "simulate", "verify-bound", "convergence"};
    return c;
}

/// Loads the scenario, runs one command and maps failures onto exit
/// statuses. Messages go to `err`.
inline int run_command(const std::string& command, const std::filesystem::path& scenario, const RunOptions& opts,
                       std::ostream& err = std::cerr) {
    try {
        if (std::find(commands().begin(), commands().end(), command) == commands().end()) {
            throw InputError("unknown command '" + command + "'");
        }
        if (opts.workers == 0) throw InputError("--workers must be at least 1");
        Scenario s = detail::stage("scenario", [&] { return load_scenario(scenario); });
        detail::Run run(std::move(s), opts, command);
        if (command == "solve-pde") return run.solve_pde();
        if (command == "simulate") return run.simulate();
        if (command == "verify-bound") return run.verify_bound();
        return run.convergence();
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: output: " << e.what() << '\n';
        return kValidation;
    } catch (const DomainError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    }
}

}  // namespace exitbound
