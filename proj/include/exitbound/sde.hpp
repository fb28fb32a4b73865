#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "exitbound/diffusion.hpp"
#include "exitbound/errors.hpp"
#include "exitbound/geometry.hpp"
#include "exitbound/pde.hpp"
#include "exitbound/rng.hpp"

namespace exitbound {

enum class Coupling { Shared, Independent };

inline const char* to_string(Coupling c) { return c == Coupling::Shared ? "shared" : "independent"; }

struct PathConfig {
    double dt = 1e-4;
    /// Censoring horizon.
    double t_max = 10.0;
    /// Brownian-bridge detection of exits between lattice times (n = d = 1,
    /// constant diffusion only).
    bool bridge_correction = false;
    std::uint64_t base_seed = 0;
    Coupling coupling = Coupling::Shared;
};

/// One replicate of the coupled pair. Times of censored chains are t_max.
struct CoupledPairOutcome {
    double T1 = 0.0;
    double T2 = 0.0;
    double T_tilde = 0.0;
    Vec y1_at_Ttilde;
    Vec y2_at_Ttilde;
    Vec exit1_pos;
    Vec exit2_pos;
    int e1 = 0;
    int e2 = 0;
    bool censored1 = false;
    bool censored2 = false;
    std::uint64_t replicate = 0;

    [[nodiscard]] bool censored() const noexcept { return censored1 || censored2; }

    /// |y1(T~) - y2(T~)|
    [[nodiscard]] double displacement() const noexcept {
        double s = 0.0;
        for (std::size_t j = 0; j < y1_at_Ttilde.size(); ++j) {
            const double d = y1_at_Ttilde[j] - y2_at_Ttilde[j];
            s += d * d;
        }
        return std::sqrt(s);
    }
};

/// Single-chain first exit.
struct ExitOutcome {
    double T = 0.0;
    Vec exit_pos;
    bool censored = false;
    std::uint64_t replicate = 0;
};

/// One Euler-Maruyama step: out = y + f(y) dt + beta(y) dW. `scratch` holds
/// n + n*d values.
inline void em_step(std::span<const double> y, const DiffusionSpec& spec, std::span<const double> dw, double dt,
                    std::span<double> out, std::span<double> scratch) {
    const std::size_t n = spec.n(), d = spec.d();
    if (y.size() != n || out.size() != n) throw InputError("state has the wrong dimension");
    if (dw.size() != d) throw InputError("Wiener increment has the wrong dimension");
    auto f = scratch.first(n);
    auto beta = scratch.subspan(n, n * d);
    spec.drift(y, f);
    spec.diffusion(y, beta);
    for (std::size_t j = 0; j < n; ++j) {
        double x = y[j] + f[j] * dt;
        for (std::size_t k = 0; k < d; ++k) x += beta[j * d + k] * dw[k];
        out[j] = x;
    }
}

inline Vec em_step(const Vec& y, const DiffusionSpec& spec, const Vec& dw, double dt) {
    Vec out(spec.n()), scratch(spec.n() + spec.n() * spec.d());
    em_step(y, spec, dw, dt, out, scratch);
    return out;
}

namespace detail {

/// Evolving state of one chain inside a replicate.
class Chain {
public:
    Chain(const DiffusionSpec& spec, const Region& region, std::span<const double> start, bool bridge)
        : spec_(&spec), region_(&region), y_(start.begin(), start.end()), prev_(y_.size()),
          f_(spec.n()), beta_(spec.n() * spec.d()), bridge_(bridge) {
        if (spec.constant_drift()) spec.drift(y_, f_);
        if (spec.constant_diffusion()) spec.diffusion(y_, beta_);
        if (bridge_) sigma2_ = beta_[0] * beta_[0];
        if (!region.contains_unchecked(y_)) {
            // Start on the boundary: exit at time zero.
            alive_ = false;
            exit_pos_ = y_;
        }
    }

    [[nodiscard]] bool alive() const noexcept { return alive_; }
    [[nodiscard]] bool exited_now() const noexcept { return exited_now_; }
    [[nodiscard]] bool via_bridge() const noexcept { return via_bridge_; }
    [[nodiscard]] double theta() const noexcept { return theta_; }
    [[nodiscard]] double exit_time() const noexcept { return exit_time_; }
    [[nodiscard]] const Vec& exit_pos() const noexcept { return exit_pos_; }
    [[nodiscard]] const Vec& state() const noexcept { return y_; }
    [[nodiscard]] const Vec& previous() const noexcept { return prev_; }
    [[nodiscard]] double drift0() const noexcept { return f_[0]; }
    [[nodiscard]] double beta0() const noexcept { return beta_[0]; }

    /// Advances by one lattice step ending at t_next. `u_low` and `u_high`
    /// are the bridge uniforms for this step.
    void step(std::span<const double> dw, double dt, double t_next, double u_low, double u_high) {
        exited_now_ = false;
        prev_ = y_;
        const std::size_t n = spec_->n(), d = spec_->d();
        try {
            if (!spec_->constant_drift()) spec_->drift(prev_, f_);
            if (!spec_->constant_diffusion()) spec_->diffusion(prev_, beta_);
        } catch (const DomainError& e) {
            std::ostringstream os;
            os << e.what() << " at t = " << (t_next - dt) << ", state " << detail::format_point(prev_);
            throw DomainError(os.str());
        }
        for (std::size_t j = 0; j < n; ++j) {
            double x = prev_[j] + f_[j] * dt;
            for (std::size_t k = 0; k < d; ++k) x += beta_[j * d + k] * dw[k];
            y_[j] = x;
        }
        if (!region_->contains_unchecked(y_)) {
            theta_ = region_->segment_exit_fraction(prev_, y_);
            exit_pos_.resize(n);
            for (std::size_t j = 0; j < n; ++j) exit_pos_[j] = prev_[j] + theta_ * (y_[j] - prev_[j]);
            region_->snap_to_boundary(exit_pos_);
            finish(t_next, false);
        } else if (bridge_) {
            bridge_check(dt, t_next, u_low, u_high);
        }
    }

    void censor(double t_max) {
        alive_ = false;
        censored_ = true;
        exit_time_ = t_max;
        exit_pos_ = y_;
    }

    [[nodiscard]] bool censored() const noexcept { return censored_; }

    /// Position at fraction s of the last step.
    void position_at(double s, std::span<double> out) const {
        for (std::size_t j = 0; j < y_.size(); ++j) out[j] = prev_[j] + s * (y_[j] - prev_[j]);
    }

private:
    // Crossing probability of a Brownian bridge between two interior
    // points: exp(-2 d_k d_{k+1} / (sigma^2 dt)) for each endpoint face.
    void bridge_check(double dt, double t_next, double u_low, double u_high) {
        const Interval& iv = *region_->as_interval();
        const double scale = -2.0 / (sigma2_ * dt);
        const double x_low = scale * (prev_[0] - iv.lo) * (y_[0] - iv.lo);
        const double x_high = scale * (iv.hi - prev_[0]) * (iv.hi - y_[0]);
        // exp(-50) is far below the smallest uniform the stream produces.
        const double p_low = x_low > -50.0 ? std::exp(x_low) : 0.0;
        const double p_high = x_high > -50.0 ? std::exp(x_high) : 0.0;
        const bool low = u_low < p_low;
        const bool high = u_high < p_high;
        if (!low && !high) return;
        exit_pos_ = {(low && (!high || p_low >= p_high)) ? iv.lo : iv.hi};
        theta_ = 0.5;
        finish(t_next, true);
    }

    void finish(double t, bool bridge) {
        alive_ = false;
        exited_now_ = true;
        via_bridge_ = bridge;
        exit_time_ = t;
    }

    const DiffusionSpec* spec_;
    const Region* region_;
    Vec y_, prev_, f_, beta_;
    Vec exit_pos_;
    bool bridge_;
    double sigma2_ = 1.0;
    bool alive_ = true;
    bool censored_ = false;
    bool exited_now_ = false;
    bool via_bridge_ = false;
    double theta_ = 1.0;
    double exit_time_ = 0.0;
};

}  // namespace detail

/// Simulates coupled first exits of two diffusions from the same region.
///
/// Both chains advance on the common lattice t_k = k dt. Under shared
/// coupling they receive identical Wiener increments; each freezes at its
/// own exit. The exit time is the first lattice time at which the chain is
/// no longer inside, and the recorded exit position is the linear
/// interpolation onto the boundary. The states at T~ are taken at the
/// interpolated crossing moment of the first-exiting chain.
///
/// Immutable after construction; simulate() may be called concurrently.
class PairSimulator {
public:
    PairSimulator(DiffusionSpec spec1, DiffusionSpec spec2, Vec a1, Vec a2, Region region, PathConfig config)
        : spec1_(std::move(spec1)), spec2_(std::move(spec2)), a1_(std::move(a1)), a2_(std::move(a2)),
          region_(std::move(region)), config_(config) {
        const std::size_t n = region_.dim();
        if (spec1_.n() != n || spec2_.n() != n) throw InputError("process dimension does not match the region");
        if (a1_.size() != n || a2_.size() != n) throw InputError("start point dimension does not match the region");
        if (config_.coupling == Coupling::Shared && spec1_.d() != spec2_.d()) {
            throw InputError("shared coupling requires equal Wiener dimensions");
        }
        if (!region_.in_closure(a1_)) throw InputError("process1 start outside closure of the region");
        if (!region_.in_closure(a2_)) throw InputError("process2 start outside closure of the region");
        validate_path_config(config_);
        if (config_.bridge_correction) {
            validate_bridge(spec1_, "process1");
            validate_bridge(spec2_, "process2");
        }
        max_steps_ = static_cast<std::uint64_t>(std::floor(config_.t_max / config_.dt));
    }

    static void validate_path_config(const PathConfig& c) {
        if (!(c.dt > 0.0) || !std::isfinite(c.dt)) throw InputError("dt must be positive");
        if (!(c.t_max > 0.0) || !std::isfinite(c.t_max)) throw InputError("t_max must be positive");
        if (c.dt > c.t_max / 10.0) throw InputError("dt must not exceed t_max / 10");
    }

    [[nodiscard]] const PathConfig& config() const noexcept { return config_; }
    [[nodiscard]] const Region& region() const noexcept { return region_; }

    [[nodiscard]] CoupledPairOutcome simulate(std::uint64_t replicate) const {
        const std::size_t n = region_.dim();
        const bool bridge = config_.bridge_correction;
        const bool shared = config_.coupling == Coupling::Shared;
        detail::Chain c1(spec1_, region_, a1_, bridge);
        detail::Chain c2(spec2_, region_, a2_, bridge);
        CounterStream w1(config_.base_seed, StreamPurpose::Wiener, replicate);
        CounterStream w2(config_.base_seed, StreamPurpose::WienerIndependent, replicate);
        const CounterStream b1(config_.base_seed, StreamPurpose::Bridge, replicate);
        const CounterStream b2(config_.base_seed ^ 0x5bd1e995ull, StreamPurpose::Bridge, replicate);
        Vec dw1(spec1_.d()), dw2(spec2_.d());

        CoupledPairOutcome out;
        out.replicate = replicate;
        bool have_tilde = false;
        if (!c1.alive() || !c2.alive()) {
            out.T_tilde = 0.0;
            out.y1_at_Ttilde = a1_;
            out.y2_at_Ttilde = a2_;
            have_tilde = true;
        }

        for (std::uint64_t k = 0; (c1.alive() || c2.alive()) && k < max_steps_; ++k) {
            const double t_next = static_cast<double>(k + 1) * config_.dt;
            wiener_increments(w1, dw1, config_.dt);
            if (shared) {
                std::copy(dw1.begin(), dw1.end(), dw2.begin());
            } else {
                wiener_increments(w2, dw2, config_.dt);
            }
            double u1 = 1.0, u2 = 1.0;
            if (bridge) {
                u1 = to_unit_open_closed(b1.at(k));
                u2 = shared ? u1 : to_unit_open_closed(b2.at(k));
            }
            if (c1.alive()) c1.step(dw1, config_.dt, t_next, u1, 1.0 - u1);
            if (c2.alive()) c2.step(dw2, config_.dt, t_next, u2, 1.0 - u2);
            if (!have_tilde && (c1.exited_now() || c2.exited_now())) {
                record_tilde(c1, c2, t_next, shared, out);
                have_tilde = true;
            }
        }
        if (c1.alive()) c1.censor(config_.t_max);
        if (c2.alive()) c2.censor(config_.t_max);
        if (!have_tilde) {
            out.T_tilde = config_.t_max;
            out.y1_at_Ttilde = c1.state();
            out.y2_at_Ttilde = c2.state();
        }
        (void)n;
        out.T1 = c1.exit_time();
        out.T2 = c2.exit_time();
        out.exit1_pos = c1.exit_pos();
        out.exit2_pos = c2.exit_pos();
        out.censored1 = c1.censored();
        out.censored2 = c2.censored();
        if (!out.censored()) {
            out.e1 = out.T1 > out.T2 ? 1 : 0;
            out.e2 = out.T2 > out.T1 ? 1 : 0;
        }
        return out;
    }

    /// First exit of process 1 alone (no pairing), on the same streams.
    [[nodiscard]] ExitOutcome simulate_single(std::uint64_t replicate) const {
        detail::Chain c(spec1_, region_, a1_, config_.bridge_correction);
        CounterStream w(config_.base_seed, StreamPurpose::Wiener, replicate);
        const CounterStream b(config_.base_seed, StreamPurpose::Bridge, replicate);
        Vec dw(spec1_.d());
        for (std::uint64_t k = 0; c.alive() && k < max_steps_; ++k) {
            wiener_increments(w, dw, config_.dt);
            const double u = config_.bridge_correction ? to_unit_open_closed(b.at(k)) : 1.0;
            c.step(dw, config_.dt, static_cast<double>(k + 1) * config_.dt, u, 1.0 - u);
        }
        if (c.alive()) c.censor(config_.t_max);
        return ExitOutcome{c.exit_time(), c.exit_pos(), c.censored(), replicate};
    }

private:
    void validate_bridge(const DiffusionSpec& spec, const char* which) const {
        if (spec.n() != 1 || spec.d() != 1 || region_.as_interval() == nullptr) {
            throw InputError(std::string("bridge_correction requires n = d = 1 on an interval (") + which + ")");
        }
        // Constant over Q: checked on a uniform sample of the interval.
        const Interval& iv = *region_.as_interval();
        const Expr& beta = spec.diffusion_expr(0, 0);
        const double ref = beta.eval(Vec{0.5 * (iv.lo + iv.hi)});
        for (int i = 1; i < 64; ++i) {
            const double y = iv.lo + (iv.hi - iv.lo) * i / 64.0;
            const double v = beta.eval(Vec{y});
            if (std::abs(v - ref) > 1e-12 * std::max(1.0, std::abs(ref))) {
                throw InputError(std::string("bridge_correction requires constant diffusion over Q (") + which + ")");
            }
        }
        if (ref == 0.0) throw InputError(std::string("bridge_correction requires nonzero diffusion (") + which + ")");
    }

    void record_tilde(const detail::Chain& c1, const detail::Chain& c2, double t, bool shared,
                      CoupledPairOutcome& out) const {
        const std::size_t n = region_.dim();
        out.T_tilde = t;
        const bool ex1 = c1.exited_now(), ex2 = c2.exited_now();
        double s = 1.0;
        if (ex1) s = std::min(s, c1.theta());
        if (ex2) s = std::min(s, c2.theta());
        const bool first1 = ex1 && c1.theta() == s;
        const bool first2 = ex2 && c2.theta() == s;
        out.y1_at_Ttilde.resize(n);
        out.y2_at_Ttilde.resize(n);
        auto place = [&](const detail::Chain& self, bool first, const detail::Chain& leader, Vec& dest) {
            if (first) {
                dest = self.exit_pos();
            } else if (leader.via_bridge() && shared) {
                // 1D, constant diffusion: the shared Wiener path moved the
                // leader to its boundary at s dt; move this chain with it.
                const double ds = s * config_.dt;
                const double w = (leader.exit_pos()[0] - leader.previous()[0] - leader.drift0() * ds) / leader.beta0();
                dest[0] = self.previous()[0] + self.drift0() * ds + self.beta0() * w;
                const Interval& iv = *region_.as_interval();
                dest[0] = std::clamp(dest[0], iv.lo, iv.hi);
            } else {
                self.position_at(s, dest);
            }
        };
        const detail::Chain& leader = first1 ? c1 : c2;
        place(c1, first1, leader, out.y1_at_Ttilde);
        place(c2, first2, leader, out.y2_at_Ttilde);
    }

    DiffusionSpec spec1_, spec2_;
    Vec a1_, a2_;
    Region region_;
    PathConfig config_;
    std::uint64_t max_steps_ = 0;
};

/// One replicate of the coupled pair.
inline CoupledPairOutcome simulate_pair(const DiffusionSpec& spec1, const DiffusionSpec& spec2, const Vec& a1,
                                        const Vec& a2, const Region& region, const PathConfig& config,
                                        std::uint64_t replicate) {
    return PairSimulator(spec1, spec2, a1, a2, region, config).simulate(replicate);
}

/// Evaluates job(i) for i in [0, count) on `workers` threads, storing
/// results by index. The first failing index (lowest) is rethrown.
template <typename Result, typename Job>
std::vector<Result> run_indexed(std::size_t count, std::size_t workers, Job&& job) {
    std::vector<Result> results(count);
    workers = std::max<std::size_t>(1, std::min(workers, count));
    constexpr std::size_t kChunk = 256;
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::size_t error_index = std::numeric_limits<std::size_t>::max();
    std::exception_ptr error;
    auto work = [&] {
        for (;;) {
            const std::size_t begin = next.fetch_add(kChunk);
            if (begin >= count) return;
            const std::size_t end = std::min(count, begin + kChunk);
            for (std::size_t i = begin; i < end; ++i) {
                try {
                    results[i] = job(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (i < error_index) {
                        error_index = i;
                        error = std::current_exception();
                    }
                    return;
                }
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
    return results;
}

/// Replicates 0..count-1 of the pair; ordering is by replicate index
/// regardless of the worker count.
inline std::vector<CoupledPairOutcome> simulate_replicates(const PairSimulator& sim, std::size_t count,
                                                           std::size_t workers = 1) {
    return run_indexed<CoupledPairOutcome>(count, workers, [&](std::size_t i) { return sim.simulate(i); });
}

inline std::vector<ExitOutcome> simulate_single_replicates(const PairSimulator& sim, std::size_t count,
                                                           std::size_t workers = 1) {
    return run_indexed<ExitOutcome>(count, workers, [&](std::size_t i) { return sim.simulate_single(i); });
}

}  // namespace exitbound
