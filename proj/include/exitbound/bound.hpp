#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "exitbound/errors.hpp"
#include "exitbound/pde.hpp"
#include "exitbound/sde.hpp"
#include "exitbound/stats.hpp"

namespace exitbound {

/// Minimum number of uncensored replicates the estimators accept.
inline constexpr std::size_t kMinReplicates = 100;

namespace detail {

inline std::vector<const CoupledPairOutcome*> uncensored(const std::vector<CoupledPairOutcome>& outcomes) {
    std::vector<const CoupledPairOutcome*> kept;
    kept.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        if (!o.censored()) kept.push_back(&o);
    }
    if (kept.size() < kMinReplicates) {
        throw InputError("too few uncensored replicates (" + std::to_string(kept.size()) + " < " +
                         std::to_string(kMinReplicates) + ")");
    }
    return kept;
}

template <typename F>
MeanSe estimate(const std::vector<CoupledPairOutcome>& outcomes, F&& per_replicate) {
    const auto kept = uncensored(outcomes);
    std::vector<double> xs;
    xs.reserve(kept.size());
    for (const auto* o : kept) xs.push_back(per_replicate(*o));
    return mean_and_se(xs);
}

}  // namespace detail

/// E|T1 - T2| over uncensored replicates.
inline MeanSe estimate_lhs(const std::vector<CoupledPairOutcome>& outcomes) {
    return detail::estimate(outcomes, [](const CoupledPairOutcome& o) { return std::abs(o.T1 - o.T2); });
}

/// E|y1(T~) - y2(T~)| over uncensored replicates.
inline MeanSe estimate_displacement(const std::vector<CoupledPairOutcome>& outcomes) {
    return detail::estimate(outcomes, [](const CoupledPairOutcome& o) { return o.displacement(); });
}

struct DecompositionCheck {
    double indicator_sum_1 = 0.0;  // sum e1 (T1 - T2)
    double indicator_sum_2 = 0.0;  // sum e2 (T2 - T1)
    double abs_sum = 0.0;          // sum |T1 - T2|
    double residual = 0.0;
    double tolerance = 0.0;
    [[nodiscard]] bool pass() const noexcept { return residual <= tolerance; }
};

/// Pathwise identity |T1 - T2| = e1 (T1 - T2) + e2 (T2 - T1), summed over
/// the uncensored replicates in replicate order.
inline DecompositionCheck decomposition_check(const std::vector<CoupledPairOutcome>& outcomes) {
    CompensatedSum s1, s2, sa;
    double max_t = 0.0;
    std::size_t count = 0;
    for (const auto& o : outcomes) {
        if (o.censored()) continue;
        s1.add(o.e1 * (o.T1 - o.T2));
        s2.add(o.e2 * (o.T2 - o.T1));
        sa.add(std::abs(o.T1 - o.T2));
        max_t = std::max({max_t, o.T1, o.T2});
        ++count;
    }
    DecompositionCheck c;
    c.indicator_sum_1 = s1.value();
    c.indicator_sum_2 = s2.value();
    c.abs_sum = sa.value();
    c.residual = std::abs(c.indicator_sum_1 + c.indicator_sum_2 - c.abs_sum);
    c.tolerance = 1e-12 * static_cast<double>(count) * max_t;
    return c;
}

struct DynkinCheck {
    double time_gap_mean = 0.0;  // E{e_i (T_i - T_j)}
    double field_mean = 0.0;     // E{e_i v_i(y_i(T~))}
    double residual = 0.0;
    double se = 0.0;
    double allowance = 0.0;
    [[nodiscard]] bool pass() const noexcept { return residual <= 3.0 * se + allowance; }
};

/// Compares E{e_i (T_i - T_j)} with E{e_i v_i(y_i(T~))}: on the event that
/// process i outlives process j, its remaining time is v_i at its position
/// at T~ in mean. `which` selects i (1 or 2). The allowance is added to the
/// pass threshold on top of 3 standard errors of the paired difference.
inline DynkinCheck dynkin_check(const MeanExitField& field, const std::vector<CoupledPairOutcome>& outcomes,
                                int which, double allowance = 0.0) {
    if (which != 1 && which != 2) throw InputError("dynkin_check selects process 1 or 2");
    const auto kept = detail::uncensored(outcomes);
    std::vector<double> gaps, fields, diffs;
    gaps.reserve(kept.size());
    fields.reserve(kept.size());
    diffs.reserve(kept.size());
    for (const auto* o : kept) {
        const int e = which == 1 ? o->e1 : o->e2;
        const double gap = which == 1 ? o->T1 - o->T2 : o->T2 - o->T1;
        const Vec& y = which == 1 ? o->y1_at_Ttilde : o->y2_at_Ttilde;
        const double g = e ? gap : 0.0;
        const double v = e ? field.interpolate(y) : 0.0;
        gaps.push_back(g);
        fields.push_back(v);
        diffs.push_back(g - v);
    }
    DynkinCheck c;
    c.time_gap_mean = mean_and_se(gaps).mean;
    c.field_mean = mean_and_se(fields).mean;
    const MeanSe d = mean_and_se(diffs);
    c.residual = std::abs(c.time_gap_mean - c.field_mean);
    c.se = d.se;
    c.allowance = allowance;
    return c;
}

struct PointCheck {
    double mc_mean = 0.0;  // E T_i
    double mc_se = 0.0;
    double field_value = 0.0;  // v_i(a_i)
    double residual = 0.0;
    double allowance = 0.0;
    [[nodiscard]] bool pass() const noexcept { return residual <= 3.0 * mc_se + allowance; }
};

/// E T_i against v_i(a_i).
inline PointCheck point_check(const MeanExitField& field, const Vec& start,
                              const std::vector<CoupledPairOutcome>& outcomes, int which, double allowance) {
    const MeanSe t = detail::estimate(outcomes, [which](const CoupledPairOutcome& o) { return which == 1 ? o.T1 : o.T2; });
    PointCheck c;
    c.mc_mean = t.mean;
    c.mc_se = t.se;
    c.field_value = field.interpolate(start);
    c.residual = std::abs(c.mc_mean - c.field_value);
    c.allowance = allowance;
    return c;
}

struct BoundReport {
    double lhs_mean = 0.0;
    double lhs_se = 0.0;
    double lip_factor = 0.0;
    double lip_factor_coarse = 0.0;
    double h_fine = 0.0;
    double h_coarse = 0.0;
    double displacement_mean = 0.0;
    double displacement_se = 0.0;
    double rhs_mean = 0.0;
    double rhs_se = 0.0;
    bool holds = false;
    double margin = 0.0;
    DecompositionCheck decomposition;
    DynkinCheck dynkin_1;
    DynkinCheck dynkin_2;
    PointCheck point_1;
    PointCheck point_2;
    std::size_t n_replicates = 0;
    std::size_t n_censored = 0;
    std::size_t upwind_nodes_1 = 0;
    std::size_t upwind_nodes_2 = 0;

    [[nodiscard]] double censored_fraction() const noexcept {
        return n_replicates ? static_cast<double>(n_censored) / static_cast<double>(n_replicates) : 0.0;
    }
};

/// Inputs tying the fields and outcomes to one scenario.
struct BoundContext {
    Vec a1;
    Vec a2;
    double dt = 0.0;
    /// Sup of |dv_i/dy| on the next coarser grid, for the refinement report.
    std::optional<double> coarse_sup;
    std::optional<double> coarse_h;
};

/// Estimates both sides of E|T1 - T2| <= max_i sup|dv_i/dy| E|y1(T~) - y2(T~)|
/// and the identities behind it.
inline BoundReport verify_bound(const MeanExitField& field1, const MeanExitField& field2,
                                const std::vector<CoupledPairOutcome>& outcomes, const BoundContext& ctx) {
    const Region& r1 = field1.grid().region();
    const Region& r2 = field2.grid().region();
    if (r1.dim() != r2.dim() || r1.kind() != r2.kind() || r1.bounding_box() != r2.bounding_box()) {
        throw InputError("fields were solved on different regions");
    }
    if (ctx.a1.size() != r1.dim() || ctx.a2.size() != r1.dim()) throw InputError("start points do not match the region");
    for (const auto& o : outcomes) {
        if (o.y1_at_Ttilde.size() != r1.dim() || o.y2_at_Ttilde.size() != r1.dim()) {
            throw InputError("outcomes do not match the region dimension");
        }
    }

    BoundReport rep;
    rep.n_replicates = outcomes.size();
    for (const auto& o : outcomes) rep.n_censored += o.censored() ? 1 : 0;

    const MeanSe lhs = estimate_lhs(outcomes);
    const MeanSe disp = estimate_displacement(outcomes);
    rep.lhs_mean = lhs.mean;
    rep.lhs_se = lhs.se;
    rep.displacement_mean = disp.mean;
    rep.displacement_se = disp.se;
    rep.lip_factor = std::max(sup_grad_norm(field1), sup_grad_norm(field2));
    rep.h_fine = std::max(field1.spacing(), field2.spacing());
    rep.lip_factor_coarse = ctx.coarse_sup.value_or(rep.lip_factor);
    rep.h_coarse = ctx.coarse_h.value_or(rep.h_fine);
    rep.rhs_mean = rep.lip_factor * rep.displacement_mean;
    rep.rhs_se = rep.lip_factor * rep.displacement_se;
    rep.holds = rep.lhs_mean <= rep.rhs_mean + 3.0 * std::hypot(rep.lhs_se, rep.rhs_se);
    rep.margin = rep.rhs_mean - rep.lhs_mean;

    rep.decomposition = decomposition_check(outcomes);
    const double time_scale = std::max(field1.max_value(), field2.max_value());
    const double allowance = (rep.h_fine * rep.h_fine + std::sqrt(ctx.dt)) * time_scale;
    rep.dynkin_1 = dynkin_check(field1, outcomes, 1, allowance);
    rep.dynkin_2 = dynkin_check(field2, outcomes, 2, allowance);
    rep.point_1 = point_check(field1, ctx.a1, outcomes, 1, std::sqrt(ctx.dt));
    rep.point_2 = point_check(field2, ctx.a2, outcomes, 2, std::sqrt(ctx.dt));
    rep.upwind_nodes_1 = field1.upwind_nodes();
    rep.upwind_nodes_2 = field2.upwind_nodes();
    return rep;
}

/// JSON rendering with stable key order.
inline nlohmann::ordered_json to_json(const BoundReport& r) {
    using nlohmann::ordered_json;
    auto dynkin = [](const DynkinCheck& c) {
        return ordered_json{{"time_gap_mean", c.time_gap_mean}, {"field_mean", c.field_mean},
                            {"residual", c.residual},           {"se", c.se},
                            {"allowance", c.allowance},         {"pass", c.pass()}};
    };
    auto point = [](const PointCheck& c) {
        return ordered_json{{"mc_mean", c.mc_mean},     {"mc_se", c.mc_se},         {"field_value", c.field_value},
                            {"residual", c.residual}, {"allowance", c.allowance}, {"pass", c.pass()}};
    };
    ordered_json j;
    j["lhs_mean"] = r.lhs_mean;
    j["lhs_se"] = r.lhs_se;
    j["lip_factor"] = r.lip_factor;
    j["lip_factor_coarse"] = r.lip_factor_coarse;
    j["h_fine"] = r.h_fine;
    j["h_coarse"] = r.h_coarse;
    j["displacement_mean"] = r.displacement_mean;
    j["displacement_se"] = r.displacement_se;
    j["rhs_mean"] = r.rhs_mean;
    j["rhs_se"] = r.rhs_se;
    j["holds"] = r.holds;
    j["margin"] = r.margin;
    j["decomposition_residual"] = r.decomposition.residual;
    j["decomposition_tolerance"] = r.decomposition.tolerance;
    j["decomposition_terms"] = {r.decomposition.indicator_sum_1, r.decomposition.indicator_sum_2,
                                r.decomposition.abs_sum};
    j["dynkin_residual_1"] = r.dynkin_1.residual;
    j["dynkin_residual_2"] = r.dynkin_2.residual;
    j["dynkin_1"] = dynkin(r.dynkin_1);
    j["dynkin_2"] = dynkin(r.dynkin_2);
    j["dynkin_point_checks"] = {point(r.point_1), point(r.point_2)};
    j["n_replicates"] = r.n_replicates;
    j["n_censored"] = r.n_censored;
    j["upwind_nodes"] = {r.upwind_nodes_1, r.upwind_nodes_2};
    return j;
}

/// Aligned text table for the terminal.
inline std::string render_table(const BoundReport& r) {
    std::ostringstream os;
    auto row = [&os](const std::string& name, const std::string& value) {
        os << "  " << std::left << std::setw(28) << name << value << "\n";
    };
    auto num = [](double x, int prec = 6) {
        std::ostringstream s;
        s << std::setprecision(prec) << x;
        return s.str();
    };
    auto pm = [&num](double m, double se) { return num(m) + " +- " + num(se, 3); };
    row("E|T1 - T2|", pm(r.lhs_mean, r.lhs_se));
    row("E|y1(T~) - y2(T~)|", pm(r.displacement_mean, r.displacement_se));
    row("max sup|dv/dy|", num(r.lip_factor) + "  (h = " + num(r.h_fine, 3) + "; " + num(r.lip_factor_coarse) +
                              " at h = " + num(r.h_coarse, 3) + ")");
    row("bound (rhs)", pm(r.rhs_mean, r.rhs_se));
    row("margin rhs - lhs", num(r.margin));
    row("bound holds", r.holds ? "yes" : "NO");
    row("decomposition residual", num(r.decomposition.residual, 3) + " (tol " + num(r.decomposition.tolerance, 3) +
                                      ") " + (r.decomposition.pass() ? "ok" : "FAIL"));
    for (int i = 1; i <= 2; ++i) {
        const DynkinCheck& d = i == 1 ? r.dynkin_1 : r.dynkin_2;
        row("dynkin residual " + std::to_string(i),
            num(d.residual, 3) + " (3 se + allowance " + num(3.0 * d.se + d.allowance, 3) + ") " +
                (d.pass() ? "ok" : "FAIL"));
    }
    for (int i = 1; i <= 2; ++i) {
        const PointCheck& p = i == 1 ? r.point_1 : r.point_2;
        row("E T" + std::to_string(i) + " vs v" + std::to_string(i) + "(a" + std::to_string(i) + ")",
            pm(p.mc_mean, p.mc_se) + " vs " + num(p.field_value) + " " + (p.pass() ? "ok" : "FAIL"));
    }
    row("replicates (censored)", std::to_string(r.n_replicates) + " (" + std::to_string(r.n_censored) + ")");
    return os.str();
}

}  // namespace exitbound
