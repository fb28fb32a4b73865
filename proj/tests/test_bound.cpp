#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "exitbound/bound.hpp"

using namespace exitbound;

namespace {

DiffusionSpec spec_1d(const std::string& drift, const std::string& beta) {
    return DiffusionSpec::from_strings({drift}, {{beta}});
}

PathConfig config(double dt, double t_max, bool bridge, std::uint64_t seed = 21) {
    PathConfig c;
    c.dt = dt;
    c.t_max = t_max;
    c.bridge_correction = bridge;
    c.base_seed = seed;
    return c;
}

CoupledPairOutcome outcome(double t1, double t2) {
    CoupledPairOutcome o;
    o.T1 = t1;
    o.T2 = t2;
    o.T_tilde = std::min(t1, t2);
    o.e1 = t1 > t2;
    o.e2 = t2 > t1;
    o.y1_at_Ttilde = {0.0};
    o.y2_at_Ttilde = {0.0};
    return o;
}

std::vector<CoupledPairOutcome> run(const DiffusionSpec& s1, const DiffusionSpec& s2, double a1, double a2,
                                    const PathConfig& c, std::size_t count) {
    const PairSimulator sim(s1, s2, {a1}, {a2}, Region(Interval{0.0, 1.0}), c);
    return simulate_replicates(sim, count);
}

}  // namespace

TEST(Decomposition, SingleReplicateAndTie) {
    std::vector<CoupledPairOutcome> one{outcome(2.0, 5.0)};
    const auto c = decomposition_check(one);
    EXPECT_EQ(c.indicator_sum_1, 0.0);
    EXPECT_EQ(c.indicator_sum_2, 3.0);
    EXPECT_EQ(c.abs_sum, 3.0);
    EXPECT_EQ(c.residual, 0.0);
    const auto tie = decomposition_check({outcome(1.5, 1.5)});
    EXPECT_EQ(tie.indicator_sum_1 + tie.indicator_sum_2 + tie.abs_sum, 0.0);
}

TEST(Decomposition, CensoredReplicatesExcluded) {
    auto o = outcome(1.0, 9.0);
    o.censored2 = true;
    const auto c = decomposition_check({outcome(2.0, 1.0), o});
    EXPECT_EQ(c.abs_sum, 1.0);
}

TEST(Estimators, NeedEnoughUncensoredReplicates) {
    std::vector<CoupledPairOutcome> few(99, outcome(1.0, 2.0));
    EXPECT_THROW((void)estimate_lhs(few), InputError);
    few.push_back(outcome(1.0, 2.0));
    EXPECT_NO_THROW((void)estimate_lhs(few));
    few.front().censored1 = true;
    EXPECT_THROW((void)estimate_displacement(few), InputError);
}

TEST(Estimators, IdenticalProcessesGiveZero) {
    const auto bm = spec_1d("0", "1");
    const auto outs = run(bm, bm, 0.4, 0.4, config(1e-3, 12.5, true), 500);
    const MeanSe lhs = estimate_lhs(outs);
    const MeanSe disp = estimate_displacement(outs);
    EXPECT_EQ(lhs.mean, 0.0);
    EXPECT_EQ(lhs.se, 0.0);
    EXPECT_EQ(disp.mean, 0.0);
    EXPECT_EQ(disp.se, 0.0);
}

// dy = dt and dy = 2 dt from 0 on (-10, 1): exits at 1 and 1/2; at t = 1/2
// the first process sits at 1/2.
TEST(Estimators, DeterministicFlows) {
    const double dt = 1e-3;
    const PairSimulator sim(spec_1d("1", "1e-12"), spec_1d("2", "1e-12"), {0.0}, {0.0}, Region(Interval{-10.0, 1.0}),
                            config(dt, 5.0, false));
    const auto outs = simulate_replicates(sim, 100);
    EXPECT_NEAR(estimate_lhs(outs).mean, 0.5, 2 * dt);
    EXPECT_NEAR(estimate_displacement(outs).mean, 0.5, 2 * dt);
}

TEST(VerifyBound, BrownianPairSmall) {
    const auto bm = spec_1d("0", "1");
    const Region q(Interval{0.0, 1.0});
    const auto field = solve_mean_exit_time(q, bm, 1001);
    const double dt = 1e-3;
    const auto outs = run(bm, bm, 0.3, 0.7, config(dt, 12.5, true), 20000);
    const BoundReport rep = verify_bound(field, field, outs, {{0.3}, {0.7}, dt, std::nullopt, std::nullopt});
    EXPECT_NEAR(rep.lip_factor, 1.0, 2e-3);
    EXPECT_NEAR(rep.displacement_mean, 0.4, 1e-12);
    EXPECT_GT(rep.lhs_mean, 0.0);
    EXPECT_LE(rep.lhs_mean, 0.4);
    // Shared Brownian paths: the survivor restarts from the gap g = 0.4,
    // so E|T1 - T2| = v(g) = g (1 - g).
    EXPECT_NEAR(rep.lhs_mean, 0.24, 3 * rep.lhs_se + std::sqrt(dt) * 0.25);
    EXPECT_TRUE(rep.holds);
    EXPECT_TRUE(rep.decomposition.pass());
    EXPECT_TRUE(rep.dynkin_1.pass());
    EXPECT_TRUE(rep.dynkin_2.pass());
    EXPECT_TRUE(rep.point_1.pass());
    EXPECT_TRUE(rep.point_2.pass());
    EXPECT_NEAR(rep.point_1.field_value, 0.21, 1e-9);
    EXPECT_EQ(rep.n_censored, 0u);
}

TEST(VerifyBound, IdenticalProcesses) {
    const auto bm = spec_1d("0", "1");
    const auto field = solve_mean_exit_time(Region(Interval{0.0, 1.0}), bm, 201);
    const auto outs = run(bm, bm, 0.5, 0.5, config(1e-3, 12.5, true), 300);
    const BoundReport rep = verify_bound(field, field, outs, {{0.5}, {0.5}, 1e-3, std::nullopt, std::nullopt});
    EXPECT_EQ(rep.lhs_mean, 0.0);
    EXPECT_EQ(rep.rhs_mean, 0.0);
    EXPECT_TRUE(rep.holds);
    EXPECT_EQ(rep.dynkin_1.residual, 0.0);
    EXPECT_EQ(rep.dynkin_2.residual, 0.0);
}

TEST(VerifyBound, SwapSymmetry) {
    const auto bm = spec_1d("0", "1");
    const auto ou = spec_1d("-y1", "1");
    const Region q(Interval{0.0, 1.0});
    const auto fbm = solve_mean_exit_time(q, bm, 401);
    const auto fou = solve_mean_exit_time(q, ou, 401);
    const auto c = config(1e-3, 12.5, true);
    const auto forward = verify_bound(fbm, fou, run(bm, ou, 0.35, 0.6, c, 2000), {{0.35}, {0.6}, 1e-3, {}, {}});
    const auto swapped = verify_bound(fou, fbm, run(ou, bm, 0.6, 0.35, c, 2000), {{0.6}, {0.35}, 1e-3, {}, {}});
    EXPECT_EQ(forward.lhs_mean, swapped.lhs_mean);
    EXPECT_EQ(forward.displacement_mean, swapped.displacement_mean);
    EXPECT_EQ(forward.rhs_mean, swapped.rhs_mean);
    EXPECT_EQ(forward.dynkin_1.residual, swapped.dynkin_2.residual);
    EXPECT_EQ(forward.dynkin_2.residual, swapped.dynkin_1.residual);
}

// E|T1 - T2| = g (1 - g) with g = a2 - a1 for symmetric starts a2 = 1 - a1:
// 0.16, 0.24, 0.24 for a1 = 0.4, 0.3, 0.2.
TEST(VerifyBound, LhsAgainstGapFormula) {
    const auto bm = spec_1d("0", "1");
    const double dt = 1e-3;
    std::vector<MeanSe> lhs;
    for (double a1 : {0.4, 0.3, 0.2}) {
        const double g = 1.0 - 2.0 * a1;
        const MeanSe m = estimate_lhs(run(bm, bm, a1, 1.0 - a1, config(dt, 12.5, true, 77), 10000));
        EXPECT_NEAR(m.mean, g * (1.0 - g), 3.0 * m.se + 0.25 * std::sqrt(dt)) << a1;
        lhs.push_back(m);
    }
    EXPECT_GT(lhs[1].mean - lhs[0].mean, 3.0 * std::hypot(lhs[0].se, lhs[1].se));
    EXPECT_GT(lhs[2].mean - lhs[1].mean, -3.0 * std::hypot(lhs[1].se, lhs[2].se));
}

TEST(VerifyBound, BrownianVersusOrnsteinUhlenbeck) {
    const auto bm = spec_1d("0", "1");
    const auto ou = spec_1d("-y1", "1");
    const Region q(Interval{0.0, 1.0});
    const auto f1 = solve_mean_exit_time(q, bm, 1001);
    const auto f2 = solve_mean_exit_time(q, ou, 1001);
    const double dt = 1e-3;
    const auto outs = run(bm, ou, 0.5, 0.5, config(dt, 12.5, true, 5), 20000);
    const auto rep = verify_bound(f1, f2, outs, {{0.5}, {0.5}, dt, {}, {}});
    EXPECT_TRUE(rep.holds);
    EXPECT_GT(rep.margin, 0.0);
    EXPECT_TRUE(rep.dynkin_1.pass());
    EXPECT_TRUE(rep.dynkin_2.pass());
    EXPECT_TRUE(rep.decomposition.pass());
}

TEST(VerifyBound, RejectsMismatchedRegions) {
    const auto bm = spec_1d("0", "1");
    const auto f1 = solve_mean_exit_time(Region(Interval{0.0, 1.0}), bm, 101);
    const auto f2 = solve_mean_exit_time(Region(Interval{0.0, 2.0}), bm, 101);
    const auto outs = run(bm, bm, 0.3, 0.7, config(1e-3, 12.5, true), 200);
    EXPECT_THROW((void)verify_bound(f1, f2, outs, {{0.3}, {0.7}, 1e-3, {}, {}}), InputError);
}

TEST(Report, JsonHasStableKeys) {
    BoundReport r;
    r.lhs_mean = 0.25;
    const auto j = to_json(r);
    const std::vector<std::string> expected{"lhs_mean", "lhs_se", "lip_factor", "lip_factor_coarse", "h_fine"};
    std::size_t i = 0;
    for (auto it = j.begin(); i < expected.size(); ++it, ++i) EXPECT_EQ(it.key(), expected[i]);
    EXPECT_TRUE(j.contains("decomposition_residual"));
    EXPECT_TRUE(j.contains("dynkin_residual_1"));
    EXPECT_NE(render_table(r).find("bound holds"), std::string::npos);
}
