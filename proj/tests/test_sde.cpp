#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "exitbound/sde.hpp"
#include "exitbound/stats.hpp"

using namespace exitbound;

namespace {

DiffusionSpec spec_1d(const std::string& drift, const std::string& beta) {
    return DiffusionSpec::from_strings({drift}, {{beta}});
}

DiffusionSpec brownian_2d() { return DiffusionSpec::from_strings({"0", "0"}, {{"1", "0"}, {"0", "1"}}); }

PathConfig config(double dt, double t_max, bool bridge, std::uint64_t seed = 11,
                  Coupling coupling = Coupling::Shared) {
    PathConfig c;
    c.dt = dt;
    c.t_max = t_max;
    c.bridge_correction = bridge;
    c.base_seed = seed;
    c.coupling = coupling;
    return c;
}

double mean_exit_time(const PairSimulator& sim, std::size_t count, double* se = nullptr) {
    const auto outs = simulate_single_replicates(sim, count);
    std::vector<double> ts;
    for (const auto& o : outs) {
        if (!o.censored) ts.push_back(o.T);
    }
    const MeanSe m = mean_and_se(ts);
    if (se) *se = m.se;
    return m.mean;
}

}  // namespace

TEST(EmStep, Examples) {
    EXPECT_EQ(em_step(Vec{0.3}, spec_1d("0", "0"), Vec{0.7}, 0.1), Vec{0.3});
    EXPECT_DOUBLE_EQ(em_step(Vec{0.0}, spec_1d("1", "0"), Vec{0.0}, 0.5)[0], 0.5);
    EXPECT_DOUBLE_EQ(em_step(Vec{0.3}, spec_1d("0", "1"), Vec{0.05}, 0.01)[0], 0.35);
    const auto spec = DiffusionSpec::from_strings({"-y1", "y1*y2"}, {{"1", "0", "2"}, {"0", "y2", "0"}});
    const Vec out = em_step(Vec{1.0, 2.0}, spec, Vec{0.1, 0.2, 0.3}, 0.5);
    EXPECT_DOUBLE_EQ(out[0], 1.0 - 0.5 + 0.1 + 0.6);
    EXPECT_DOUBLE_EQ(out[1], 2.0 + 1.0 + 0.4);
    EXPECT_THROW((void)em_step(Vec{1.0}, spec, Vec{0.1, 0.2, 0.3}, 0.5), InputError);
}

TEST(SimulatePair, IdenticalProcessesCoincide) {
    const Region q(Interval{0.0, 1.0});
    const auto bm = spec_1d("0", "1");
    for (bool bridge : {false, true}) {
        const PairSimulator sim(bm, bm, {0.4}, {0.4}, q, config(1e-3, 5.0, bridge));
        for (std::uint64_t r = 0; r < 200; ++r) {
            const auto o = sim.simulate(r);
            EXPECT_EQ(o.T1, o.T2);
            EXPECT_EQ(o.e1, 0);
            EXPECT_EQ(o.e2, 0);
            EXPECT_EQ(o.displacement(), 0.0);
            EXPECT_EQ(o.exit1_pos, o.exit2_pos);
        }
    }
}

TEST(SimulatePair, IdenticalTwoDimensionalPathsCoincide) {
    const Region q(Ball{{0.0, 0.0}, 1.0});
    const auto spec = DiffusionSpec::from_strings({"-y2", "y1"}, {{"1", "0.3"}, {"0", "0.8"}});
    const PairSimulator sim(spec, spec, {0.1, 0.2}, {0.1, 0.2}, q, config(1e-3, 5.0, false));
    for (std::uint64_t r = 0; r < 100; ++r) {
        const auto o = sim.simulate(r);
        EXPECT_EQ(o.T1, o.T2);
        EXPECT_EQ(o.y1_at_Ttilde, o.y2_at_Ttilde);
        EXPECT_FALSE(q.contains(o.exit1_pos));
    }
}

// dy = 2 dt from 0 on (-10, 1): exit at t = 1/2.
TEST(SimulatePair, DeterministicDriftExitTime) {
    const Region q(Interval{-10.0, 1.0});
    const auto flow = spec_1d("2", "1e-12");
    const double dt = 1e-3;
    const PairSimulator sim(flow, flow, {0.0}, {0.0}, q, config(dt, 5.0, false));
    const auto o = sim.simulate(0);
    EXPECT_NEAR(o.T1, 0.5, dt);
    EXPECT_NEAR(o.exit1_pos[0], 1.0, 1e-12);
}

TEST(SimulatePair, FreezingAndTildeInvariants) {
    const Region q(Interval{0.0, 1.0});
    const PairSimulator sim(spec_1d("0", "1"), spec_1d("-y1", "1.2"), {0.3}, {0.6}, q, config(1e-3, 10.0, false));
    for (std::uint64_t r = 0; r < 500; ++r) {
        const auto o = sim.simulate(r);
        ASSERT_FALSE(o.censored());
        EXPECT_EQ(o.T_tilde, std::min(o.T1, o.T2));
        EXPECT_LE(o.e1 + o.e2, 1);
        EXPECT_EQ(o.e1 * o.e2, 0);
        EXPECT_FALSE(q.contains(o.exit1_pos));
        EXPECT_FALSE(q.contains(o.exit2_pos));
        if (o.e1) {
            EXPECT_EQ(o.y2_at_Ttilde, o.exit2_pos);
            EXPECT_TRUE(q.in_closure(o.y1_at_Ttilde));
        }
        if (o.e2) {
            EXPECT_EQ(o.y1_at_Ttilde, o.exit1_pos);
        }
    }
}

TEST(SimulatePair, ReplicateIsReproducibleInIsolation) {
    const Region q(Box{{0.0, 0.0}, {1.0, 2.0}});
    const auto s1 = brownian_2d();
    const auto s2 = DiffusionSpec::from_strings({"0.5", "-y1"}, {{"1", "0"}, {"0.2", "1"}});
    const PairSimulator sim(s1, s2, {0.3, 1.0}, {0.5, 0.5}, q, config(1e-3, 10.0, false, 99));
    const auto batch = simulate_replicates(sim, 300, 3);
    for (std::uint64_t r : {0u, 17u, 255u, 256u, 299u}) {
        const auto alone = simulate_pair(s1, s2, {0.3, 1.0}, {0.5, 0.5}, q, config(1e-3, 10.0, false, 99), r);
        EXPECT_EQ(alone.T1, batch[r].T1);
        EXPECT_EQ(alone.T2, batch[r].T2);
        EXPECT_EQ(alone.y1_at_Ttilde, batch[r].y1_at_Ttilde);
        EXPECT_EQ(alone.exit2_pos, batch[r].exit2_pos);
    }
    const auto serial = simulate_replicates(sim, 300, 1);
    for (std::size_t r = 0; r < 300; ++r) EXPECT_EQ(serial[r].T_tilde, batch[r].T_tilde);
}

TEST(SimulatePair, SharedGapIsPreservedForBrownianPair) {
    const Region q(Interval{0.0, 1.0});
    const auto bm = spec_1d("0", "1");
    for (bool bridge : {false, true}) {
        const PairSimulator sim(bm, bm, {0.3}, {0.7}, q, config(1e-4, 12.6, bridge));
        for (std::uint64_t r = 0; r < 300; ++r) {
            EXPECT_NEAR(sim.simulate(r).displacement(), 0.4, 1e-12);
        }
    }
}

TEST(SimulatePair, IndependentCouplingDiffers) {
    const Region q(Interval{0.0, 1.0});
    const auto bm = spec_1d("0", "1");
    const PairSimulator sim(bm, bm, {0.5}, {0.5}, q, config(1e-3, 10.0, false, 3, Coupling::Independent));
    int differing = 0;
    for (std::uint64_t r = 0; r < 50; ++r) differing += sim.simulate(r).T1 != sim.simulate(r).T2;
    EXPECT_GT(differing, 40);
}

TEST(SimulatePair, StartOnBoundaryExitsImmediately) {
    const Region q(Interval{0.0, 1.0});
    const auto bm = spec_1d("0", "1");
    const auto o = simulate_pair(bm, bm, {1.0}, {0.5}, q, config(1e-3, 10.0, false), 0);
    EXPECT_EQ(o.T1, 0.0);
    EXPECT_EQ(o.T_tilde, 0.0);
    EXPECT_EQ(o.e2, 1);
    EXPECT_DOUBLE_EQ(o.displacement(), 0.5);
}

TEST(SimulatePair, CensoringFlagsLongPaths) {
    const Region q(Interval{0.0, 1.0});
    const auto slow = spec_1d("0", "0.01");
    const auto o = simulate_pair(slow, slow, {0.5}, {0.5}, q, config(1e-2, 1.0, false), 0);
    EXPECT_TRUE(o.censored1);
    EXPECT_TRUE(o.censored2);
    EXPECT_EQ(o.e1 + o.e2, 0);
}

TEST(SimulatePair, Validation) {
    const Region q(Interval{0.0, 1.0});
    const auto bm = spec_1d("0", "1");
    EXPECT_THROW(PairSimulator(bm, bm, {1.5}, {0.5}, q, config(1e-3, 1.0, false)), InputError);
    EXPECT_THROW(PairSimulator(bm, bm, {0.5}, {0.5}, q, config(0.2, 1.0, false)), InputError);
    EXPECT_THROW(PairSimulator(bm, spec_1d("0", "1 + y1"), {0.5}, {0.5}, q, config(1e-3, 1.0, true)), InputError);
    EXPECT_THROW(PairSimulator(brownian_2d(), brownian_2d(), {0.5, 0.5}, {0.5, 0.5}, Region(Box{{0, 0}, {1, 1}}),
                               config(1e-3, 1.0, true)),
                 InputError);
    const auto three_noise = DiffusionSpec::from_strings({"0"}, {{"1", "0"}});
    EXPECT_THROW(PairSimulator(bm, three_noise, {0.5}, {0.5}, q, config(1e-3, 1.0, false)), InputError);
    EXPECT_NO_THROW(
        PairSimulator(bm, three_noise, {0.5}, {0.5}, q, config(1e-3, 1.0, false, 0, Coupling::Independent)));
}

TEST(SimulatePair, DomainErrorMidPathReportsState) {
    const Region q(Interval{-1.0, 1.0});
    const auto bad = spec_1d("sqrt(y1)", "1");
    try {
        (void)simulate_pair(bad, bad, {0.01}, {0.01}, q, config(1e-3, 10.0, false), 0);
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("state"), std::string::npos);
    }
}

// E T from 0.5 on (0, 1) is v(0.5) = 1/4.
TEST(SimulateSingle, BrownianMeanExitTimeWithBridge) {
    const Region q(Interval{0.0, 1.0});
    const auto bm = spec_1d("0", "1");
    const PairSimulator sim(bm, bm, {0.5}, {0.5}, q, config(1e-3, 12.5, true, 5));
    double se = 0.0;
    const double m = mean_exit_time(sim, 100000, &se);
    EXPECT_NEAR(m, 0.25, 3.0 * se + 1e-3);
}

TEST(SimulateSingle, EulerBiasIsPositiveAndShrinksLikeSqrtDt) {
    const Region q(Interval{0.0, 1.0});
    const auto bm = spec_1d("0", "1");
    std::vector<double> dts, bias;
    for (double dt : {1e-2, 2.5e-3, 6.25e-4}) {
        const PairSimulator sim(bm, bm, {0.5}, {0.5}, q, config(dt, 12.5, false, 8));
        double se = 0.0;
        const double m = mean_exit_time(sim, 40000, &se);
        EXPECT_GT(m - 0.25, 3.0 * se);
        dts.push_back(dt);
        bias.push_back(m - 0.25);
    }
    EXPECT_GE(fitted_order(dts, bias), 0.4);
}
