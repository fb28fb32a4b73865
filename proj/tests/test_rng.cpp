#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "exitbound/rng.hpp"
#include "exitbound/stats.hpp"

using namespace exitbound;

// Known-answer vectors published with Random123 for philox4x32-10.
TEST(Philox, KnownAnswers) {
    using C = Philox4x32::Counter;
    using K = Philox4x32::Key;
    EXPECT_EQ(Philox4x32::block(C{0, 0, 0, 0}, K{0, 0}), (C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
    EXPECT_EQ(Philox4x32::block(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}),
              (C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
    EXPECT_EQ(Philox4x32::block(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}),
              (C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(CounterStream, RandomAccessMatchesSequential) {
    CounterStream s(42, StreamPurpose::Wiener, 17);
    const CounterStream probe(42, StreamPurpose::Wiener, 17);
    for (std::uint64_t k = 0; k < 9; ++k) EXPECT_EQ(s.next_u64(), probe.at(k));
}

TEST(CounterStream, DeterministicAndSeparated) {
    CounterStream a(1, StreamPurpose::Wiener, 5), b(1, StreamPurpose::Wiener, 5);
    CounterStream other_rep(1, StreamPurpose::Wiener, 6), other_purpose(1, StreamPurpose::Bridge, 5);
    for (int i = 0; i < 100; ++i) {
        const double x = a.normal();
        EXPECT_EQ(x, b.normal());
        EXPECT_NE(x, other_rep.normal());
        EXPECT_NE(x, other_purpose.normal());
    }
}

TEST(CounterStream, UniformInUnitInterval) {
    CounterStream s(9, StreamPurpose::Bridge, 0);
    for (int i = 0; i < 100000; ++i) {
        const double u = s.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LE(u, 1.0);
    }
}

TEST(WienerIncrements, MomentsMatchDt) {
    const double dt = 0.01;
    const std::size_t count = 1'000'000;
    std::vector<double> draws(count);
    CounterStream s(2024, StreamPurpose::Wiener, 0);
    for (std::size_t i = 0; i < count; i += 2) wiener_increments(s, std::span<double>(draws).subspan(i, 2), dt);
    const MeanSe m = mean_and_se(draws);
    EXPECT_NEAR(m.mean, 0.0, 3.0 * 0.1 / 1000.0);
    const double var = m.se * m.se * static_cast<double>(count);
    EXPECT_NEAR(var, dt, 0.01 * dt);
}

TEST(Stats, CompensatedSumIsOrderRobust) {
    CompensatedSum s;
    s.add(1e16);
    s.add(1.0);
    s.add(-1e16);
    EXPECT_EQ(s.value(), 1.0);
}

TEST(Stats, FittedOrderOfPowerLaw) {
    const std::vector<double> h{0.1, 0.05, 0.025};
    const std::vector<double> e{0.3 * 0.01, 0.3 * 0.0025, 0.3 * 0.000625};
    EXPECT_NEAR(fitted_order(h, e), 2.0, 1e-12);
}
