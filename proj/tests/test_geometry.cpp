#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "exitbound/geometry.hpp"

using namespace exitbound;

TEST(Region, IntervalMembership) {
    const Region q(Interval{0.0, 1.0});
    EXPECT_TRUE(q.contains(Vec{0.5}));
    EXPECT_FALSE(q.contains(Vec{1.0}));
    EXPECT_FALSE(q.contains(Vec{0.0}));
    EXPECT_TRUE(q.in_closure(Vec{1.0}));
    EXPECT_FALSE(q.in_closure(Vec{1.5}));
}

TEST(Region, BallBoundaryPointIsNotInside) {
    const Region q(Ball{{0.0, 0.0}, 1.0});
    EXPECT_FALSE(q.contains(Vec{0.6, 0.8}));
    EXPECT_TRUE(q.in_closure(Vec{0.6, 0.8}));
    EXPECT_DOUBLE_EQ(q.boundary_distance(Vec{0.0, 0.0}), 1.0);
}

TEST(Region, Distances) {
    EXPECT_DOUBLE_EQ(Region(Interval{0.0, 1.0}).boundary_distance(Vec{0.3}), 0.3);
    const Region box(Box{{0.0, 0.0}, {1.0, 2.0}});
    EXPECT_DOUBLE_EQ(box.boundary_distance(Vec{0.5, 0.1}), 0.1);
    EXPECT_DOUBLE_EQ(box.boundary_distance(Vec{2.0, 3.0}), std::sqrt(2.0));
    EXPECT_DOUBLE_EQ(box.boundary_distance(Vec{0.0, 1.0}), 0.0);
}

TEST(Region, RejectsBadInput) {
    EXPECT_THROW(Region(Interval{1.0, 0.0}), InputError);
    EXPECT_THROW(Region(Box{{0.0, 0.0}, {1.0, 0.0}}), InputError);
    EXPECT_THROW(Region(Ball{{0.0, 0.0}, 0.0}), InputError);
    EXPECT_THROW(Region(Ball{{0.0}, 1.0}), InputError);
    EXPECT_THROW((void)Region(Interval{0.0, 1.0}).contains(Vec{0.1, 0.2}), InputError);
    EXPECT_THROW((void)Region(Ball{{0.0, 0.0}, 1.0}).boundary_distance(Vec{0.1}), InputError);
}

TEST(Region, SegmentExitFraction) {
    const Region iv(Interval{0.0, 1.0});
    EXPECT_NEAR(iv.segment_exit_fraction(Vec{0.9}, Vec{1.1}), 0.5, 1e-14);
    const Region ball(Ball{{0.0, 0.0}, 1.0});
    EXPECT_NEAR(ball.segment_exit_fraction(Vec{0.0, 0.0}, Vec{2.0, 0.0}), 0.5, 1e-15);
    const Region box(Box{{0.0, 0.0}, {1.0, 1.0}});
    EXPECT_NEAR(box.segment_exit_fraction(Vec{0.5, 0.9}, Vec{0.5, 1.3}), 0.25, 1e-15);
}

TEST(Region, AxisDistanceOnBall) {
    const Region ball(Ball{{0.0, 0.0}, 1.0});
    EXPECT_NEAR(ball.axis_distance(Vec{0.0, 0.6}, 0, +1), 0.8, 1e-15);
    EXPECT_NEAR(ball.axis_distance(Vec{0.2, 0.6}, 0, -1), 1.0, 1e-15);
}

class RegionProperties : public ::testing::Test {
protected:
    std::mt19937_64 rng{12345};
    std::uniform_real_distribution<double> coord{-1.5, 1.5};

    Vec random_point(std::size_t n) {
        Vec p(n);
        for (auto& x : p) x = coord(rng);
        return p;
    }
};

TEST_F(RegionProperties, InsideImpliesPositiveDistanceAndLipschitz) {
    const Region regions[] = {Region(Interval{-1.0, 0.7}), Region(Box{{-1.0, -0.5}, {1.0, 0.5}}),
                              Region(Ball{{0.1, -0.2}, 0.9}), Region(Ball{{0.0, 0.0, 0.0}, 1.0})};
    for (const auto& q : regions) {
        for (int trial = 0; trial < 2000; ++trial) {
            const Vec p = random_point(q.dim());
            const Vec r = random_point(q.dim());
            if (q.contains(p)) {
                EXPECT_GT(q.boundary_distance(p), 0.0);
            }
            double dist = 0.0;
            for (std::size_t j = 0; j < p.size(); ++j) dist += (p[j] - r[j]) * (p[j] - r[j]);
            EXPECT_LE(std::abs(q.boundary_distance(p) - q.boundary_distance(r)), std::sqrt(dist) + 1e-12);
        }
    }
}

TEST_F(RegionProperties, BallDistanceRotationInvariant) {
    const Vec c{0.3, -0.4};
    const Region q(Ball{c, 1.2});
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
    for (int trial = 0; trial < 1000; ++trial) {
        const Vec p = random_point(2);
        const double a = angle(rng);
        const double dx = p[0] - c[0], dy = p[1] - c[1];
        const Vec rotated{c[0] + std::cos(a) * dx - std::sin(a) * dy, c[1] + std::sin(a) * dx + std::cos(a) * dy};
        EXPECT_NEAR(q.boundary_distance(p), q.boundary_distance(rotated), 1e-12);
    }
}
