#include <gtest/gtest.h>

#include <cmath>

#include "adaptaug/reward.hpp"

using namespace adaptaug;

namespace {
const RewardConfig kDefault{1.3, 0.2};
// normalized loss passed directly by using avg = 1
double r(double normalized, const RewardConfig& cfg = kDefault) {
    return bounded_reward(normalized, 1.0, cfg);
}
}  // namespace

TEST(BoundedReward, ReferenceValues) {
    EXPECT_NEAR(r(0.9), 0.9, 1e-12);
    EXPECT_NEAR(r(1.3), 1.3, 1e-12);
    EXPECT_NEAR(r(1.4), 0.65, 1e-12);
    EXPECT_NEAR(r(1.5), 0.0, 1e-12);
    EXPECT_NEAR(r(1.7), -1.3, 1e-12);
}

TEST(BoundedReward, NormalizesByAverage) {
    // loss 2.8 with last-epoch average 2.0 -> normalized 1.4
    EXPECT_NEAR(bounded_reward(2.8, 2.0, kDefault), 0.65, 1e-12);
}

TEST(BoundedReward, ContinuousAtThreshold) {
    const double eps = 1e-9;
    EXPECT_LT(std::abs(r(1.3 - eps) - r(1.3 + eps)), 1e-6);
}

TEST(BoundedReward, PiecewiseSlopes) {
    const double below = (r(1.2) - r(1.1)) / 0.1;
    EXPECT_NEAR(below, 1.0, 1e-9);
    const double above = (r(1.6) - r(1.5)) / 0.1;
    EXPECT_NEAR(above, -1.3 / 0.2, 1e-9);
}

TEST(BoundedReward, MaximumAtThreshold) {
    EXPECT_NEAR(r(1.3), 1.3, 1e-12);
    for (double x = 0.05; x < 3.0; x += 0.05) EXPECT_LE(r(x), 1.3 + 1e-12);
}

TEST(BoundedReward, ToleranceExtremes) {
    // large b: above-threshold branch approaches a constant reward th
    RewardConfig huge{1.3, 1e9};
    EXPECT_NEAR(r(2.5, huge), 1.3, 1e-6);
    // penalty slope magnitude th/b is strictly decreasing in b
    double prev_slope = 1e300;
    for (double b : {1e-5, 1e-2, 0.2, 1.0, 1e2, 1e5}) {
        const double slope = 1.3 / b;
        EXPECT_LT(slope, prev_slope);
        prev_slope = slope;
    }
    // tiny b: arbitrarily steep penalty just above the threshold
    RewardConfig tiny{1.3, 1e-5};
    EXPECT_LT(r(1.31, tiny), -100.0);
}

TEST(BoundedReward, RejectsUnprimedNormalizer) {
    EXPECT_THROW(bounded_reward(1.0, 0.0, kDefault), std::invalid_argument);
    EXPECT_THROW(bounded_reward(1.0, -2.0, kDefault), std::invalid_argument);
}

TEST(BoundedReward, RejectsBadConfig) {
    EXPECT_THROW(bounded_reward(1.0, 1.0, {1.0, 0.2}), std::invalid_argument);
    EXPECT_THROW(bounded_reward(1.0, 1.0, {1.3, 0.0}), std::invalid_argument);
}

TEST(Tracker, RolloverFreezesMean) {
    EpochLossTracker t;
    EXPECT_FALSE(t.primed());
    t.record(1.0);
    t.record(2.0);
    t.record(3.0);
    t.rollover();
    EXPECT_TRUE(t.primed());
    EXPECT_DOUBLE_EQ(t.frozen_average(), 2.0);
}

TEST(Tracker, DoubleRolloverRejected) {
    EpochLossTracker t;
    t.record(1.0);
    t.rollover();
    EXPECT_THROW(t.rollover(), std::logic_error);
}

TEST(Tracker, FrozenAverageStableUntilNextRollover) {
    EpochLossTracker t;
    t.record(4.0);
    t.rollover();
    EXPECT_DOUBLE_EQ(t.frozen_average(), 4.0);
    t.record(100.0);
    t.record(200.0);
    EXPECT_DOUBLE_EQ(t.frozen_average(), 4.0);
    t.rollover();
    EXPECT_DOUBLE_EQ(t.frozen_average(), 150.0);
}

TEST(Tracker, UnprimedAccessRejected) {
    EpochLossTracker t;
    EXPECT_THROW(t.frozen_average(), std::logic_error);
}
