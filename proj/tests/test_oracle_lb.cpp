#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <set>
#include <vector>

#include "lpnrl/oracle_lb.hpp"

using namespace lpnrl;

namespace {

std::vector<int> bits_of(std::uint64_t a, int len) {
    std::vector<int> v(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) v[static_cast<std::size_t>(i)] = static_cast<int>((a >> i) & 1U);
    return v;
}

double tv(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return 0.5 * (std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]));
}

Reduction over_budget_reduction(std::size_t calls) {
    return {"greedy", [calls](ReductionContext& ctx) {
                for (std::size_t i = 0; i < calls; ++i) ctx.sample(olb_uniform());
                return olb_uniform();
            }};
}

}  // namespace

// --------------------------------------------------------------- parameters

TEST(OracleLbParams, TableFitsAndSizes) {
    const OracleLbParams p(4, 16);
    EXPECT_EQ(p.log_x, 20);
    EXPECT_EQ(p.num_states(), 13);
    EXPECT_EQ(p.state(2, 1), 4);
    EXPECT_EQ(p.step_of(p.state(4, 2)), 4);
    EXPECT_EQ(p.slot_of(p.sink()), -1);
    EXPECT_LE(p.table_size(), p.X());
    EXPECT_EQ(OracleLbParams(2, 4).log_x, 10);
    EXPECT_THROW(p.state(5, 0), std::invalid_argument);
    EXPECT_THROW(OracleLbParams(0, 4), std::invalid_argument);
}

// ---------------------------------------------------------------- Q formula

TEST(QFormula, Examples) {
    EXPECT_DOUBLE_EQ(q_formula(1, 0), 0.5);
    EXPECT_DOUBLE_EQ(q_formula(1, 1), 0.5);
    EXPECT_DOUBLE_EQ(q_formula(1, 2), 0.0);
    EXPECT_DOUBLE_EQ(q_formula(3, 2), 0.75);
    EXPECT_THROW(q_formula(0, 0), std::invalid_argument);
    EXPECT_THROW(q_formula(2, 3), std::invalid_argument);
}

TEST(QFormula, MatchesDpForEverySequence) {
    for (int H = 1; H <= 6; ++H)
        for (std::uint64_t a = 0; a < (std::uint64_t{1} << H); ++a) {
            const auto seq = bits_of(a, H);
            const auto d = open_loop_visitation(H, seq);
            for (int h = 1; h <= H; ++h)
                for (int c = 0; c < 3; ++c) ASSERT_DOUBLE_EQ(d[static_cast<std::size_t>(h - 1)][static_cast<std::size_t>(c)], q_formula(h, c));
        }
}

// -------------------------------------------------------------- permutation

TEST(Feistel, InverseExhaustive) {
    const Feistel f(123, 12);
    for (std::uint64_t x = 0; x < 4096; ++x) ASSERT_EQ(f.inverse(f.forward(x)), x);
    EXPECT_EQ(feistel_prp_inv(9, 12, feistel_prp(9, 12, 77)), 77U);
}

TEST(Feistel, BijectiveUpToTwelveBits) {
    for (int bits = 2; bits <= 12; bits += 2) {
        const Feistel f(static_cast<std::uint64_t>(bits), bits);
        std::vector<bool> hit(std::size_t{1} << bits, false);
        for (std::uint64_t x = 0; x < hit.size(); ++x) {
            const auto y = f.forward(x);
            ASSERT_LT(y, hit.size());
            ASSERT_FALSE(hit[y]);
            hit[y] = true;
        }
    }
}

TEST(Feistel, Avalanche) {
    const int bits = 12;
    const Feistel f(5, bits);
    Rng rng(6);
    double flips = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        const std::uint64_t x = rng.below(4096);
        const std::uint64_t y = x ^ (std::uint64_t{1} << rng.below(bits));
        flips += std::popcount(f.forward(x) ^ f.forward(y));
    }
    EXPECT_NEAR(flips / trials, bits / 2.0, 0.6);
}

TEST(Feistel, RejectsOddWidth) { EXPECT_THROW(Feistel(1, 11), std::invalid_argument); }

TEST(KeyedPermutation, OddWidthIsBijective) {
    const KeyedPermutation k(3, 11);
    std::vector<bool> hit(2048, false);
    for (std::uint64_t x = 0; x < 2048; ++x) {
        const auto y = k.forward(x);
        ASSERT_LT(y, 2048U);
        ASSERT_FALSE(hit[y]);
        hit[y] = true;
        ASSERT_EQ(k.inverse(y), x);
    }
    EXPECT_THROW(k.forward(2048), std::out_of_range);
}

// ------------------------------------------------------------------ oracle

TEST(IndexOracle, PrpDecoderExhaustive) {
    const OracleLbParams p(2, 4);
    auto o = IndexOracle::prp(p, 42);
    std::set<std::uint64_t> image;
    for (int s = 0; s < p.num_states(); ++s)
        for (std::uint64_t i = 0; i < p.N; ++i) {
            const auto x = o.query(s, i);
            image.insert(x);
            EXPECT_EQ(o.decode(x), s);
        }
    EXPECT_EQ(image.size(), p.table_size());
    EXPECT_FALSE(o.has_collision());
    for (std::uint64_t x = 0; x < p.X(); ++x)
        if (!image.count(x)) {
            ASSERT_EQ(o.decode(x), p.sink());
        }
    EXPECT_EQ(o.decode(p.X() + 5), p.sink());
}

TEST(IndexOracle, RandomEntriesAreStableAndOrderFree) {
    const OracleLbParams p(3, 8);
    auto a = IndexOracle::random(p, 7), b = IndexOracle::random(p, 7);
    const auto first = a.query(4, 3);
    EXPECT_EQ(a.query(4, 3), first);
    b.query(0, 0);
    b.query(9, 7);
    EXPECT_EQ(b.query(4, 3), first);
    EXPECT_EQ(a.queries(), 2U);
}

TEST(IndexOracle, RandomDecoderOutsideImage) {
    const OracleLbParams p(2, 4);
    auto o = IndexOracle::random(p, 3);
    std::set<std::uint64_t> image;
    for (int s = 0; s < p.num_states(); ++s)
        for (std::uint64_t i = 0; i < p.N; ++i) image.insert(o.query(s, i));
    std::uint64_t x = 0;
    while (image.count(x)) ++x;
    EXPECT_EQ(o.decode(x), p.sink());
}

TEST(IndexOracle, ForcedCollisionKeepsEarlierPair) {
    const OracleLbParams p(3, 8);
    auto o = IndexOracle::random(p, 11);
    const auto x = o.query(2, 5);
    o.force(6, 1, x);
    EXPECT_TRUE(o.has_collision());
    EXPECT_EQ(o.decode(x), 2);
    const auto y = o.query(7, 0);
    o.force(1, 3, y);
    EXPECT_EQ(o.decode(y), 1);
    auto prp = IndexOracle::prp(p, 1);
    EXPECT_THROW(prp.force(0, 0, 0), std::logic_error);
}

TEST(IndexOracle, CollisionRateWithinMarkovBound) {
    const OracleLbParams p(4, 16);
    int collided = 0;
    const int seeds = 400;
    for (int s = 0; s < seeds; ++s) {
        auto o = IndexOracle::random(p, static_cast<std::uint64_t>(s));
        collided += o.has_collision();
    }
    const double n4 = std::pow(16.0, 4);
    EXPECT_LE(static_cast<double>(collided) / seeds, n4 / static_cast<double>(p.X()));
}

TEST(IndexOracle, RangeChecks) {
    const OracleLbParams p(2, 4);
    auto o = IndexOracle::random(p, 1);
    EXPECT_THROW(o.query(7, 0), std::out_of_range);
    EXPECT_THROW(o.query(0, 4), std::out_of_range);
}

// ---------------------------------------------------------------- sampling

TEST(SimulateSampling, FailureStateAbsorbs) {
    const OracleLbParams p(5, 8);
    auto o = IndexOracle::prp(p, 3);
    AccessLog log;
    Rng rng(4);
    for (int e = 0; e < 200; ++e) {
        const auto t = simulate_sampling(olb_open_loop({0, 0, 0, 0, 0}), o, log, rng);
        bool failed = false;
        for (int h = 1; h <= p.H; ++h) {
            const int s = t.states[static_cast<std::size_t>(h - 1)];
            EXPECT_EQ(p.step_of(s), h);
            if (failed) {
                EXPECT_EQ(p.slot_of(s), 2);
            }
            if (h < p.H && p.slot_of(s) != 0) failed = true;
        }
        for (int h = 1; h < p.H; ++h) EXPECT_EQ(t.rewards[static_cast<std::size_t>(h - 1)], 0.0);
        EXPECT_EQ(t.rewards.back(), failed ? 0.0 : 1.0);
    }
}

TEST(SimulateSampling, OpenLoopLawMatchesDp) {
    const OracleLbParams p(4, 16);
    auto o = IndexOracle::prp(p, 5);
    AccessLog log;
    Rng rng(6);
    const std::vector<int> seq = {1, 0, 1, 1};
    const int episodes = 100000;
    std::vector<std::array<double, 3>> emp(4, {0, 0, 0});
    for (int e = 0; e < episodes; ++e) {
        const auto t = simulate_sampling(olb_open_loop(seq), o, log, rng);
        for (int h = 0; h < 4; ++h) {
            const int s = o.decode(t.xs[static_cast<std::size_t>(h)]);
            emp[static_cast<std::size_t>(h)][static_cast<std::size_t>(p.slot_of(s))] += 1.0 / episodes;
        }
    }
    const auto d = open_loop_visitation(4, seq);
    for (std::size_t h = 0; h < 4; ++h) EXPECT_LE(tv(emp[h], d[h]), 0.02);
}

TEST(SimulateSampling, LogGrowthBounded) {
    const OracleLbParams p(4, 16);
    auto o = IndexOracle::random(p, 8);
    AccessLog log;
    Rng rng(9);
    std::size_t prev = 0;
    for (int e = 1; e <= 50; ++e) {
        simulate_sampling(olb_uniform(), o, log, rng);
        EXPECT_GE(log.size(), prev);
        EXPECT_LE(log.size(), static_cast<std::size_t>(p.H * e));
        prev = log.size();
    }
}

TEST(SimulateSampling, BadActionThrows) {
    const OracleLbParams p(2, 4);
    auto o = IndexOracle::random(p, 1);
    AccessLog log;
    Rng rng(2);
    EXPECT_THROW(simulate_sampling(olb_open_loop({2, 0}), o, log, rng), std::invalid_argument);
}

// -------------------------------------------------------------- regression

TEST(SimulateRegression, ConstantLabel) {
    const OracleLbParams p(3, 8);
    auto o = IndexOracle::random(p, 1);
    AccessLog log;
    Rng rng(2);
    EXPECT_NEAR(simulate_regression(olb_uniform(), [](const OlbTrajectory&) { return 0.3; }, o, log, 0.5, 0.1, rng), 0.3, 1e-12);
}

TEST(SimulateRegression, RewardIndicatorUnderFixedActions) {
    const OracleLbParams p(4, 16);
    auto o = IndexOracle::prp(p, 3);
    AccessLog log;
    Rng rng(4);
    const double eps = 0.05, delta = 0.01;
    const double mu = simulate_regression(olb_open_loop({0, 1, 0, 0}), [](const OlbTrajectory& t) { return t.rewards.back() != 0 ? 1.0 : 0.0; },
                                          o, log, eps, delta, rng);
    EXPECT_NEAR(mu, std::ldexp(1.0, 1 - p.H), eps);
}

TEST(SimulateRegression, ActionParityIsNearConstant) {
    const int H = 4;
    const OracleLbParams p(H, std::uint64_t{1} << H);
    auto o = IndexOracle::random(p, 5);
    AccessLog log;
    Rng rng(6);
    const double delta = 0.1;
    OlbLabel parity = [](const OlbTrajectory& t) {
        int x = 0;
        for (int a : t.actions) x ^= a;
        return static_cast<double>(x);
    };
    const double mu = simulate_regression(olb_uniform(), parity, o, log, 0.05, delta, rng);
    for (int h = 1; h <= H; ++h)
        EXPECT_LE(conditional_discrepancy(olb_uniform(), parity, h, mu, o, log, 20000, rng), std::sqrt(std::log(1 / delta) / static_cast<double>(p.N)));
}

TEST(SimulateRegression, ObservationLabelsDecorrelateFromStateAcrossTables) {
    // the low bit of the emission, averaged over fresh tables, carries no state information
    const OracleLbParams p(3, 8);
    double mean = 0;
    const int tables = 400;
    for (int k = 0; k < tables; ++k) {
        auto o = IndexOracle::random(p, 1000 + static_cast<std::uint64_t>(k));
        for (std::uint64_t i = 0; i < p.N; ++i) mean += static_cast<double>(o.query(p.state(1, 0), i) & 1U);
    }
    EXPECT_NEAR(mean / (tables * static_cast<double>(p.N)), 0.5, 0.02);
}

TEST(RegressionSampleSize, Formula) {
    EXPECT_EQ(regression_sample_size(0.1, 0.5, 16), static_cast<std::size_t>(std::ceil(1600 * std::log(2.0))));
    EXPECT_THROW(regression_sample_size(0.0, 0.5, 16), std::invalid_argument);
}

// ------------------------------------------------------------ TestReduction

TEST(TestReduction, TrivialGivesZero) {
    const OracleLbParams p(4, 16);
    int zeros = 0;
    for (int t = 0; t < 10; ++t) {
        auto o = IndexOracle::random(p, static_cast<std::uint64_t>(t));
        Rng rng(100 + static_cast<std::uint64_t>(t));
        const auto r = test_reduction(trivial_reduction(), o, 10, 0.25, rng);
        zeros += r.bit == 0;
        EXPECT_EQ(r.oracle_calls, 0U);
        EXPECT_NEAR(r.value, 1.0 / 8, 0.03);
    }
    EXPECT_GE(zeros, 9);
}

TEST(TestReduction, CheatTripsValueAudit) {
    const OracleLbParams p(4, 16);
    for (int t = 0; t < 5; ++t) {
        auto o = IndexOracle::prp(p, static_cast<std::uint64_t>(t));
        Rng rng(200 + static_cast<std::uint64_t>(t));
        const auto r = test_reduction(cheat_reduction(), o, 10, 0.25, rng);
        EXPECT_EQ(r.bit, 1);
        EXPECT_EQ(r.tripped, "value");
        EXPECT_NEAR(r.value, 1.0, 1e-12);
    }
}

TEST(TestReduction, StateDependentLabelTripsDiscrepancyAudit) {
    const OracleLbParams p(4, 16);
    auto o = IndexOracle::random(p, 9);
    Rng rng(10);
    Reduction liar{"liar", [](ReductionContext& ctx) {
                       // the label reads the hidden first state, so its conditional mean is far from any constant
                       ctx.regress(olb_uniform(), [](const OlbTrajectory& t) { return t.states[0] == 0 ? 1.0 : 0.0; }, 1);
                       return olb_uniform();
                   }};
    const auto r = test_reduction(liar, o, 10, 0.25, rng);
    EXPECT_EQ(r.bit, 1);
    EXPECT_EQ(r.tripped, "discrepancy");
    ASSERT_EQ(r.discrepancies.size(), 1U);
    EXPECT_NEAR(r.discrepancies[0], 0.5, 0.03);
}

TEST(TestReduction, BudgetOverflowIsAnError) {
    const OracleLbParams p(3, 8);
    auto o = IndexOracle::random(p, 1);
    Rng rng(2);
    EXPECT_THROW(test_reduction(over_budget_reduction(5), o, 5, 0.25, rng), QueryBudgetExceeded);
    auto o2 = IndexOracle::random(p, 1);
    EXPECT_NO_THROW(test_reduction(over_budget_reduction(4), o2, 5, 0.25, rng));
}

TEST(TestReduction, SampleSizeFormula) {
    EXPECT_EQ(test_reduction_sample_size(4, 10, 0.25, 16), static_cast<std::size_t>(std::ceil(16 * std::log(720.0) * 16 / 0.0625)));
}
