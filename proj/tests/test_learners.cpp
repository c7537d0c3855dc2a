#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "lpnrl/harness.hpp"
#include "lpnrl/learners.hpp"

using namespace lpnrl;

namespace {

CounterParams counter(std::size_t n, int H, double delta, std::size_t N, Rng& rng) {
    CounterParams p;
    p.n = n;
    p.H = H;
    p.delta = delta;
    p.N = N;
    p.sk = F2Vector::random(n, rng);
    p.validate();
    return p;
}

std::vector<double> random_simplex(std::size_t k, Rng& rng) {
    std::vector<double> v(k);
    double s = 0;
    for (double& x : v) s += x = -std::log(1 - rng.uniform());
    for (double& x : v) x /= s;
    return v;
}

std::vector<double> label_b(int h) {
    std::vector<double> f(states_at(h));
    for (std::size_t s = 0; s < f.size(); ++s) f[s] = static_cast<double>(s % 2);
    return f;
}

bool contains(const std::vector<F2Vector>& v, const F2Vector& x) { return std::find(v.begin(), v.end(), x) != v.end(); }

PcLearner erm_learner(std::size_t n, int H, std::size_t episodes) {
    return [=](const EpisodeFn& env, Rng& r) {
        ErmConfig ec;
        ec.episodes = episodes;
        return erm_policy_cover(env, all_keys(n), H, r, ec).psi;
    };
}

}  // namespace

// ---------------------------------------------------------- index set

TEST(CorrelationIndices, SizeAndMembership) {
    for (int h = 1; h <= 6; ++h) {
        const auto idx = correlation_indices(h);
        EXPECT_EQ(idx.size(), static_cast<std::size_t>(4 * h - 2));
        EXPECT_LE(idx.size(), static_cast<std::size_t>(4 * (h + 1)));
        for (const auto& i : idx) EXPECT_TRUE(i.valid(h));
    }
    EXPECT_FALSE((CorrelationIndex{0, 0, 1}.valid(2)));
    EXPECT_FALSE((CorrelationIndex{2, 0, 0}.valid(2)));
}

// ---------------------------------------------------------- prefix sums

TEST(PrefixSumBias, ConstantLabelHasNoLabelDeviation) {
    Rng rng(1);
    for (int h = 1; h <= 4; ++h) {
        const auto beta = random_simplex(states_at(h), rng);
        const std::vector<double> f(states_at(h), 0.3);
        EXPECT_NEAR(label_deviation(beta, f), 0.0, 1e-15);
        for (const auto& idx : correlation_indices(h)) {
            if (!idx.rp) continue;
            const CorrelationIndex free{idx.m, idx.r, 0};
            EXPECT_NEAR(prefix_sum_bias(beta, f, idx), prefix_sum_bias(beta, f, free), 1e-15);
        }
    }
}

TEST(PrefixSumBias, LabelEqualToLastBitIsCertain) {
    const std::vector<double> beta = {0.5, 0.5};
    EXPECT_NEAR(prefix_sum_bias(beta, {0.0, 1.0}, {0, 1, 1}), 1.0, 1e-15);
    EXPECT_NEAR(prefix_sum_bias(beta, {0.0, 1.0}, {0, 1, 0}), 0.5, 1e-15);
}

TEST(PrefixSumBias, MatchesMonteCarloOverNu) {
    Rng rng(2);
    for (int h = 2; h <= 4; ++h) {
        const auto beta = random_simplex(states_at(h), rng);
        std::vector<double> f(states_at(h));
        for (double& x : f) x = rng.uniform();
        const DiscreteDist states(beta);
        double alpha = 0;
        for (std::size_t s = 0; s < f.size(); ++s) alpha += beta[s] * f[s];
        for (const auto& idx : correlation_indices(h)) {
            const int trials = 40000;
            int even = 0;
            for (int t = 0; t < trials; ++t) {
                const std::size_t s = states.sample(rng);
                const auto B = sample_nu(LatentState::from_index(h, s), rng);
                int par = rng.bernoulli(idx.rp ? f[s] : alpha) ? 1 : 0;
                for (int j = 0; j < idx.m; ++j) par ^= B[static_cast<std::size_t>(j)];
                if (idx.r) par ^= B.back();
                even += par == 0;
            }
            EXPECT_NEAR(static_cast<double>(even) / trials, prefix_sum_bias(beta, f, idx), 0.01);
        }
    }
}

TEST(PrefixSumBias, CorrelationLemmaInequalityHolds) {
    Rng rng(3);
    for (int h = 1; h <= 4; ++h)
        for (int t = 0; t < 500; ++t) {
            const auto beta = random_simplex(states_at(h), rng);
            std::vector<double> f(states_at(h));
            for (double& x : f) x = rng.uniform();
            ASSERT_LE(label_deviation(beta, f), f_corr_constant(h) * max_admissible_deviation(beta, f) + 1e-12);
        }
}

TEST(PrefixSumBias, Errors) {
    const std::vector<double> beta(14, 1.0 / 14), f(14, 0.5);
    EXPECT_THROW(prefix_sum_bias(beta, f, {1, 0, 0}), std::invalid_argument);
    EXPECT_THROW(prefix_sum_bias({0.5, 0.5}, {0.5, 0.5}, {0, 0, 1}), std::invalid_argument);
    EXPECT_THROW(prefix_sum_bias({0.5, 0.5}, {0.5}, {0, 1, 1}), std::invalid_argument);
}

// ------------------------------------------------------------------- LFC

TEST(LfcSamples, CovariatesUniformByEnumeration) {
    // every (u_1, u_2) pair at n = 3: the aggregate u_1 + u_2 hits each vector 8 times
    const std::size_t n = 3;
    std::vector<RegressionSample> data;
    for (std::uint64_t a = 0; a < 8; ++a)
        for (std::uint64_t b = 0; b < 8; ++b) {
            Emission z(2, n, 1);
            z.row_u.set_row(0, F2Vector::from_word(n, a));
            z.row_u.set_row(1, F2Vector::from_word(n, b));
            data.push_back({z, 0});
        }
    std::vector<int> counts(8, 0);
    for (const auto& s : lfc_samples(data, {1, 1, 0})) ++counts[s.u.word(0)];
    for (int c : counts) EXPECT_EQ(c, 8);
}

TEST(LfcSamples, AggregatesRowsAndLabel) {
    Rng rng(4);
    const auto p = counter(8, 3, 0.2, 10, rng);
    const auto data = regression_data(p, 3, std::vector<double>(6, 1.0 / 6), label_b(3), 50, rng, false);
    const auto out = lfc_samples(data, {2, 1, 1});
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& z = data[i].z;
        F2Vector u = z.row_u.row(0) ^ z.row_u.row(1) ^ z.row_u.row(2);
        EXPECT_EQ(out[i].u, u);
        EXPECT_EQ(out[i].y, z.row_y[0] ^ z.row_y[1] ^ z.row_y[2] ^ data[i].f);
    }
}

TEST(Lfc, NoiselessRecoversKey) {
    Rng rng(5);
    const auto p = counter(8, 2, 0.5, 3, rng);
    const auto data = regression_data(p, 2, std::vector<double>(4, 0.25), label_b(2), 200, rng);
    EXPECT_EQ(lfc(data, {0, 1, 1}, 0.5, 0.5, 0.1, brute_base(), desk_solver_plan(data.size())), p.sk);
}

TEST(Lfc, CorrelatedLastBitAtLemmaBound) {
    Rng rng(6);
    const double delta = 0.2, eps = 0.5, eta = 0.1;
    const auto plan = unknown_noise_plan(8, 2 * delta * eps, eta, brute_base().sample_bound);
    int ok = 0;
    for (int t = 0; t < 100; ++t) {
        const auto p = counter(8, 2, delta, 1, rng);
        const auto data = regression_data(p, 2, std::vector<double>(4, 0.25), label_b(2), plan.total(), rng, false);
        ok += lfc(data, {0, 1, 1}, delta, eps, eta, brute_base()) == p.sk;
    }
    EXPECT_GE(ok, 90);
}

TEST(Lfc, UncorrelatedLabelsGiveRejectedCandidates) {
    Rng rng(7);
    const double delta = 0.2;
    int rejected = 0;
    for (int t = 0; t < 20; ++t) {
        const auto p = counter(8, 2, delta, 1, rng);
        // labels independent of the state leave the aggregate at zero bias
        const auto data = regression_data(p, 2, std::vector<double>(4, 0.25), std::vector<double>(4, 0.5), 1000, rng, false);
        const F2Vector cand = lfc(data, {0, 1, 1}, delta, 0.5, 0.1, brute_base(), desk_solver_plan(1000));
        if (cand == p.sk) continue;
        const auto held = lpn_samples(LpnInstance(p.sk, delta), select_sample_bound(delta, 2, 0.05), rng);
        rejected += select(held, {cand, p.sk}) == p.sk;
    }
    EXPECT_GE(rejected, 18);
}

// ----------------------------------------------------------------- regress

TEST(Regress, ConstantLabelsWithinEps) {
    Rng rng(8);
    const std::vector<double> beta(4, 0.25), f(4, 0.3);
    for (int t = 0; t < 20; ++t) {
        const auto p = counter(8, 2, 0.2, 64, rng);
        RegressConfig cfg;
        cfg.lfc_eps = 0.5;
        const auto r = regress(regression_data(p, 2, beta, f, 2000, rng), 0.2, 0.1, rng, cfg);
        EXPECT_LE(excess_risk(r.predictor, p, 2, beta, f, rng), 0.1);
    }
}

TEST(Regress, LastBitLabelsDeskRate) {
    Rng rng(9);
    const std::vector<double> beta(4, 0.25);
    const auto f = label_b(2);
    int ok = 0;
    const int trials = 30;
    for (int t = 0; t < trials; ++t) {
        const auto p = counter(8, 2, 0.2, 256, rng);
        RegressConfig cfg;
        cfg.lfc_eps = 0.5;
        const auto r = regress(regression_data(p, 2, beta, f, 2000, rng), 0.2, 0.1, rng, cfg);
        ok += excess_risk(r.predictor, p, 2, beta, f, rng) <= 0.1;
    }
    EXPECT_GE(3 * ok, 2 * trials);
}

TEST(Regress, IndependentLabelsNearZeroExcess) {
    Rng rng(10);
    const std::vector<double> beta(4, 0.25), f(4, 0.5);
    for (int t = 0; t < 10; ++t) {
        const auto p = counter(8, 2, 0.2, 64, rng);
        const auto r = regress(regression_data(p, 2, beta, f, 2000, rng), 0.2, 0.1, rng);
        EXPECT_LE(excess_risk(r.predictor, p, 2, beta, f, rng), 0.02);
    }
}

TEST(Regress, DegenerateInputs) {
    Rng rng(11);
    const auto p = counter(6, 2, 0.2, 32, rng);
    std::vector<RegressionSample> none;
    EXPECT_DOUBLE_EQ(regress(none, 0.2, 0.1, rng).predictor.value, 0.5);
    const auto ones = regression_data(p, 2, {0, 0, 0, 1}, {1, 1, 1, 1}, 3, rng);
    EXPECT_DOUBLE_EQ(regress(ones, 0.2, 0.1, rng).predictor.value, 1.0);
    const auto single = regression_data(p, 2, {0, 0, 1, 0}, {1, 1, 1, 1}, 400, rng);
    const auto r = regress(single, 0.2, 0.1, rng);
    for (const auto& c : r.candidates) {
        EXPECT_GE(c.value, 0.0);
        EXPECT_LE(c.value, 1.0);
        for (double v : c.table) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    EXPECT_DOUBLE_EQ(r.predictor(single[0].z), 1.0);
}

TEST(Regress, TiesGoToLowestIndex) {
    Rng rng(12);
    const auto p = counter(6, 2, 0.2, 32, rng);
    const auto data = regression_data(p, 2, std::vector<double>(4, 0.25), std::vector<double>(4, 0.0), 400, rng);
    const auto r = regress(data, 0.2, 0.1, rng);
    for (double x : r.risks) EXPECT_DOUBLE_EQ(x, 0.0);
    EXPECT_EQ(r.chosen, 0U);
    EXPECT_TRUE(r.predictor.constant);
}

TEST(ExcessRisk, TrueKeyIsExact) {
    Rng rng(13);
    const auto p = counter(6, 2, 0.3, 200, rng);
    Predictor pred;
    pred.constant = false;
    pred.key = p.sk;
    pred.table = {0.1, 0.9, 0.2, 0.7};
    const std::vector<double> beta = {0.1, 0.2, 0.3, 0.4};
    EXPECT_NEAR(excess_risk(pred, p, 2, beta, label_b(2), rng), 0.1 * 0.01 + 0.2 * 0.01 + 0.3 * 0.04 + 0.4 * 0.09, 1e-12);
}

TEST(ExcessRisk, WrongKeyIsSampled) {
    // a flat table makes the decoded state irrelevant, so only the state draw is random
    Rng rng(14);
    const auto p = counter(6, 2, 0.3, 200, rng);
    Predictor pred;
    pred.constant = false;
    pred.key = p.sk ^ F2Vector::unit(6, 0);
    pred.table = {0.25, 0.25, 0.25, 0.25};
    EXPECT_NEAR(excess_risk(pred, p, 2, std::vector<double>(4, 0.25), label_b(2), rng, 5000), 0.0625 * 0.5 + 0.5625 * 0.5, 0.02);
}

// ------------------------------------------------------ contrastive learner

TEST(Contrast, OptimalCoverYieldsKey) {
    Rng rng(14);
    const int H = 2;
    int hits = 0;
    for (int t = 0; t < 10; ++t) {
        const F2Vector sk = F2Vector::random(8, rng);
        std::vector<TriangleSample> batch;
        for (int i = 0; i < 2 * 1500; ++i) batch.push_back(tri_sample_direct(sk, H, 256, 0.2, rng));
        MixturePolicy mix({std::make_shared<DecodedPolicy>(sk, H, 0), std::make_shared<DecodedPolicy>(sk, H, 1)});
        const auto res = contrastive_learn(batch, mix, H, 0.2, rng);
        EXPECT_LE(res.candidates.size(), static_cast<std::size_t>(4 * (H + 1)));
        hits += contains(res.candidates, sk);
    }
    EXPECT_GE(hits, 9);
}

TEST(Contrast, NoContrastGivesNoKey) {
    Rng rng(15);
    const int H = 2;
    int hits = 0;
    for (int t = 0; t < 10; ++t) {
        const F2Vector sk = F2Vector::random(8, rng);
        std::vector<TriangleSample> batch;
        for (int i = 0; i < 2 * 1500; ++i) batch.push_back(tri_sample_direct(sk, H, 256, 0.2, rng));
        MixturePolicy mix({std::make_shared<ConstantPolicy>(0)});
        hits += contains(contrastive_learn(batch, mix, H, 0.2, rng).candidates, sk);
    }
    EXPECT_LE(hits, 2);
}

TEST(Contrast, Errors) {
    Rng rng(16);
    MixturePolicy mix({std::make_shared<ConstantPolicy>(0)});
    std::vector<TriangleSample> one = {tri_sample_direct(F2Vector::random(4, rng), 2, 8, 0.2, rng)};
    EXPECT_THROW(contrastive_learn(one, mix, 2, 0.2, rng), std::invalid_argument);
    one.push_back(one[0]);
    EXPECT_THROW(contrastive_learn(one, mix, 3, 0.2, rng), std::invalid_argument);
}

// -------------------------------------------------------- ERM policy cover

TEST(Erm, RecoversKeyAndCovers) {
    Rng rng(17);
    const int H = 2;
    int ok = 0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
        const auto p = counter(8, H, 0.2, 256, rng);
        EpisodeFn env = [&](Policy& pi, Rng& r) { return episode(p, pi, r); };
        const auto res = erm_policy_cover(env, all_keys(8), H, rng);
        ok += res.key == p.sk;
        if (res.key != p.sk) continue;
        std::vector<Visitation> psi;
        for (const auto& pi : res.psi) {
            Visitation d(static_cast<std::size_t>(H));
            for (int h = 1; h <= H; ++h) d[static_cast<std::size_t>(h - 1)].assign(states_at(h), 0.0);
            const int episodes = 1000;
            for (int e = 0; e < episodes; ++e)
                for (const auto& s : episode(p, *pi, rng).states) d[static_cast<std::size_t>(s.h - 1)][s.index()] += 1.0 / episodes;
            psi.push_back(d);
        }
        EXPECT_TRUE(policy_cover_check(psi, max_visitation(H), 1.0, 0.25, {{H, H - 1, 0}, {H, H - 1, 1}}).pass);
        EXPECT_FALSE(res.low_confidence);
    }
    EXPECT_GE(ok, 19);
}

TEST(Erm, ExhaustiveTinyKeySpace) {
    Rng rng(18);
    for (int t = 0; t < 10; ++t) {
        const auto p = counter(2, 3, 0.3, 300, rng);
        EpisodeFn env = [&](Policy& pi, Rng& r) { return episode(p, pi, r); };
        EXPECT_EQ(erm_policy_cover(env, all_keys(2), 3, rng).key, p.sk);
    }
}

TEST(Erm, MissingKeyIsFlagged) {
    Rng rng(19);
    const auto p = counter(6, 3, 0.3, 200, rng);
    std::vector<F2Vector> keys;
    for (const auto& k : all_keys(6))
        if (k != p.sk) keys.push_back(k);
    EpisodeFn env = [&](Policy& pi, Rng& r) { return episode(p, pi, r); };
    const auto res = erm_policy_cover(env, keys, 3, rng);
    EXPECT_NE(res.key, p.sk);
    EXPECT_TRUE(res.low_confidence);
}

TEST(Erm, Errors) {
    Rng rng(20);
    EpisodeFn env = [](Policy&, Rng&) { return Trajectory{}; };
    EXPECT_THROW(erm_policy_cover(env, {}, 2, rng), std::invalid_argument);
    ErmConfig cfg;
    cfg.episodes = 0;
    EXPECT_THROW(erm_policy_cover(env, all_keys(2), 2, rng, cfg), std::invalid_argument);
    EXPECT_THROW(all_keys(21), std::invalid_argument);
}

// ---------------------------------------------------------------- pipeline

TEST(Pipeline, DeskRunRecoversKeyWithExactAccounting) {
    Rng rng(21);
    PipelineConfig cfg;
    const auto plan = tri_plan(cfg.H, cfg.N, cfg.delta, cfg.mode);
    int ok = 0;
    for (int t = 0; t < 5; ++t) {
        const F2Vector sk = F2Vector::random(8, rng);
        LpnStream src(LpnInstance(sk, plan.input_bias), rng.child(static_cast<std::uint64_t>(t)));
        const auto res = policy_cover_to_lpn(src, erm_learner(8, 2, 200), cfg, rng);
        ok += res.key && *res.key == sk;
        EXPECT_EQ(res.samples_used, src.consumed());
        EXPECT_EQ(res.samples_episodes, res.episodes * plan.index.samples());
        EXPECT_EQ(res.samples_contrast, 2 * cfg.contrast_pairs * plan.index.samples());
        EXPECT_EQ(res.samples_select, pipeline_select_size(plan.input_bias, cfg.H, 8));
    }
    EXPECT_GE(ok, 4);
}

TEST(Pipeline, NonCoverIsRejected) {
    Rng rng(22);
    PipelineConfig cfg;
    const auto plan = tri_plan(cfg.H, cfg.N, cfg.delta, cfg.mode);
    PcLearner lazy = [](const EpisodeFn&, Rng&) { return std::vector<std::shared_ptr<Policy>>{std::make_shared<ConstantPolicy>(0)}; };
    int wrong = 0;
    for (int t = 0; t < 5; ++t) {
        const F2Vector sk = F2Vector::random(8, rng);
        LpnStream src(LpnInstance(sk, plan.input_bias), rng.child(static_cast<std::uint64_t>(t)));
        const auto res = policy_cover_to_lpn(src, lazy, cfg, rng);
        wrong += res.key && *res.key == sk;
    }
    EXPECT_LE(wrong, 1);
}

TEST(Pipeline, ReproducibleFromSeed) {
    auto run = [] {
        Rng rng(23);
        PipelineConfig cfg;
        cfg.contrast_pairs = 500;
        const auto plan = tri_plan(cfg.H, cfg.N, cfg.delta, cfg.mode);
        const F2Vector sk = F2Vector::random(8, rng);
        LpnStream src(LpnInstance(sk, plan.input_bias), rng.child(0));
        const auto res = policy_cover_to_lpn(src, erm_learner(8, 2, 100), cfg, rng);
        return std::make_tuple(res.selected.hex(), res.candidates.size(), res.samples_used, res.select_disagreement);
    };
    EXPECT_EQ(run(), run());
}

TEST(Pipeline, EmptyCoverThrows) {
    Rng rng(24);
    PipelineConfig cfg;
    LpnStream src(LpnInstance(F2Vector::random(8, rng), 0.1), Rng(1));
    PcLearner none = [](const EpisodeFn&, Rng&) { return std::vector<std::shared_ptr<Policy>>{}; };
    EXPECT_THROW(policy_cover_to_lpn(src, none, cfg, rng), std::runtime_error);
}

TEST(Pipeline, BudgetExhaustionPropagates) {
    Rng rng(25);
    PipelineConfig cfg;
    LpnStream src(LpnInstance(F2Vector::random(8, rng), 0.1), Rng(1), 5000);
    EXPECT_THROW(policy_cover_to_lpn(src, erm_learner(8, 2, 50), cfg, rng), std::runtime_error);
}
