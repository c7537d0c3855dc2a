#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lpnrl/batch_lpn.hpp"
#include "lpnrl/block_mdp.hpp"
#include "lpnrl/lpn.hpp"
#include "lpnrl/rng.hpp"

namespace lpnrl {

struct RegressionSample {
    Emission z;
    int f = 0;
};

// (m, r, r'): aggregate rows 1..m, plus row h when r = 1, plus the label when r' = 1.
struct CorrelationIndex {
    int m = 0;
    int r = 0;
    int rp = 0;

    friend bool operator==(const CorrelationIndex&, const CorrelationIndex&) = default;
    bool valid(int h) const { return m >= 0 && m < h && (r & ~1) == 0 && (rp & ~1) == 0 && (m != 0 || r != 0); }
};

// The index set ({0..h-1} x F2 minus (0,0)) x F2, ordered by (m, r, r').
inline std::vector<CorrelationIndex> correlation_indices(int h) {
    std::vector<CorrelationIndex> out;
    for (int m = 0; m < h; ++m)
        for (int r = 0; r < 2; ++r)
            for (int rp = 0; rp < 2; ++rp)
                if (m != 0 || r != 0) out.push_back({m, r, rp});
    return out;
}

inline double f_corr_constant(int h) {
    return 4 * std::sqrt(2.0) * std::pow(2.0 * h, 3.0 * (h + 1) * (h + 1));
}

// ---------------------------------------------------------- exact biases

inline constexpr int kMaxPrefixSumStep = 6;

// Pr[B_1 + ... + B_m + r B_h + F = 0 mod 2] with (B, F) drawn from mu_{beta,f}
// (r' = 1) or mu_{beta,alpha} (r' = 0), alpha = sum_s beta(s) f(s). beta and f
// are indexed by state index 2k + b at step h.
inline double prefix_sum_bias(const std::vector<double>& beta, const std::vector<double>& f, const CorrelationIndex& idx) {
    if (beta.size() != f.size() || beta.size() % 2 || beta.empty()) throw std::invalid_argument("prefix_sum_bias: bad table sizes");
    const int h = static_cast<int>(beta.size() / 2);
    if (h > kMaxPrefixSumStep) throw std::invalid_argument("prefix_sum_bias: step beyond exact enumeration");
    if (!idx.valid(h)) throw std::invalid_argument("prefix_sum_bias: index outside the index set");
    double alpha = 0;
    for (std::size_t s = 0; s < beta.size(); ++s) alpha += beta[s] * f[s];
    const std::uint64_t lead = F2Vector::low_mask(static_cast<std::size_t>(idx.m));
    double total = 0;
    for (std::size_t s = 0; s < beta.size(); ++s) {
        if (beta[s] == 0) continue;
        const LatentState st = LatentState::from_index(h, s);
        const double pf = idx.rp ? f[s] : alpha;
        // B_1..B_{h-1} uniform over weight-k patterns.
        double weight = 0, even = 0;
        for (std::uint64_t B = 0; B < (std::uint64_t{1} << (h - 1)); ++B) {
            if (std::popcount(B) != st.k) continue;
            weight += 1;
            const int par = parity(B & lead) ^ (idx.r ? st.b : 0);
            even += par ? pf : 1 - pf;  // F must cancel the parity
        }
        total += beta[s] * even / weight;
    }
    return total;
}

// The largest deviation from 1/2 over every hypothesis of the correlation
// lemma (both label laws, all admissible (m, r)).
inline double max_admissible_deviation(const std::vector<double>& beta, const std::vector<double>& f) {
    const int h = static_cast<int>(beta.size() / 2);
    double worst = 0;
    for (const auto& idx : correlation_indices(h)) worst = std::max(worst, std::abs(prefix_sum_bias(beta, f, idx) - 0.5));
    return worst;
}

inline double label_deviation(const std::vector<double>& beta, const std::vector<double>& f) {
    double alpha = 0, dev = 0;
    for (std::size_t s = 0; s < beta.size(); ++s) alpha += beta[s] * f[s];
    for (std::size_t s = 0; s < beta.size(); ++s) dev += beta[s] * std::abs(f[s] - alpha);
    return dev;
}

// ------------------------------------------------------------------- LFC

// One LPN sample per regression sample: u = r u_h + sum_{j<=m} u_j and
// y = r' F + r y_h + sum_{j<=m} y_j.
inline std::vector<LpnSample> lfc_samples(std::span<const RegressionSample> data, const CorrelationIndex& idx) {
    std::vector<LpnSample> out;
    out.reserve(data.size());
    for (const auto& d : data) {
        const Emission& z = d.z;
        if (!idx.valid(z.h)) throw std::invalid_argument("lfc: index outside the index set");
        LpnSample s{F2Vector(z.n), idx.rp ? d.f : 0};
        for (int j = 0; j < idx.m; ++j) {
            z.row_u.xor_row_into(static_cast<std::size_t>(j), s.u);
            s.y ^= z.row_y[static_cast<std::size_t>(j)];
        }
        if (idx.r) {
            z.row_u.xor_row_into(z.rows() - 1, s.u);
            s.y ^= z.row_y[z.rows() - 1];
        }
        out.push_back(s);
    }
    return out;
}

// Desk budget: one base-solver block over most of the data, the rest held out
// for selection.
inline UnknownNoisePlan desk_solver_plan(std::size_t total, double select_fraction = 0.25) {
    return split_unknown_noise_plan(total, 1, 1, select_fraction);
}

// Feeds the aggregated samples to the unknown-noise solver at bias 2 delta eps.
// Without an explicit plan the solver's own budget applies.
inline F2Vector lfc(std::span<const RegressionSample> data, const CorrelationIndex& idx, double delta, double eps, double eta,
                    const BaseSolver& base, const std::optional<UnknownNoisePlan>& plan = std::nullopt) {
    const auto samples = lfc_samples(data, idx);
    const double bias = std::min(0.5, 2 * delta * eps);
    if (plan) return solve_unknown_noise(samples, bias, eta, base, *plan);
    return solve_unknown_noise(samples, bias, eta, base);
}

// ------------------------------------------------------------ predictors

struct Predictor {
    bool constant = true;
    double value = 0.5;          // constant prediction, also the fallback for unseen states
    F2Vector key;                // decoding key when not constant
    std::vector<double> table;   // by decoded state index at step h
    CorrelationIndex source{};   // index that produced the key

    double operator()(const Emission& z) const {
        if (constant) return value;
        return at(decode(key, z).index());
    }
    double at(std::size_t state) const { return state < table.size() ? table[state] : value; }
    std::string describe() const {
        if (constant) return "constant " + std::to_string(value);
        return "key " + key.hex() + " index (" + std::to_string(source.m) + "," + std::to_string(source.r) + "," +
               std::to_string(source.rp) + ")";
    }
};

struct RegressConfig {
    BaseSolver base = brute_base();
    double lfc_eps = 0;             // 0 selects eps / (8 C(h)) as in the proof
    double eta = 0.1;
    bool desk_plan = true;          // split the LFC quarter instead of the solver's own budget
    double select_fraction = 0.25;
};

struct RegressResult {
    Predictor predictor;
    std::vector<Predictor> candidates;  // candidates[0] is the constant predictor
    std::vector<double> risks;          // empirical risk on the last quarter
    std::size_t chosen = 0;
};

namespace detail {

inline std::vector<std::size_t> decode_all(const F2Vector& key, std::span<const RegressionSample> data) {
    std::vector<std::size_t> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = decode(key, data[i].z).index();
    return out;
}

}  // namespace detail

// Four equal quarters: constant fit, one LFC key per index, per-key decoded
// state means, empirical-risk selection (lowest index wins ties).
inline RegressResult regress(std::span<const RegressionSample> data, double delta, double eps, Rng& rng, const RegressConfig& cfg = {}) {
    (void)rng;
    RegressResult res;
    const std::size_t d = data.size();
    if (d < 4) {
        double mean = 0.5;
        if (d) {
            mean = 0;
            for (const auto& s : data) mean += s.f;
            mean /= static_cast<double>(d);
        }
        res.predictor.value = mean;
        res.candidates = {res.predictor};
        res.risks = {0.0};
        return res;
    }
    const std::size_t q = d / 4;
    const auto q1 = data.subspan(0, q), q2 = data.subspan(q, q), q3 = data.subspan(2 * q, q), q4 = data.subspan(3 * q, d - 3 * q);
    const int h = data[0].z.h;

    double alpha = 0;
    for (const auto& s : q1) alpha += s.f;
    alpha /= static_cast<double>(q1.size());
    Predictor constant;
    constant.value = alpha;
    res.candidates.push_back(constant);

    const double eps_lfc = cfg.lfc_eps > 0 ? cfg.lfc_eps : eps / (8 * f_corr_constant(h));
    std::map<F2Vector, std::vector<std::size_t>> q3_states, q4_states;
    for (const auto& idx : correlation_indices(h)) {
        F2Vector key;
        try {
            std::optional<UnknownNoisePlan> plan;
            if (cfg.desk_plan) plan = desk_solver_plan(q2.size(), cfg.select_fraction);
            key = lfc(q2, idx, delta, eps_lfc, cfg.eta, cfg.base, plan);
        } catch (const std::invalid_argument&) {
            continue;  // this index cannot be run on the quarter; other candidates remain
        }
        if (!q3_states.count(key)) {
            q3_states[key] = detail::decode_all(key, q3);
            q4_states[key] = detail::decode_all(key, q4);
        }
        Predictor p;
        p.constant = false;
        p.key = key;
        p.source = idx;
        p.value = alpha;
        std::vector<double> sum(states_at(h), 0.0), cnt(states_at(h), 0.0);
        const auto& st = q3_states[key];
        for (std::size_t i = 0; i < q3.size(); ++i) {
            sum[st[i]] += q3[i].f;
            cnt[st[i]] += 1;
        }
        p.table.resize(states_at(h));
        for (std::size_t s = 0; s < p.table.size(); ++s) p.table[s] = cnt[s] > 0 ? sum[s] / cnt[s] : alpha;
        res.candidates.push_back(p);
    }

    for (std::size_t c = 0; c < res.candidates.size(); ++c) {
        const Predictor& p = res.candidates[c];
        double risk = 0;
        for (std::size_t i = 0; i < q4.size(); ++i) {
            const double pred = p.constant ? p.value : p.at(q4_states[p.key][i]);
            risk += (pred - q4[i].f) * (pred - q4[i].f);
        }
        risk /= static_cast<double>(q4.size());
        res.risks.push_back(risk);
        if (risk < res.risks[res.chosen]) res.chosen = c;
    }
    res.predictor = res.candidates[res.chosen];
    return res;
}

// ------------------------------------------------------ realizable data

// Step-h regression data: states from beta, emissions of p, labels Ber(f(s)).
inline std::vector<RegressionSample> regression_data(const CounterParams& p, int h, const std::vector<double>& beta,
                                                     const std::vector<double>& f, std::size_t m, Rng& rng, bool conditioned = true) {
    if (beta.size() != states_at(h) || f.size() != beta.size()) throw std::invalid_argument("regression_data: bad table sizes");
    const DiscreteDist states(beta);
    std::vector<RegressionSample> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t s = states.sample(rng);
        out.push_back({emit(p, LatentState::from_index(h, s), rng, conditioned), rng.bernoulli(f[s]) ? 1 : 0});
    }
    return out;
}

// E[(pred(Z) - f(s))^2] over s ~ beta, which is the excess squared risk over f.
// Exact when the prediction depends on s alone (constant, or the true key under
// conditioned emissions); otherwise estimated on mc fresh emissions.
inline double excess_risk(const Predictor& pred, const CounterParams& p, int h, const std::vector<double>& beta,
                          const std::vector<double>& f, Rng& rng, std::size_t mc = 2000) {
    if (beta.size() != states_at(h) || f.size() != beta.size()) throw std::invalid_argument("excess_risk: bad table sizes");
    double r = 0;
    if (pred.constant || pred.key == p.sk) {
        for (std::size_t s = 0; s < beta.size(); ++s) {
            const double v = pred.constant ? pred.value : pred.at(s);
            r += beta[s] * (v - f[s]) * (v - f[s]);
        }
        return r;
    }
    const DiscreteDist states(beta);
    for (std::size_t i = 0; i < mc; ++i) {
        const std::size_t s = states.sample(rng);
        const double v = pred(emit(p, LatentState::from_index(h, s), rng));
        r += (v - f[s]) * (v - f[s]);
    }
    return r / static_cast<double>(mc);
}

// ------------------------------------------------------ contrastive learner

struct ContrastConfig {
    BaseSolver base = brute_base();
    double lfc_eps = 0;  // 0 selects 1 / (2^H C(H)) as in the proof
    double eta = 0.1;
    bool desk_plan = true;
    double select_fraction = 0.25;
};

struct ContrastResult {
    std::vector<F2Vector> candidates;
    std::vector<RegressionSample> data;  // the labelled step-H emissions
};

// First half of the triangle samples drive the mixture over Psi, second half
// the all-zero policy; each pair yields one step-H emission labelled by a fair
// coin choosing its source.
inline ContrastResult contrastive_learn(std::span<const TriangleSample> triangles, Policy& mixture, int H, double delta, Rng& rng,
                                        const ContrastConfig& cfg = {}) {
    const std::size_t D = triangles.size() / 2;
    if (D == 0) throw std::invalid_argument("contrastive_learn: insufficient triangle samples");
    for (const auto& t : triangles)
        if (static_cast<int>(t.index.H) != H) throw std::invalid_argument("contrastive_learn: horizon mismatch");
    ConstantPolicy zero(0);
    ContrastResult res;
    res.data.reserve(D);
    for (std::size_t i = 0; i < D; ++i) {
        Trajectory mix = draw_traj(triangles[i], mixture, rng);
        Trajectory base = draw_traj(triangles[D + i], zero, rng);
        const int F = rng.bit();
        res.data.push_back({F ? std::move(mix.xs.back()) : std::move(base.xs.back()), F});
    }
    const double eps = cfg.lfc_eps > 0 ? cfg.lfc_eps : 1 / (std::ldexp(1.0, H) * f_corr_constant(H));
    for (const auto& idx : correlation_indices(H)) {
        std::optional<UnknownNoisePlan> plan;
        if (cfg.desk_plan) plan = desk_solver_plan(res.data.size(), cfg.select_fraction);
        const F2Vector key = lfc(res.data, idx, delta, eps, cfg.eta, cfg.base, plan);
        if (std::find(res.candidates.begin(), res.candidates.end(), key) == res.candidates.end()) res.candidates.push_back(key);
    }
    return res;
}

// -------------------------------------------------------- ERM policy cover

// Runs one episode of the environment under the given policy.
using EpisodeFn = std::function<Trajectory(Policy&, Rng&)>;

struct ErmConfig {
    std::size_t episodes = 200;
    double log_floor = 1e-3;          // probability assigned to impossible decoded transitions
    double confidence_rate = 0.9;     // consistency rate below which the result is flagged
};

struct ErmResult {
    std::vector<std::shared_ptr<Policy>> psi;
    F2Vector key;
    std::size_t best = 0;
    std::vector<double> scores;       // log-likelihood per candidate
    double consistency = 0;           // fraction of consistent transitions for the winner
    bool low_confidence = false;
    std::size_t episodes_used = 0;
};

namespace detail {

// Log-likelihood of one decoded latent sequence under the latent kernel.
inline double sequence_loglik(const std::vector<LatentState>& s, const std::vector<int>& a, double floor, std::size_t& consistent) {
    double ll = std::log(0.5);
    for (std::size_t h = 0; h + 1 < s.size(); ++h) {
        const bool ok = s[h + 1].k == s[h].k + (s[h].b == a[h] ? 1 : 0);
        consistent += ok ? 1 : 0;
        ll += std::log(ok ? 0.5 : floor);
    }
    return ll;
}

}  // namespace detail

// Scores each candidate key by how well its decoded trajectories fit the
// known latent kernel across uniform-exploration episodes, then returns the
// two decode-and-match policies of the best key (final action 0 and 1).
inline ErmResult erm_policy_cover(const EpisodeFn& env, const std::vector<F2Vector>& keys, int H, Rng& rng, const ErmConfig& cfg = {}) {
    if (keys.empty()) throw std::invalid_argument("erm_policy_cover: empty candidate set");
    if (cfg.episodes == 0) throw std::invalid_argument("erm_policy_cover: zero episode budget");
    UniformPolicy explore;
    std::vector<Trajectory> eps;
    eps.reserve(cfg.episodes);
    for (std::size_t e = 0; e < cfg.episodes; ++e) eps.push_back(env(explore, rng));

    const std::size_t n = keys[0].size();
    const bool spectral = keys.size() > 32 && n <= 16;
    ErmResult res;
    res.scores.assign(keys.size(), 0.0);
    std::vector<std::size_t> consistent(keys.size(), 0);
    std::size_t transitions = 0;
    std::vector<LatentState> seq(static_cast<std::size_t>(H));
    for (const auto& tr : eps) {
        transitions += static_cast<std::size_t>(H - 1);
        if (spectral) {
            // spectra[h][j][t]: row j of emission h for every key t at once.
            std::vector<std::vector<std::vector<std::int64_t>>> spectra(tr.xs.size());
            for (std::size_t h = 0; h < tr.xs.size(); ++h)
                for (std::size_t j = 0; j < tr.xs[h].rows(); ++j) spectra[h].push_back(row_spectrum(tr.xs[h], j));
            for (std::size_t c = 0; c < keys.size(); ++c) {
                const std::size_t t = keys[c].word(0);
                for (std::size_t h = 0; h < tr.xs.size(); ++h) {
                    std::vector<int> bits(tr.xs[h].rows());
                    for (std::size_t j = 0; j < bits.size(); ++j) bits[j] = spectra[h][j][t] < 0 ? 1 : 0;
                    seq[h] = state_from_rows(static_cast<int>(h + 1), bits);
                }
                res.scores[c] += detail::sequence_loglik(seq, tr.actions, cfg.log_floor, consistent[c]);
            }
        } else {
            for (std::size_t c = 0; c < keys.size(); ++c) {
                for (std::size_t h = 0; h < tr.xs.size(); ++h) seq[h] = decode(keys[c], tr.xs[h]);
                res.scores[c] += detail::sequence_loglik(seq, tr.actions, cfg.log_floor, consistent[c]);
            }
        }
    }
    for (std::size_t c = 1; c < keys.size(); ++c)
        if (res.scores[c] > res.scores[res.best]) res.best = c;
    res.key = keys[res.best];
    res.consistency = transitions ? static_cast<double>(consistent[res.best]) / static_cast<double>(transitions) : 1.0;
    res.low_confidence = res.consistency < cfg.confidence_rate;
    res.episodes_used = cfg.episodes;
    res.psi = {std::make_shared<DecodedPolicy>(res.key, H, 0), std::make_shared<DecodedPolicy>(res.key, H, 1)};
    return res;
}

inline std::vector<F2Vector> all_keys(std::size_t n) {
    if (n > 20) throw std::invalid_argument("all_keys: dimension too large");
    std::vector<F2Vector> out;
    out.reserve(std::size_t{1} << n);
    for (std::uint64_t t = 0; t < (std::uint64_t{1} << n); ++t) out.push_back(F2Vector::from_word(n, t));
    return out;
}

// ------------------------------------------------ policy cover to LPN

// The policy-cover learner: gets episodic access and returns Psi.
using PcLearner = std::function<std::vector<std::shared_ptr<Policy>>(const EpisodeFn&, Rng&)>;

struct PipelineConfig {
    std::size_t H = 2;
    std::size_t N = 256;
    double delta = 0.2;
    TriMode mode = TriMode::desk;
    std::size_t contrast_pairs = 3000;  // D; 2D triangle samples feed the contrastive learner
    ContrastConfig contrast{};
};

struct PipelineResult {
    std::optional<F2Vector> key;         // empty when validation rejects the selected candidate
    F2Vector selected;
    std::vector<F2Vector> candidates;
    std::size_t episodes = 0;
    std::size_t samples_episodes = 0;
    std::size_t samples_contrast = 0;
    std::size_t samples_select = 0;
    std::size_t samples_used = 0;
    double input_bias = 0;
    double select_disagreement = 0;
    std::map<std::string, double> stage_seconds;
};

inline std::size_t pipeline_select_size(double small_bias, std::size_t H, std::size_t n) {
    return static_cast<std::size_t>(std::ceil(9 / (small_bias * small_bias) * std::log(8.0 * static_cast<double>(H + 1) * static_cast<double>(n))));
}

// Learns sk from LPN samples at the triangle input bias: simulate the cover
// learner through TriAlg + DrawTraj, contrast its mixture with the all-zero
// policy, and select among the candidates on held-out samples. The selected
// key is kept only when its disagreement is below 1/2 - bias/2.
inline PipelineResult policy_cover_to_lpn(SampleSource& src, const PcLearner& learner, const PipelineConfig& cfg, Rng& rng) {
    using clock = std::chrono::steady_clock;
    auto seconds = [](clock::time_point a) { return std::chrono::duration<double>(clock::now() - a).count(); };
    PipelineResult res;
    const std::size_t n = src.dimension();
    const TriPlan plan = tri_plan(cfg.H, cfg.N, cfg.delta, cfg.mode);
    res.input_bias = plan.input_bias;
    const std::size_t per_triangle = plan.index.samples();

    auto t0 = clock::now();
    EpisodeFn env = [&](Policy& pi, Rng& r) {
        const TriangleSample w = tri_alg(plan, src, r);
        ++res.episodes;
        return draw_traj(w, pi, r);
    };
    const auto psi = learner(env, rng);
    if (psi.empty()) throw std::runtime_error("policy_cover_to_lpn: learner returned no policies");
    res.samples_episodes = res.episodes * per_triangle;
    res.stage_seconds["cover"] = seconds(t0);

    t0 = clock::now();
    std::vector<TriangleSample> batch;
    batch.reserve(2 * cfg.contrast_pairs);
    for (std::size_t i = 0; i < 2 * cfg.contrast_pairs; ++i) batch.push_back(tri_alg(plan, src, rng));
    res.samples_contrast = batch.size() * per_triangle;
    res.stage_seconds["triangles"] = seconds(t0);

    t0 = clock::now();
    MixturePolicy mix(psi);
    res.candidates = contrastive_learn(batch, mix, static_cast<int>(cfg.H), cfg.delta, rng, cfg.contrast).candidates;
    res.stage_seconds["contrast"] = seconds(t0);

    t0 = clock::now();
    const auto held = src.take(pipeline_select_size(plan.input_bias, cfg.H, n));
    res.samples_select = held.size();
    res.selected = select(held, res.candidates);
    res.select_disagreement = disagreement(held, res.selected);
    if (res.select_disagreement <= 0.5 - plan.input_bias / 2) res.key = res.selected;
    res.stage_seconds["select"] = seconds(t0);

    res.samples_used = res.samples_episodes + res.samples_contrast + res.samples_select;
    return res;
}

}  // namespace lpnrl
