#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "lpnrl/dist.hpp"
#include "lpnrl/f2.hpp"
#include "lpnrl/rng.hpp"

namespace lpnrl {

struct LpnSample {
    F2Vector u;
    int y = 0;
};

// delta is the signed bias: the noise bit is Ber(1/2 - delta).
struct LpnInstance {
    std::size_t n = 0;
    F2Vector sk;
    double delta = 0;

    LpnInstance() = default;
    LpnInstance(F2Vector secret, double bias) : n(secret.size()), sk(secret), delta(bias) {
        if (!(bias >= -0.5 && bias <= 0.5)) throw std::invalid_argument("LpnInstance: bias outside [-1/2,1/2]");
    }
};

struct SolverBudget {
    std::size_t samples = 0;
    std::size_t time = 0;
    double eta = 0.1;

    void validate() const {
        if (samples == 0 || time == 0 || !(eta > 0 && eta < 1)) throw std::invalid_argument("SolverBudget: invalid");
    }
};

inline LpnSample lpn_sample(const LpnInstance& inst, Rng& rng) {
    LpnSample s{F2Vector::random(inst.n, rng), 0};
    s.y = dot(s.u, inst.sk) ^ sample_noise(inst.delta, rng);
    return s;
}

inline std::vector<LpnSample> lpn_samples(const LpnInstance& inst, std::size_t count, Rng& rng) {
    std::vector<LpnSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(lpn_sample(inst, rng));
    return out;
}

inline std::size_t check_dimension(std::span<const LpnSample> samples) {
    if (samples.empty()) return 0;
    const std::size_t n = samples[0].u.size();
    for (const auto& s : samples)
        if (s.u.size() != n) throw std::invalid_argument("LPN samples: dimension mismatch");
    return n;
}

// Pull-based sample stream that counts consumption.
class SampleSource {
public:
    virtual ~SampleSource() = default;
    virtual std::optional<LpnSample> try_next() = 0;
    virtual std::size_t dimension() const = 0;
    std::size_t consumed() const { return consumed_; }

    LpnSample next() {
        auto s = try_next();
        if (!s) throw std::runtime_error("sample stream exhausted");
        return *s;
    }
    std::vector<LpnSample> take(std::size_t count) {
        std::vector<LpnSample> out;
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) out.push_back(next());
        return out;
    }

protected:
    std::size_t consumed_ = 0;
};

class LpnStream : public SampleSource {
public:
    LpnStream(LpnInstance inst, Rng rng, std::optional<std::size_t> limit = std::nullopt)
        : inst_(std::move(inst)), rng_(rng), limit_(limit) {}
    std::optional<LpnSample> try_next() override {
        if (limit_ && consumed_ >= *limit_) return std::nullopt;
        ++consumed_;
        return lpn_sample(inst_, rng_);
    }
    std::size_t dimension() const override { return inst_.n; }
    const LpnInstance& instance() const { return inst_; }

private:
    LpnInstance inst_;
    Rng rng_;
    std::optional<std::size_t> limit_;
};

class VectorSource : public SampleSource {
public:
    explicit VectorSource(std::vector<LpnSample> samples) : s_(std::move(samples)) { check_dimension(s_); }
    std::optional<LpnSample> try_next() override {
        if (consumed_ >= s_.size()) return std::nullopt;
        return s_[consumed_++];
    }
    std::size_t dimension() const override { return s_.empty() ? 0 : s_[0].u.size(); }

private:
    std::vector<LpnSample> s_;
};

// ---------------------------------------------------------------- brute force

inline constexpr double kBruteConstant = 64.0;
inline constexpr std::size_t kMaxBruteDim = 24;

inline std::size_t brute_sample_bound(std::size_t n, double delta, double eta, double c = kBruteConstant) {
    return static_cast<std::size_t>(std::ceil(c * static_cast<double>(n) * std::log(1 / eta) / (delta * delta)));
}

// In-place Walsh-Hadamard transform over 2^n entries.
inline void fwht(std::vector<std::int64_t>& a) {
    for (std::size_t len = 1; len < a.size(); len <<= 1)
        for (std::size_t i = 0; i < a.size(); i += len << 1)
            for (std::size_t j = i; j < i + len; ++j) {
                const std::int64_t x = a[j], y = a[j + len];
                a[j] = x + y;
                a[j + len] = x - y;
            }
}

// corr[t] = #{y = <u,t>} - #{y != <u,t>} for every t in F2^n.
inline std::vector<std::int64_t> agreement_spectrum(std::span<const LpnSample> samples, std::size_t n) {
    if (n > kMaxBruteDim) throw std::invalid_argument("agreement_spectrum: dimension too large for enumeration");
    std::vector<std::int64_t> a(std::size_t{1} << n, 0);
    for (const auto& s : samples) a[s.u.word(0)] += s.y ? -1 : 1;
    fwht(a);
    return a;
}

// Returns argmax_t |agreement - 1/2|. Ties prefer the candidate whose
// agreement sits on the side of sign(delta), then the lowest index.
inline F2Vector brute_solve(std::span<const LpnSample> samples, double delta, double /*eta*/) {
    const std::size_t n = check_dimension(samples);
    if (samples.empty()) throw std::invalid_argument("brute_solve: no samples");
    const auto corr = agreement_spectrum(samples, n);
    const std::int64_t sgn = delta < 0 ? -1 : 1;
    std::size_t best = 0;
    for (std::size_t t = 1; t < corr.size(); ++t) {
        const auto a = std::llabs(corr[t]), b = std::llabs(corr[best]);
        if (a > b || (a == b && sgn * corr[t] > sgn * corr[best])) best = t;
    }
    return F2Vector::from_word(n, best);
}

// ------------------------------------------------------------------- select

inline std::size_t select_sample_bound(double delta, std::size_t hypotheses, double eta) {
    return static_cast<std::size_t>(std::ceil(9 / (delta * delta) * std::log(2 * static_cast<double>(hypotheses) / eta)));
}

// Empirical disagreement rate of hypothesis t.
inline double disagreement(std::span<const LpnSample> samples, const F2Vector& t) {
    std::size_t bad = 0;
    for (const auto& s : samples) bad += static_cast<std::size_t>(s.y != dot(s.u, t));
    return samples.empty() ? 0.5 : static_cast<double>(bad) / static_cast<double>(samples.size());
}

// argmax over hypotheses of |E^t - 1/2|; first in order wins ties.
inline F2Vector select(std::span<const LpnSample> samples, const std::vector<F2Vector>& hypotheses) {
    if (hypotheses.empty()) throw std::invalid_argument("select: empty hypothesis set");
    check_dimension(samples);
    std::size_t best = 0;
    double best_score = -1;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        const double score = std::abs(disagreement(samples, hypotheses[i]) - 0.5);
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return hypotheses[best];
}

// ---------------------------------------------------------- unknown noise

using SolverFn = std::function<F2Vector(std::span<const LpnSample>, double delta, double eta)>;
using SampleBoundFn = std::function<std::size_t(std::size_t n, double delta, double eta)>;

struct BaseSolver {
    SolverFn solve;
    SampleBoundFn sample_bound;
    // When true the output does not depend on the delta argument, so the grid
    // sweep reuses one call per block and label orientation.
    bool ignores_delta = false;
};

inline BaseSolver brute_base(double c = kBruteConstant) {
    return BaseSolver{brute_solve, [c](std::size_t n, double d, double e) { return brute_sample_bound(n, d, e, c); }, true};
}

struct UnknownNoisePlan {
    std::size_t block = 0;   // samples per base-solver block
    std::size_t blocks = 0;  // number of independent blocks
    std::size_t grid = 0;    // bias grid points in [delta_lb, 1/2]
    std::size_t select = 0;  // held-out samples for select

    std::size_t total() const { return block * blocks + select; }
};

// The lemma's budget: m = S(n, delta, 1/2), grid of 2m points, 4 log(2/eta)
// blocks, and 9 delta^-2 log(32 m log(2/eta) / eta) select samples.
inline UnknownNoisePlan unknown_noise_plan(std::size_t n, double delta_lb, double eta, const SampleBoundFn& base_bound) {
    UnknownNoisePlan p;
    p.block = std::max<std::size_t>(1, base_bound(n, delta_lb, 0.5));
    const double l = std::log(2 / eta);
    p.blocks = static_cast<std::size_t>(std::ceil(4 * l));
    p.grid = 2 * p.block;
    p.select = static_cast<std::size_t>(
        std::ceil(9 / (delta_lb * delta_lb) * std::log(32 * static_cast<double>(p.block) * l / eta)));
    return p;
}

// Splits a fixed budget: `blocks` equal blocks take (1 - select_fraction) of it.
inline UnknownNoisePlan split_unknown_noise_plan(std::size_t total, std::size_t blocks, std::size_t grid, double select_fraction) {
    UnknownNoisePlan p;
    p.blocks = std::max<std::size_t>(1, blocks);
    p.grid = std::max<std::size_t>(1, grid);
    p.select = static_cast<std::size_t>(static_cast<double>(total) * select_fraction);
    p.block = (total - p.select) / p.blocks;
    p.select = total - p.block * p.blocks;
    if (p.block == 0 || p.select == 0) throw std::invalid_argument("split_unknown_noise_plan: budget too small");
    return p;
}

inline std::vector<double> bias_grid(double delta_lb, std::size_t points) {
    std::vector<double> g;
    if (points <= 1) return {delta_lb};
    for (std::size_t i = 0; i < points; ++i)
        g.push_back(delta_lb + (0.5 - delta_lb) * static_cast<double>(i) / static_cast<double>(points - 1));
    return g;
}

// Candidate pool of the unknown-noise wrapper before selection.
inline std::vector<F2Vector> unknown_noise_candidates(std::span<const LpnSample> samples, double delta_lb,
                                                      const BaseSolver& base, const UnknownNoisePlan& plan) {
    const auto grid = bias_grid(delta_lb, plan.grid);
    std::vector<F2Vector> pool;
    auto add = [&](const F2Vector& c) {
        if (std::find(pool.begin(), pool.end(), c) == pool.end()) pool.push_back(c);
    };
    std::vector<LpnSample> flipped;
    for (std::size_t j = 0; j < plan.blocks; ++j) {
        auto blk = samples.subspan(j * plan.block, plan.block);
        flipped.assign(blk.begin(), blk.end());
        for (auto& s : flipped) s.y ^= 1;
        const std::size_t sweeps = base.ignores_delta ? 1 : grid.size();
        for (std::size_t g = 0; g < sweeps; ++g) {
            add(base.solve(blk, grid[g], 0.5));
            add(base.solve(flipped, grid[g], 0.5));
        }
    }
    return pool;
}

inline F2Vector solve_unknown_noise(std::span<const LpnSample> samples, double delta_lb, double eta, const BaseSolver& base,
                                    const UnknownNoisePlan& plan) {
    if (!(delta_lb > 0 && delta_lb <= 0.5)) throw std::invalid_argument("solve_unknown_noise: delta_lb outside (0,1/2]");
    if (!(eta > 0 && eta < 1)) throw std::invalid_argument("solve_unknown_noise: eta outside (0,1)");
    check_dimension(samples);
    if (samples.size() < plan.total()) throw std::invalid_argument("solve_unknown_noise: insufficient samples");
    const auto pool = unknown_noise_candidates(samples, delta_lb, base, plan);
    return select(samples.subspan(plan.block * plan.blocks, plan.select), pool);
}

inline F2Vector solve_unknown_noise(std::span<const LpnSample> samples, double delta_lb, double eta, const BaseSolver& base) {
    const std::size_t n = check_dimension(samples);
    return solve_unknown_noise(samples, delta_lb, eta, base, unknown_noise_plan(n, delta_lb, eta, base.sample_bound));
}

// ---------------------------------------------------------------------- BKW

// Bias left after XOR-ing 2^(a-1) samples of bias delta.
inline double bkw_reduced_bias(double delta, std::size_t a) {
    double b = delta;
    for (std::size_t i = 1; i < a; ++i) b = convolve_bias(b, b);
    return b;
}

// Textbook BKW. Coordinates split into `a` blocks; for each target block the
// other blocks are cancelled by colliding against stored representatives, and
// samples reduced to a unit vector vote on that secret bit (ties to 0).
// `delta` only sizes the vote target; a stream that ends after every bit has
// at least one vote still yields a candidate.
inline F2Vector bkw_solve(SampleSource& stream, std::size_t a, double eta, double delta = 0.25) {
    const std::size_t n = stream.dimension();
    if (a == 0 || n == 0) throw std::invalid_argument("bkw_solve: need n >= 1 and a >= 1");
    a = std::min(a, n);
    const std::size_t b = (n + a - 1) / a;  // last block padded
    if (b > 20) throw std::invalid_argument("bkw_solve: block width too large");
    const double red = std::max(1e-6, std::abs(bkw_reduced_bias(delta, a)));
    const auto target_votes = static_cast<std::size_t>(std::ceil(std::log(static_cast<double>(n) / eta) / (2 * red * red)));

    auto block_bits = [&](const F2Vector& u, std::size_t blk) {
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < b; ++i) {
            const std::size_t c = blk * b + i;
            if (c < n) v |= static_cast<std::uint64_t>(u.get(c)) << i;
        }
        return v;
    };

    F2Vector guess(n);
    for (std::size_t target = 0; target < a; ++target) {
        const std::size_t width = std::min(b, n - target * b);
        std::vector<std::vector<std::optional<LpnSample>>> tables(a, std::vector<std::optional<LpnSample>>(std::size_t{1} << b));
        std::vector<std::int64_t> votes(width, 0);
        std::vector<std::size_t> nvotes(width, 0);
        auto done = [&] {
            return std::all_of(nvotes.begin(), nvotes.end(), [&](std::size_t v) { return v >= target_votes; });
        };
        while (!done()) {
            auto s = stream.try_next();
            if (!s) break;
            LpnSample cur = *s;
            bool stored = false;
            for (std::size_t blk = 0; blk < a && !stored; ++blk) {
                if (blk == target) continue;
                const std::uint64_t key = block_bits(cur.u, blk);
                if (key == 0) continue;
                auto& slot = tables[blk][key];
                if (!slot) {
                    slot = cur;
                    stored = true;
                } else {
                    cur.u ^= slot->u;
                    cur.y ^= slot->y;
                }
            }
            if (stored) continue;
            const std::uint64_t rest = block_bits(cur.u, target);
            if (std::popcount(rest) != 1) continue;
            const auto i = static_cast<std::size_t>(std::countr_zero(rest));
            votes[i] += cur.y ? 1 : -1;
            ++nvotes[i];
        }
        for (std::size_t i = 0; i < width; ++i) {
            if (nvotes[i] == 0) throw std::runtime_error("bkw_solve: stream exhausted before a full reduction round");
            guess.set(target * b + i, votes[i] > 0 ? 1 : 0);
        }
    }
    return guess;
}

}  // namespace lpnrl
