#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lpnrl/rng.hpp"

namespace lpnrl {

// Latent chain with three states per step plus an unreachable sink. State (h, c) has
// index 3(h-1)+c and the sink has index 3H. Pair (s, i) is identified with s*N + i in [X].
struct OracleLbParams {
    int H = 4;
    std::uint64_t N = 16;
    int log_x = 0;  // X = 2^log_x

    OracleLbParams() = default;
    OracleLbParams(int horizon, std::uint64_t n) : H(horizon), N(n) {
        if (H < 1) throw std::invalid_argument("OracleLbParams: H must be >= 1");
        if (N < 1) throw std::invalid_argument("OracleLbParams: N must be >= 1");
        // ceil(log2 N^5) computed exactly on integers
        int bits = 0;
        const long double n5 = std::pow(static_cast<long double>(N), 5.0L);
        while (std::ldexp(1.0L, bits) < n5) ++bits;
        log_x = std::max(bits, 2);
        if (log_x > 62) throw std::invalid_argument("OracleLbParams: X too large");
        if (static_cast<std::uint64_t>(num_states()) * N > X())
            throw std::invalid_argument("OracleLbParams: |S|*N exceeds X");
    }

    std::uint64_t X() const { return std::uint64_t{1} << log_x; }
    int num_states() const { return 3 * H + 1; }
    int sink() const { return 3 * H; }
    std::uint64_t table_size() const { return static_cast<std::uint64_t>(num_states()) * N; }

    int state(int h, int c) const {
        if (h < 1 || h > H || c < 0 || c > 2) throw std::invalid_argument("OracleLbParams::state: malformed state");
        return 3 * (h - 1) + c;
    }
    int step_of(int s) const { return s == sink() ? 0 : s / 3 + 1; }
    int slot_of(int s) const { return s == sink() ? -1 : s % 3; }
};

// Open-loop visitation of (h, c) for any fixed action sequence.
inline double q_formula(int h, int c) {
    if (h < 1 || c < 0 || c > 2) throw std::invalid_argument("q_formula: malformed state");
    if (c == 2) return 1.0 - std::ldexp(1.0, 1 - h);
    return std::ldexp(1.0, -h);
}

// Exact visitation d[h-1][c] under a fixed action sequence (length >= H-1).
inline std::vector<std::array<double, 3>> open_loop_visitation(int H, std::span<const int> actions) {
    if (H < 1) throw std::invalid_argument("open_loop_visitation: H must be >= 1");
    if (static_cast<int>(actions.size()) < H - 1) throw std::invalid_argument("open_loop_visitation: too few actions");
    std::vector<std::array<double, 3>> d(static_cast<std::size_t>(H));
    d[0] = {0.5, 0.5, 0.0};
    for (int h = 1; h < H; ++h) {
        const auto& cur = d[static_cast<std::size_t>(h - 1)];
        auto& nxt = d[static_cast<std::size_t>(h)];
        const int a = actions[static_cast<std::size_t>(h - 1)];
        if (a != 0 && a != 1) throw std::invalid_argument("open_loop_visitation: action must be 0 or 1");
        nxt = {0.0, 0.0, cur[2]};
        const double stay = cur[static_cast<std::size_t>(a)];
        nxt[0] += stay / 2;
        nxt[1] += stay / 2;
        nxt[2] += cur[static_cast<std::size_t>(1 - a)];
    }
    return d;
}

// Latent step from state index s under action a. Returns the next state index.
inline int olb_step(const OracleLbParams& p, int s, int a, Rng& rng) {
    const int h = p.step_of(s);
    const int c = p.slot_of(s);
    if (h < 1 || h >= p.H) throw std::invalid_argument("olb_step: no successor");
    if (c == 2 || c != a) return p.state(h + 1, 2);
    return p.state(h + 1, rng.bit());
}

inline int olb_initial(const OracleLbParams& p, Rng& rng) { return p.state(1, rng.bit()); }

inline double olb_reward(const OracleLbParams& p, int s) {
    return p.step_of(s) == p.H && p.slot_of(s) != 2 ? 1.0 : 0.0;
}

// 4-round balanced Feistel network on an even number of bits.
class Feistel {
public:
    Feistel(std::uint64_t key, int bits) : bits_(bits) {
        if (bits < 2 || bits % 2 != 0 || bits > 62) throw std::invalid_argument("Feistel: bit length must be even in [2, 62]");
        half_ = bits / 2;
        mask_ = (std::uint64_t{1} << half_) - 1;
        std::uint64_t sm = key;
        for (auto& k : round_keys_) k = splitmix64(sm);
    }

    int bits() const { return bits_; }

    std::uint64_t forward(std::uint64_t x) const {
        std::uint64_t l = (x >> half_) & mask_;
        std::uint64_t r = x & mask_;
        for (int i = 0; i < kRounds; ++i) {
            const std::uint64_t t = l ^ round(i, r);
            l = r;
            r = t;
        }
        return (l << half_) | r;
    }

    std::uint64_t inverse(std::uint64_t y) const {
        std::uint64_t l = (y >> half_) & mask_;
        std::uint64_t r = y & mask_;
        for (int i = kRounds - 1; i >= 0; --i) {
            const std::uint64_t t = r ^ round(i, l);
            r = l;
            l = t;
        }
        return (l << half_) | r;
    }

private:
    static constexpr int kRounds = 4;

    std::uint64_t round(int i, std::uint64_t v) const {
        return mix64(v ^ round_keys_[static_cast<std::size_t>(i)]) & mask_;
    }

    int bits_;
    int half_ = 0;
    std::uint64_t mask_ = 0;
    std::array<std::uint64_t, kRounds> round_keys_{};
};

inline std::uint64_t feistel_prp(std::uint64_t key, int bits, std::uint64_t x) { return Feistel(key, bits).forward(x); }
inline std::uint64_t feistel_prp_inv(std::uint64_t key, int bits, std::uint64_t y) { return Feistel(key, bits).inverse(y); }

// Keyed permutation of [2^bits] for any bits >= 1. Odd widths cycle-walk a one-bit-wider network.
class KeyedPermutation {
public:
    KeyedPermutation(std::uint64_t key, int bits)
        : bits_(bits), net_(key, bits % 2 == 0 ? bits : bits + 1) {
        if (bits < 1) throw std::invalid_argument("KeyedPermutation: bits must be >= 1");
    }

    std::uint64_t size() const { return std::uint64_t{1} << bits_; }

    std::uint64_t forward(std::uint64_t x) const {
        if (x >= size()) throw std::out_of_range("KeyedPermutation: input out of range");
        do x = net_.forward(x);
        while (x >= size());
        return x;
    }

    std::uint64_t inverse(std::uint64_t y) const {
        if (y >= size()) throw std::out_of_range("KeyedPermutation: input out of range");
        do y = net_.inverse(y);
        while (y >= size());
        return y;
    }

private:
    int bits_;
    Feistel net_;
};

// Query access to the emission table x(s, i). Backed by a lazily memoized uniform table
// or by a keyed permutation of [X]. Not thread-safe; one owner per experiment.
class IndexOracle {
public:
    enum class Backing { random, prp };

    static IndexOracle random(const OracleLbParams& p, std::uint64_t seed) {
        return IndexOracle(p, Backing::random, seed);
    }
    static IndexOracle prp(const OracleLbParams& p, std::uint64_t key) { return IndexOracle(p, Backing::prp, key); }

    const OracleLbParams& params() const { return p_; }
    Backing backing() const { return backing_; }

    std::uint64_t query(int s, std::uint64_t i) {
        check(s, i);
        ++queries_;
        return value(index_of(s, i));
    }

    // Overwrites a random-backed entry; used to stage collisions.
    void force(int s, std::uint64_t i, std::uint64_t x) {
        if (backing_ != Backing::random) throw std::logic_error("IndexOracle::force: only for random backing");
        check(s, i);
        if (x >= p_.X()) throw std::out_of_range("IndexOracle::force: value outside [X]");
        memo_[index_of(s, i)] = x;
        reverse_.reset();
    }

    // State of the lexicographically first (s, i) with x(s, i) = x, else the sink.
    int decode(std::uint64_t x) {
        if (x >= p_.X()) return p_.sink();
        if (backing_ == Backing::prp) {
            const std::uint64_t j = perm_->inverse(x);
            return j < p_.table_size() ? static_cast<int>(j / p_.N) : p_.sink();
        }
        if (!reverse_) {
            reverse_ = std::make_unique<std::unordered_map<std::uint64_t, std::uint64_t>>();
            for (std::uint64_t j = 0; j < p_.table_size(); ++j) reverse_->emplace(value(j), j);  // emplace keeps the first
        }
        const auto it = reverse_->find(x);
        return it == reverse_->end() ? p_.sink() : static_cast<int>(it->second / p_.N);
    }

    // True when two table entries share a value. Materializes the full table for random backing.
    bool has_collision() {
        if (backing_ == Backing::prp) return false;
        std::unordered_map<std::uint64_t, int> seen;
        for (std::uint64_t j = 0; j < p_.table_size(); ++j)
            if (!seen.emplace(value(j), 0).second) return true;
        return false;
    }

    std::uint64_t queries() const { return queries_; }

private:
    IndexOracle(const OracleLbParams& p, Backing b, std::uint64_t seed) : p_(p), backing_(b), seed_(seed) {
        if (b == Backing::prp) perm_ = std::make_unique<KeyedPermutation>(seed, p.log_x);
    }

    void check(int s, std::uint64_t i) const {
        if (s < 0 || s >= p_.num_states() || i >= p_.N) throw std::out_of_range("IndexOracle: (s, i) out of range");
    }
    std::uint64_t index_of(int s, std::uint64_t i) const { return static_cast<std::uint64_t>(s) * p_.N + i; }

    std::uint64_t value(std::uint64_t j) {
        if (backing_ == Backing::prp) return perm_->forward(j);
        auto it = memo_.find(j);
        if (it != memo_.end()) return it->second;
        // each entry is an independent uniform draw keyed by its index, so query order is irrelevant
        Rng r = Rng(seed_).child(j);
        const std::uint64_t x = r.below(p_.X());
        memo_.emplace(j, x);
        return x;
    }

    OracleLbParams p_;
    Backing backing_;
    std::uint64_t seed_;
    std::unique_ptr<KeyedPermutation> perm_;
    std::unordered_map<std::uint64_t, std::uint64_t> memo_;
    std::unique_ptr<std::unordered_map<std::uint64_t, std::uint64_t>> reverse_;
    std::uint64_t queries_ = 0;
};

// Entries of the table revealed to the simulated reduction.
class AccessLog {
public:
    void record(int s, std::uint64_t i, std::uint64_t x) { revealed_.emplace(key(s, i), x); }
    std::optional<std::uint64_t> lookup(int s, std::uint64_t i) const {
        const auto it = revealed_.find(key(s, i));
        if (it == revealed_.end()) return std::nullopt;
        return it->second;
    }
    std::size_t size() const { return revealed_.size(); }

private:
    static std::uint64_t key(int s, std::uint64_t i) { return (static_cast<std::uint64_t>(s) << 40) ^ i; }
    std::unordered_map<std::uint64_t, std::uint64_t> revealed_;
};

struct OlbTrajectory {
    std::vector<int> states;
    std::vector<std::uint64_t> xs;
    std::vector<int> actions;
    std::vector<double> rewards;
};

// General policy: action from the observation and action prefixes (xs has one more entry).
using OlbPolicy = std::function<int(std::span<const std::uint64_t> xs, std::span<const int> actions, Rng& rng)>;

// Label of a full trajectory, as a probability of label 1.
using OlbLabel = std::function<double(const OlbTrajectory& t)>;

inline OlbPolicy olb_open_loop(std::vector<int> actions) {
    return [actions = std::move(actions)](std::span<const std::uint64_t>, std::span<const int> prefix, Rng&) {
        return actions.at(prefix.size());
    };
}

inline OlbPolicy olb_uniform() {
    return [](std::span<const std::uint64_t>, std::span<const int>, Rng& rng) { return rng.bit(); };
}

inline OlbTrajectory simulate_sampling(const OlbPolicy& pi, IndexOracle& oracle, AccessLog& log, Rng& rng) {
    const auto& p = oracle.params();
    OlbTrajectory t;
    t.states.reserve(static_cast<std::size_t>(p.H));
    t.xs.reserve(static_cast<std::size_t>(p.H));
    t.actions.reserve(static_cast<std::size_t>(p.H));
    t.rewards.reserve(static_cast<std::size_t>(p.H));
    int s = olb_initial(p, rng);
    for (int h = 1; h <= p.H; ++h) {
        const std::uint64_t i = rng.below(p.N);
        const std::uint64_t x = oracle.query(s, i);
        log.record(s, i, x);
        t.states.push_back(s);
        t.xs.push_back(x);
        const int a = pi(t.xs, t.actions, rng);
        if (a != 0 && a != 1) throw std::invalid_argument("simulate_sampling: action must be 0 or 1");
        t.actions.push_back(a);
        t.rewards.push_back(olb_reward(p, s));
        if (h < p.H) s = olb_step(p, s, a, rng);
    }
    return t;
}

inline std::size_t regression_sample_size(double eps, double delta_fail, double c0) {
    if (!(eps > 0) || !(delta_fail > 0 && delta_fail < 1)) throw std::invalid_argument("regression_sample_size: bad eps or delta");
    return static_cast<std::size_t>(std::ceil(c0 * std::log(1.0 / delta_fail) / (eps * eps)));
}

// Constant predictor equal to the empirical label mean.
inline double simulate_regression(const OlbPolicy& pi, const OlbLabel& label, IndexOracle& oracle, AccessLog& log,
                                  double eps, double delta_fail, Rng& rng, double c0 = 16.0) {
    const std::size_t m = regression_sample_size(eps, delta_fail, c0);
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) sum += label(simulate_sampling(pi, oracle, log, rng));
    return sum / static_cast<double>(m);
}

struct QueryBudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RegressionCall {
    OlbPolicy policy;
    OlbLabel label;
    int h = 1;
    double mu = 0.0;
};

// Oracle interface handed to a candidate reduction. Every call counts against the budget.
class ReductionContext {
public:
    ReductionContext(IndexOracle& oracle, AccessLog& log, Rng& rng, std::size_t budget, double eps, double delta_fail,
                     double c0)
        : oracle_(oracle), log_(log), rng_(rng), budget_(budget), eps_(eps), delta_(delta_fail), c0_(c0) {}

    const OracleLbParams& params() const { return oracle_.params(); }

    OlbTrajectory sample(const OlbPolicy& pi) {
        charge();
        return simulate_sampling(pi, oracle_, log_, rng_);
    }

    double regress(const OlbPolicy& pi, const OlbLabel& label, int h) {
        if (h < 1 || h > params().H) throw std::invalid_argument("ReductionContext::regress: h out of range");
        charge();
        const double mu = simulate_regression(pi, label, oracle_, log_, eps_, delta_, rng_, c0_);
        calls_.push_back({pi, label, h, mu});
        return mu;
    }

    // Test-only window onto the hidden decoder.
    IndexOracle& hidden_oracle() { return oracle_; }

    Rng& rng() { return rng_; }
    std::size_t calls_made() const { return used_; }
    const std::vector<RegressionCall>& regression_calls() const { return calls_; }

private:
    void charge() {
        if (used_ >= budget_) throw QueryBudgetExceeded("reduction exceeded its oracle-call budget");
        ++used_;
    }

    IndexOracle& oracle_;
    AccessLog& log_;
    Rng& rng_;
    std::size_t budget_;
    double eps_;
    double delta_;
    double c0_;
    std::size_t used_ = 0;
    std::vector<RegressionCall> calls_;
};

struct Reduction {
    std::string name;
    std::function<OlbPolicy(ReductionContext&)> run;
};

// Returns a uniformly random policy without touching the oracles.
inline Reduction trivial_reduction() {
    return {"trivial", [](ReductionContext&) { return olb_uniform(); }};
}

// Reads the hidden decoder and plays the surviving action at every step.
inline Reduction cheat_reduction() {
    return {"cheat", [](ReductionContext& ctx) -> OlbPolicy {
                IndexOracle* oracle = &ctx.hidden_oracle();
                return [oracle](std::span<const std::uint64_t> xs, std::span<const int>, Rng&) {
                    const int s = oracle->decode(xs.back());
                    const int c = oracle->params().slot_of(s);
                    return c == 1 ? 1 : 0;
                };
            }};
}

// Estimate of E|G(s_h) - mu| where G(s) = E[label | s_h = s], from two independent batches of m episodes.
inline double conditional_discrepancy(const OlbPolicy& pi, const OlbLabel& label, int h, double mu,
                                      IndexOracle& oracle, AccessLog& log, std::size_t m, Rng& rng) {
    const auto& p = oracle.params();
    const auto ns = static_cast<std::size_t>(p.num_states());
    std::vector<double> sum(ns, 0.0);
    std::vector<double> count(ns, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        const auto t = simulate_sampling(pi, oracle, log, rng);
        const auto s = static_cast<std::size_t>(t.states[static_cast<std::size_t>(h - 1)]);
        sum[s] += label(t);
        count[s] += 1.0;
    }
    std::vector<double> g(ns, 0.0);
    for (std::size_t s = 0; s < ns; ++s)
        if (count[s] > 0) g[s] = sum[s] / count[s];
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const auto t = simulate_sampling(pi, oracle, log, rng);
        total += std::abs(g[static_cast<std::size_t>(t.states[static_cast<std::size_t>(h - 1)])] - mu);
    }
    return total / static_cast<double>(m);
}

struct TestReductionConfig {
    double c0 = 16.0;
    double c1 = 16.0;
};

struct TestReductionResult {
    int bit = 0;
    std::string tripped;  // "", "discrepancy" or "value"
    std::size_t m = 0;
    std::size_t oracle_calls = 0;
    std::vector<double> discrepancies;
    double value = 0.0;
    std::size_t revealed = 0;
};

inline std::size_t test_reduction_sample_size(int H, std::size_t T, double eps, double c1) {
    if (!(eps > 0)) throw std::invalid_argument("test_reduction_sample_size: eps must be positive");
    return static_cast<std::size_t>(
        std::ceil(c1 * std::log(72.0 * static_cast<double>(T)) * H * H / (eps * eps)));
}

// Runs the candidate against simulated oracles with T-1 calls allowed, then audits every returned
// constant and the output policy's value. Throws QueryBudgetExceeded instead of returning a verdict.
inline TestReductionResult test_reduction(const Reduction& reduction, IndexOracle& oracle, std::size_t T, double eps,
                                          Rng& rng, const TestReductionConfig& cfg = {}) {
    if (T < 1) throw std::invalid_argument("test_reduction: T must be >= 1");
    const auto& p = oracle.params();
    AccessLog log;
    ReductionContext ctx(oracle, log, rng, T - 1, eps, 1.0 / (16.0 * static_cast<double>(T)), cfg.c0);
    const OlbPolicy out = reduction.run(ctx);

    TestReductionResult res;
    res.m = test_reduction_sample_size(p.H, T, eps, cfg.c1);
    res.oracle_calls = ctx.calls_made();
    // calls the reduction never made have label 0 and constant 0, so their discrepancy is 0
    for (const auto& call : ctx.regression_calls()) {
        const double d = conditional_discrepancy(call.policy, call.label, call.h, call.mu, oracle, log, res.m, rng);
        res.discrepancies.push_back(d);
        if (d > 3.0 * eps / 4.0 && res.bit == 0) {
            res.bit = 1;
            res.tripped = "discrepancy";
        }
    }
    double total = 0.0;
    for (std::size_t j = 0; j < res.m; ++j) {
        const auto t = simulate_sampling(out, oracle, log, rng);
        for (double r : t.rewards) total += r;
    }
    res.value = total / static_cast<double>(res.m);
    if (res.bit == 0 && res.value >= 3.0 / 8.0) {
        res.bit = 1;
        res.tripped = "value";
    }
    res.revealed = log.size();
    return res;
}

}  // namespace lpnrl
