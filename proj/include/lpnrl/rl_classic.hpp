#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lpnrl/block_mdp.hpp"
#include "lpnrl/dist.hpp"
#include "lpnrl/rng.hpp"

namespace lpnrl {

// Layered block MDP with a hidden decoder. States at step h are 0..sizes[h-1]-1.
template <class Obs>
struct BlockMdpModel {
    int H = 1;
    int A = 2;
    std::vector<int> sizes;
    std::vector<double> init;                                                  // over step-1 states
    std::function<std::vector<double>(int h, int s, int a)> transition;        // over step-(h+1) states
    std::function<double(int h, int s, int a)> reward;                         // mean of a Bernoulli reward
    std::function<Obs(int h, int s, Rng&)> emit;
    std::function<int(int h, const Obs&)> decode;                              // hidden; test oracles only

    int size(int h) const { return sizes.at(static_cast<std::size_t>(h - 1)); }
};

template <class Obs>
using ObsPredictor = std::function<double(const Obs&)>;

// Probability of each action in a latent state.
using StatePolicy = std::function<std::vector<double>(int h, int s)>;

// V*_h(s) for h = 1..H+1 (V_{H+1} = 0).
template <class Obs>
std::vector<std::vector<double>> optimal_values(const BlockMdpModel<Obs>& m) {
    std::vector<std::vector<double>> V(static_cast<std::size_t>(m.H + 1));
    V[static_cast<std::size_t>(m.H)] = {};
    for (int h = m.H; h >= 1; --h) {
        auto& v = V[static_cast<std::size_t>(h - 1)];
        v.assign(static_cast<std::size_t>(m.size(h)), 0.0);
        for (int s = 0; s < m.size(h); ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < m.A; ++a) {
                double q = m.reward(h, s, a);
                if (h < m.H) {
                    const auto p = m.transition(h, s, a);
                    for (std::size_t t = 0; t < p.size(); ++t) q += p[t] * V[static_cast<std::size_t>(h)][t];
                }
                best = std::max(best, q);
            }
            v[static_cast<std::size_t>(s)] = best;
        }
    }
    return V;
}

template <class Obs>
double optimal_value(const BlockMdpModel<Obs>& m) {
    const auto V = optimal_values(m);
    double v = 0;
    for (std::size_t s = 0; s < m.init.size(); ++s) v += m.init[s] * V[0][s];
    return v;
}

// Value of a latent-state policy, by forward propagation.
template <class Obs>
double policy_value(const BlockMdpModel<Obs>& m, const StatePolicy& pi) {
    std::vector<double> d = m.init;
    double value = 0;
    for (int h = 1; h <= m.H; ++h) {
        std::vector<double> next(h < m.H ? static_cast<std::size_t>(m.size(h + 1)) : 0, 0.0);
        for (int s = 0; s < m.size(h); ++s) {
            const double w = d[static_cast<std::size_t>(s)];
            if (w == 0) continue;
            const auto probs = pi(h, s);
            for (int a = 0; a < m.A; ++a) {
                const double pa = probs[static_cast<std::size_t>(a)];
                if (pa == 0) continue;
                value += w * pa * m.reward(h, s, a);
                if (h < m.H) {
                    const auto p = m.transition(h, s, a);
                    for (std::size_t t = 0; t < p.size(); ++t) next[t] += w * pa * p[t];
                }
            }
        }
        d = std::move(next);
    }
    return value;
}

// Turns an emission policy into a latent one by polling it on `reps` fresh
// emissions per state; exact when the policy factors through the decoder.
template <class Obs>
StatePolicy latent_policy(const BlockMdpModel<Obs>& m, const std::function<int(int h, const Obs&)>& pi, int reps, Rng& rng) {
    std::vector<std::vector<std::vector<double>>> table(static_cast<std::size_t>(m.H));
    for (int h = 1; h <= m.H; ++h) {
        auto& t = table[static_cast<std::size_t>(h - 1)];
        t.assign(static_cast<std::size_t>(m.size(h)), std::vector<double>(static_cast<std::size_t>(m.A), 0.0));
        for (int s = 0; s < m.size(h); ++s)
            for (int r = 0; r < reps; ++r) t[static_cast<std::size_t>(s)][static_cast<std::size_t>(pi(h, m.emit(h, s, rng)))] += 1.0 / reps;
    }
    return [table](int h, int s) { return table[static_cast<std::size_t>(h - 1)][static_cast<std::size_t>(s)]; };
}

// max over policies of Pr[s_h = target].
template <class Obs>
double max_reach(const BlockMdpModel<Obs>& m, int h, int target) {
    std::vector<double> v(static_cast<std::size_t>(m.size(h)), 0.0);
    v[static_cast<std::size_t>(target)] = 1;
    for (int g = h - 1; g >= 1; --g) {
        std::vector<double> u(static_cast<std::size_t>(m.size(g)), 0.0);
        for (int s = 0; s < m.size(g); ++s)
            for (int a = 0; a < m.A; ++a) {
                const auto p = m.transition(g, s, a);
                double q = 0;
                for (std::size_t t = 0; t < p.size(); ++t) q += p[t] * v[t];
                u[static_cast<std::size_t>(s)] = std::max(u[static_cast<std::size_t>(s)], q);
            }
        v = std::move(u);
    }
    double out = 0;
    for (std::size_t s = 0; s < m.init.size(); ++s) out += m.init[s] * v[s];
    return out;
}

// Smallest kappa with max_pi d_h(s) <= kappa mu_h(s) everywhere (infinite if
// a reachable state has no mass).
template <class Obs>
double coverage_constant(const BlockMdpModel<Obs>& m, const std::vector<std::vector<double>>& mu) {
    double kappa = 1;
    for (int h = 1; h <= m.H; ++h)
        for (int s = 0; s < m.size(h); ++s) {
            const double reach = max_reach(m, h, s);
            if (reach <= 0) continue;
            const double w = mu[static_cast<std::size_t>(h - 1)][static_cast<std::size_t>(s)];
            kappa = std::max(kappa, w > 0 ? reach / w : std::numeric_limits<double>::infinity());
        }
    return kappa;
}

// ----------------------------------------------------------------- FQI

// Label of a partial trajectory (x, r, x'); a value in [0,1] read as a
// Bernoulli mean. x' is default-constructed at the last step.
template <class Obs>
using LabelFn = std::function<double(const Obs& x, int r, const Obs& xn)>;

template <class Obs>
using FdOracle = std::function<ObsPredictor<Obs>(const LabelFn<Obs>& label, int h, int a)>;

template <class Obs>
struct FqiResult {
    int H = 0, A = 0;
    std::vector<std::vector<ObsPredictor<Obs>>> q;  // q[h-1][a], values in [0, H]
    std::size_t queries = 0;

    double value(int h, const Obs& x, int a) const { return q[static_cast<std::size_t>(h - 1)][static_cast<std::size_t>(a)](x); }
    int act(int h, const Obs& x) const {
        int best = 0;
        double bv = value(h, x, 0);
        for (int a = 1; a < A; ++a) {
            const double v = value(h, x, a);
            if (v > bv) best = a, bv = v;
        }
        return best;
    }
};

template <class Obs>
FqiResult<Obs> fqi(const FdOracle<Obs>& oracle, int H, int A) {
    FqiResult<Obs> res;
    res.H = H;
    res.A = A;
    res.q.resize(static_cast<std::size_t>(H));
    for (int h = H; h >= 1; --h) {
        for (int a = 0; a < A; ++a) {
            LabelFn<Obs> label = [&res, h, H, A](const Obs&, int r, const Obs& xn) {
                double best = 0;
                if (h < H) {
                    best = res.value(h + 1, xn, 0);
                    for (int b = 1; b < A; ++b) best = std::max(best, res.value(h + 1, xn, b));
                }
                return (r + best) / H;
            };
            const ObsPredictor<Obs> R = oracle(label, h, a);
            ++res.queries;
            res.q[static_cast<std::size_t>(h - 1)].push_back([R, H](const Obs& x) { return H * std::clamp(R(x), 0.0, 1.0); });
        }
    }
    return res;
}

// Test oracle from the hidden decoder: f(s) is computed exactly over rewards
// and next states, with one representative emission per state standing in
// for the emission law (exact when the label factors through the decoder).
// Predictions are f(decode(x)) shifted by +-sqrt(eps), alternating in s, so
// the squared error under any mu is at most eps.
template <class Obs>
FdOracle<Obs> decoder_fd_oracle(const BlockMdpModel<Obs>& m, double eps, Rng& rng) {
    std::vector<std::vector<Obs>> rep(static_cast<std::size_t>(m.H));
    for (int h = 1; h <= m.H; ++h)
        for (int s = 0; s < m.size(h); ++s) rep[static_cast<std::size_t>(h - 1)].push_back(m.emit(h, s, rng));
    const double shift = std::sqrt(eps);
    return [m, rep, shift](const LabelFn<Obs>& label, int h, int a) {
        std::vector<double> f(static_cast<std::size_t>(m.size(h)));
        for (int s = 0; s < m.size(h); ++s) {
            const Obs& x = rep[static_cast<std::size_t>(h - 1)][static_cast<std::size_t>(s)];
            const double pr = m.reward(h, s, a);
            double v = 0;
            for (int r = 0; r < 2; ++r) {
                const double wr = r ? pr : 1 - pr;
                if (wr == 0) continue;
                if (h == m.H) {
                    v += wr * label(x, r, Obs{});
                    continue;
                }
                const auto p = m.transition(h, s, a);
                for (std::size_t t = 0; t < p.size(); ++t)
                    if (p[t] > 0) v += wr * p[t] * label(x, r, rep[static_cast<std::size_t>(h)][t]);
            }
            f[static_cast<std::size_t>(s)] = std::clamp(v + ((s % 2) ? -shift : shift), 0.0, 1.0);
        }
        auto dec = m.decode;
        return ObsPredictor<Obs>([f, dec, h](const Obs& x) {
            const int s = dec(h, x);
            return s >= 0 && static_cast<std::size_t>(s) < f.size() ? f[static_cast<std::size_t>(s)] : 0.5;
        });
    };
}

template <class Obs>
FdOracle<Obs> constant_fd_oracle(double c) {
    return [c](const LabelFn<Obs>&, int, int) { return ObsPredictor<Obs>([c](const Obs&) { return c; }); };
}

// ------------------------------------------------------ horizon one

// One regression query per action (reward labels); plays the argmax,
// lowest action on ties.
template <class Obs>
std::function<int(const Obs&)> bandit_from_regression(const std::function<ObsPredictor<Obs>(int a)>& oracle, int A) {
    std::vector<ObsPredictor<Obs>> R;
    for (int a = 0; a < A; ++a) R.push_back(oracle(a));
    return [R](const Obs& x) {
        int best = 0;
        double bv = R[0](x);
        for (std::size_t a = 1; a < R.size(); ++a) {
            const double v = R[a](x);
            if (v > bv) best = static_cast<int>(a), bv = v;
        }
        return best;
    };
}

// Horizon-one bandit episodes replayed from regression data: the context is
// x, action i means the guess i / A, and the reward is Ber(1 - (i/A - y)^2).
template <class Obs>
class RegressionBanditEnv {
public:
    RegressionBanditEnv(std::span<const std::pair<Obs, int>> data, int A) : data_(data), A_(A) {
        if (A < 1) throw std::invalid_argument("RegressionBanditEnv: need at least one action");
    }
    int actions() const { return A_; }
    std::size_t used() const { return next_; }
    std::size_t remaining() const { return data_.size() - next_; }
    double grid(int a) const { return static_cast<double>(a) / A_; }

    const Obs& context() {
        if (next_ >= data_.size()) throw std::runtime_error("regression_from_bandit: data exhausted");
        cur_ = next_++;
        return data_[cur_].first;
    }
    int reward(int a, Rng& rng) const {
        const double d = grid(a) - data_[cur_].second;
        return rng.bernoulli(1 - d * d) ? 1 : 0;
    }
    // Label of the current context; only cheating test solvers read it.
    int hidden_label() const { return data_[cur_].second; }

private:
    std::span<const std::pair<Obs, int>> data_;
    int A_;
    std::size_t next_ = 0, cur_ = 0;
};

template <class Obs>
using BanditSolver = std::function<std::function<int(const Obs&)>(RegressionBanditEnv<Obs>&, Rng&)>;

template <class Obs>
ObsPredictor<Obs> regression_from_bandit(const BanditSolver<Obs>& solver, std::span<const std::pair<Obs, int>> data, int A, Rng& rng) {
    RegressionBanditEnv<Obs> env(data, A);
    auto pi = solver(env, rng);
    return [pi, A](const Obs& x) { return static_cast<double>(pi(x)) / A; };
}

// Ignores the context: pulls every arm `pulls` times and keeps the best mean.
template <class Obs>
BanditSolver<Obs> context_free_bandit_solver(std::size_t pulls) {
    return [pulls](RegressionBanditEnv<Obs>& env, Rng& rng) {
        std::vector<double> mean(static_cast<std::size_t>(env.actions()), 0.0);
        for (int a = 0; a < env.actions(); ++a) {
            for (std::size_t i = 0; i < pulls; ++i) {
                env.context();
                mean[static_cast<std::size_t>(a)] += env.reward(a, rng);
            }
        }
        const int best = static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin());
        return std::function<int(const Obs&)>([best](const Obs&) { return best; });
    };
}

// ----------------------------------------------------------------- PPE

template <class Obs>
struct PpeAccess {
    // Emissions x_1..x_H of one episode under an open-loop action sequence.
    std::function<std::vector<Obs>(const std::vector<int>& actions, Rng&)> sample;
    // Regressor at step h for the label "the episode followed a1" under the
    // policy that picks a0 or a1 with a fair coin.
    std::function<ObsPredictor<Obs>(const std::vector<int>& a0, const std::vector<int>& a1, int h, Rng&)> regress;
};

struct PpeResult {
    std::vector<std::vector<std::vector<int>>> psi;  // psi[h-1]: action prefixes of length h-1
    std::size_t queries = 0;
    std::size_t samples_per_test = 0;
};

inline std::size_t ppe_test_size(int H, int A, int S, double delta_fail) {
    return static_cast<std::size_t>(std::ceil(128 * std::log(2.0 * H * A * A * static_cast<double>(S) * S / delta_fail)));
}

// Forward elimination: a prefix is dropped when some lexicographically earlier
// prefix cannot be told apart from it at step h (empirical risk above 1/8).
template <class Obs>
PpeResult ppe(double delta_fail, const PpeAccess<Obs>& access, int H, int A, int S, Rng& rng, int default_action = 0) {
    if (!(delta_fail > 0 && delta_fail < 1)) throw std::invalid_argument("ppe: failure probability outside (0,1)");
    PpeResult res;
    res.samples_per_test = ppe_test_size(H, A, S, delta_fail);
    res.psi.push_back({{}});
    auto pad = [&](std::vector<int> a) {
        a.resize(static_cast<std::size_t>(H), default_action);
        return a;
    };
    for (int h = 2; h <= H; ++h) {
        std::vector<std::vector<int>> ext;
        for (const auto& p : res.psi.back())
            for (int a = 0; a < A; ++a) {
                auto q = p;
                q.push_back(a);
                ext.push_back(q);
            }
        std::sort(ext.begin(), ext.end());
        std::vector<std::vector<int>> keep;
        for (std::size_t i = 0; i < ext.size(); ++i) {
            bool redundant = false;
            for (std::size_t j = 0; j < i; ++j) {
                const auto a0 = pad(ext[i]), a1 = pad(ext[j]);
                const auto R = access.regress(a0, a1, h, rng);
                ++res.queries;
                double risk = 0;
                for (std::size_t t = 0; t < res.samples_per_test; ++t) {
                    const int y = rng.bit();
                    const auto xs = access.sample(y ? a1 : a0, rng);
                    const double e = R(xs[static_cast<std::size_t>(h - 1)]) - y;
                    risk += e * e;
                }
                if (risk / static_cast<double>(res.samples_per_test) > 0.125) redundant = true;
            }
            if (!redundant) keep.push_back(ext[i]);
        }
        res.psi.push_back(std::move(keep));
    }
    return res;
}

// Open-loop episodes straight from a model.
template <class Obs>
std::vector<Obs> model_rollout(const BlockMdpModel<Obs>& m, const std::vector<int>& actions, Rng& rng, std::vector<int>* states = nullptr) {
    std::vector<Obs> xs;
    int s = static_cast<int>(DiscreteDist(m.init).sample(rng));
    for (int h = 1; h <= m.H; ++h) {
        if (states) states->push_back(s);
        xs.push_back(m.emit(h, s, rng));
        if (h < m.H) s = static_cast<int>(DiscreteDist(m.transition(h, s, actions[static_cast<std::size_t>(h - 1)])).sample(rng));
    }
    return xs;
}

// Monte Carlo regression oracle with the hidden decoder: estimates the label
// mean per decoded state from `episodes` mixture rollouts.
template <class Obs>
PpeAccess<Obs> decoder_ppe_access(const BlockMdpModel<Obs>& m, std::size_t episodes) {
    PpeAccess<Obs> acc;
    acc.sample = [m](const std::vector<int>& a, Rng& rng) { return model_rollout(m, a, rng); };
    acc.regress = [m, episodes](const std::vector<int>& a0, const std::vector<int>& a1, int h, Rng& rng) {
        std::vector<double> sum(static_cast<std::size_t>(m.size(h)), 0.0), cnt(sum.size(), 0.0);
        for (std::size_t e = 0; e < episodes; ++e) {
            const int b = rng.bit();
            const auto xs = model_rollout(m, b ? a1 : a0, rng);
            const int s = m.decode(h, xs[static_cast<std::size_t>(h - 1)]);
            sum[static_cast<std::size_t>(s)] += b;
            cnt[static_cast<std::size_t>(s)] += 1;
        }
        std::vector<double> f(sum.size());
        for (std::size_t s = 0; s < f.size(); ++s) f[s] = cnt[s] > 0 ? sum[s] / cnt[s] : 0.5;
        auto dec = m.decode;
        return ObsPredictor<Obs>([f, dec, h](const Obs& x) { return f[static_cast<std::size_t>(dec(h, x))]; });
    };
    return acc;
}

// -------------------------------------------------- test families

// Invertible 64-bit mixer; emissions hide (noise, state) behind a keyed mix.
inline std::uint64_t mix_forward(std::uint64_t x) {
    x ^= x >> 31;
    x *= 0x9e3779b97f4a7c15ULL;
    x ^= x >> 29;
    return x;
}

inline std::uint64_t unshift_right(std::uint64_t y, int s) {
    std::uint64_t x = y;
    for (int i = 0; i < 64 / s + 1; ++i) x = y ^ (x >> s);
    return x;
}

inline std::uint64_t mix_inverse(std::uint64_t x) {
    constexpr std::uint64_t c = 0x9e3779b97f4a7c15ULL;
    std::uint64_t inv = c;  // Newton iteration for the inverse mod 2^64
    for (int i = 0; i < 6; ++i) inv *= 2 - c * inv;
    x = unshift_right(x, 29);
    x *= inv;
    return unshift_right(x, 31);
}

inline std::uint64_t keyed_emission(std::uint64_t key, int s, Rng& rng) {
    return mix_forward(((rng.next() << 16) | static_cast<std::uint64_t>(s)) ^ key);
}

inline int keyed_decode(std::uint64_t key, std::uint64_t x) { return static_cast<int>((mix_inverse(x) ^ key) & 0xFFFF); }

// Deterministic dynamics: states at step h are nodes 0..next(h)-1 and
// transitions are given by `step`.
inline BlockMdpModel<std::uint64_t> deterministic_model(int H, int A, std::vector<int> sizes, std::function<int(int h, int s, int a)> step,
                                                        std::uint64_t key) {
    BlockMdpModel<std::uint64_t> m;
    m.H = H;
    m.A = A;
    m.sizes = std::move(sizes);
    m.init.assign(static_cast<std::size_t>(m.sizes[0]), 0.0);
    m.init[0] = 1;
    auto sz = m.sizes;
    m.transition = [step, sz](int h, int s, int a) {
        std::vector<double> p(static_cast<std::size_t>(sz[static_cast<std::size_t>(h)]), 0.0);
        p[static_cast<std::size_t>(step(h, s, a))] = 1;
        return p;
    };
    m.reward = [](int, int, int) { return 0.0; };
    m.emit = [key](int, int s, Rng& rng) { return keyed_emission(key, s, rng); };
    m.decode = [key](int, std::uint64_t x) { return keyed_decode(key, x); };
    return m;
}

// Binary tree: the state at step h is the action path so far.
inline BlockMdpModel<std::uint64_t> binary_tree_model(int H, std::uint64_t key) {
    if (H < 1 || H > 15) throw std::invalid_argument("binary_tree_model: depth outside [1,15]");
    std::vector<int> sizes;
    for (int h = 1; h <= H; ++h) sizes.push_back(1 << (h - 1));
    return deterministic_model(H, 2, sizes, [](int, int s, int a) { return 2 * s + a; }, key);
}

// Counter chain: the state counts the 1-actions so far, so prefixes merge.
inline BlockMdpModel<std::uint64_t> counter_chain_model(int H, std::uint64_t key) {
    std::vector<int> sizes;
    for (int h = 1; h <= H; ++h) sizes.push_back(h);
    return deterministic_model(H, 2, sizes, [](int, int s, int a) { return s + a; }, key);
}

// One state per step.
inline BlockMdpModel<std::uint64_t> single_chain_model(int H, std::uint64_t key) {
    return deterministic_model(H, 2, std::vector<int>(static_cast<std::size_t>(H), 1), [](int, int, int) { return 0; }, key);
}

// The counter MDP as a tabular model over state index 2k + b.
inline BlockMdpModel<Emission> counter_model(const CounterParams& p, bool conditioned = true) {
    p.validate();
    BlockMdpModel<Emission> m;
    m.H = p.H;
    m.A = 2;
    for (int h = 1; h <= p.H; ++h) m.sizes.push_back(static_cast<int>(states_at(h)));
    m.init = {0.5, 0.5};
    m.transition = [](int h, int s, int a) {
        const LatentState st = LatentState::from_index(h, static_cast<std::size_t>(s));
        std::vector<double> q(states_at(h + 1), 0.0);
        const int k2 = st.k + (st.b == a ? 1 : 0);
        q[static_cast<std::size_t>(2 * k2)] = q[static_cast<std::size_t>(2 * k2 + 1)] = 0.5;
        return q;
    };
    m.reward = [p](int h, int s, int) { return static_cast<double>(p.reward(LatentState::from_index(h, static_cast<std::size_t>(s)))); };
    m.emit = [p, conditioned](int h, int s, Rng& rng) { return emit(p, LatentState::from_index(h, static_cast<std::size_t>(s)), rng, conditioned); };
    const F2Vector sk = p.sk;
    m.decode = [sk](int, const Emission& z) { return static_cast<int>(decode(sk, z).index()); };
    return m;
}

}  // namespace lpnrl
