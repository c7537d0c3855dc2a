#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lpnrl/batch_lpn.hpp"
#include "lpnrl/dist.hpp"
#include "lpnrl/f2.hpp"
#include "lpnrl/lpn.hpp"
#include "lpnrl/rng.hpp"

namespace lpnrl {

// ------------------------------------------------------------ latent chain

struct LatentState {
    int h = 1;  // step, 1-based
    int k = 0;  // correct guesses so far, 0 <= k < h
    int b = 0;  // fresh bit of this step

    friend bool operator==(const LatentState&, const LatentState&) = default;
    std::size_t index() const { return static_cast<std::size_t>(2 * k + b); }  // within step h
    static LatentState from_index(int h, std::size_t i) { return {h, static_cast<int>(i / 2), static_cast<int>(i % 2)}; }
};

inline std::size_t states_at(int h) { return static_cast<std::size_t>(2 * h); }

inline LatentState latent_step(const LatentState& s, int a, int H, Rng& rng) {
    if (s.h >= H) throw std::invalid_argument("latent_step: terminal state");
    if (a != 0 && a != 1) throw std::invalid_argument("latent_step: action must be 0 or 1");
    return {s.h + 1, s.k + (s.b == a ? 1 : 0), rng.bit()};
}

// ------------------------------------------------------------ parameters

inline std::size_t desk_encryption_width(std::size_t n, double delta) {
    const double full = 3 * static_cast<double>(n) / std::pow(delta, 4);
    return static_cast<std::size_t>(std::max(std::min(std::ceil(full), 1e4), 64.0));
}

// H = (log n)^{1/3}, floored, never below 2.
inline int desk_horizon(std::size_t n) {
    return std::max(2, static_cast<int>(std::floor(std::cbrt(std::log(static_cast<double>(std::max<std::size_t>(n, 2)))))));
}

struct CounterParams {
    std::size_t n = 8;
    std::size_t N = 64;
    int H = 2;
    double delta = 0.2;
    F2Vector sk;
    bool reward_overlay = false;  // indicator reward at (H, H-1, .)

    void validate() const {
        if (sk.size() != n || n == 0) throw std::invalid_argument("CounterParams: sk length must equal n");
        if (N == 0 || H < 1) throw std::invalid_argument("CounterParams: need N >= 1 and H >= 1");
        if (!(delta > 0 && delta <= 0.5)) throw std::invalid_argument("CounterParams: delta outside (0,1/2]");
    }
    int reward(const LatentState& s) const { return reward_overlay && s.h == H && s.k == H - 1 ? 1 : 0; }
};

// --------------------------------------------------------------- emissions

// h rows; row j holds an LPN pair (row_u[j], row_y[j]) and N encryption pairs
// stored at enc rows j*N .. j*N+N-1.
struct Emission {
    int h = 0;
    std::size_t n = 0;
    std::size_t N = 0;
    F2Matrix row_u;
    std::vector<std::uint8_t> row_y;
    F2Matrix enc_u;
    std::vector<std::uint8_t> enc_y;

    Emission() = default;
    Emission(int h_, std::size_t n_, std::size_t N_)
        : h(h_), n(n_), N(N_), row_u(static_cast<std::size_t>(h_), n_), row_y(static_cast<std::size_t>(h_), 0),
          enc_u(static_cast<std::size_t>(h_) * N_, n_), enc_y(static_cast<std::size_t>(h_) * N_, 0) {}
    std::size_t rows() const { return static_cast<std::size_t>(h); }
};

// Majority of y' - <u', t> over the N encryption pairs of row j, ties to 0.
inline int decode_row(const F2Vector& t, const Emission& Z, std::size_t j) {
    std::size_t ones = 0;
    for (std::size_t i = 0; i < Z.N; ++i) ones += static_cast<std::size_t>(Z.enc_y[j * Z.N + i] ^ Z.enc_u.row_dot(j * Z.N + i, t));
    return 2 * ones > Z.N ? 1 : 0;
}

inline LatentState state_from_rows(int h, const std::vector<int>& bits) {
    LatentState s{h, 0, bits.back()};
    for (int j = 0; j + 1 < h; ++j) s.k += bits[static_cast<std::size_t>(j)];
    return s;
}

inline LatentState decode(const F2Vector& t, const Emission& Z) {
    std::vector<int> bits(Z.rows());
    for (std::size_t j = 0; j < Z.rows(); ++j) bits[j] = decode_row(t, Z, j);
    return state_from_rows(Z.h, bits);
}

// Row-j decoding for every key at once: D(t) = #agree - #disagree via a
// Walsh-Hadamard transform of the signed (u', y') histogram; majority is 1
// iff D(t) < 0.
inline std::vector<std::int64_t> row_spectrum(const Emission& Z, std::size_t j) {
    if (Z.n > 20) throw std::invalid_argument("row_spectrum: dimension too large");
    std::vector<std::int64_t> a(std::size_t{1} << Z.n, 0);
    for (std::size_t i = 0; i < Z.N; ++i) a[Z.enc_u.row_ptr(j * Z.N + i)[0]] += Z.enc_y[j * Z.N + i] ? -1 : 1;
    fwht(a);
    return a;
}

// Sample hidden row bits B ~ nu_{h,k,b}: k ones placed uniformly on rows
// 1..h-1, B_h = b.
inline std::vector<int> sample_nu(const LatentState& s, Rng& rng) {
    std::vector<int> B(static_cast<std::size_t>(s.h), 0);
    std::vector<int> pos(static_cast<std::size_t>(s.h - 1));
    std::iota(pos.begin(), pos.end(), 0);
    for (int i = 0; i < s.k; ++i) {
        const auto r = static_cast<std::size_t>(i) + rng.below(pos.size() - static_cast<std::size_t>(i));
        std::swap(pos[static_cast<std::size_t>(i)], pos[r]);
        B[static_cast<std::size_t>(pos[static_cast<std::size_t>(i)])] = 1;
    }
    B.back() = s.b;
    return B;
}

inline constexpr int kRejectionCap = 1000;

// Unconditioned emission of state s; `row_majority` receives the decoded row
// bits under sk (computed from the noise counts).
inline Emission emit_unconditioned(const CounterParams& p, const LatentState& s, Rng& rng, std::vector<int>* row_majority = nullptr) {
    if (s.h < 1 || s.h > p.H || s.k < 0 || s.k >= s.h || (s.b & ~1)) throw std::invalid_argument("emit: invalid state");
    Emission Z(s.h, p.n, p.N);
    const auto B = sample_nu(s, rng);
    const F2Vector e = sample_cber(static_cast<std::size_t>(s.h), p.delta, rng);
    const double pe = 0.5 - 2 * p.delta * p.delta;
    if (row_majority) row_majority->assign(static_cast<std::size_t>(s.h), 0);
    for (std::size_t j = 0; j < Z.rows(); ++j) {
        Z.row_u.randomize_row(j, rng);
        Z.row_y[j] = static_cast<std::uint8_t>(Z.row_u.row_dot(j, p.sk) ^ e.get(j) ^ B[j]);
        std::size_t ones = 0;
        for (std::size_t i = 0; i < p.N; ++i) {
            const std::size_t r = j * p.N + i;
            Z.enc_u.randomize_row(r, rng);
            const int bit = (rng.bernoulli(pe) ? 1 : 0) ^ B[j];
            ones += static_cast<std::size_t>(bit);
            Z.enc_y[r] = static_cast<std::uint8_t>(Z.enc_u.row_dot(r, p.sk) ^ bit);
        }
        if (row_majority) (*row_majority)[j] = 2 * ones > p.N ? 1 : 0;
    }
    return Z;
}

// Conditioned emission: resample until decode(sk, Z) = s.
inline Emission emit(const CounterParams& p, const LatentState& s, Rng& rng, bool conditioned = true) {
    if (!conditioned) return emit_unconditioned(p, s, rng);
    std::vector<int> bits;
    for (int attempt = 0; attempt < kRejectionCap; ++attempt) {
        Emission Z = emit_unconditioned(p, s, rng, &bits);
        if (state_from_rows(s.h, bits) == s) return Z;
    }
    throw std::runtime_error("emit: rejection cap exceeded; N too small for delta");
}

// ---------------------------------------------------------------- policies

struct EpisodeView {
    std::span<const Emission> xs;
    std::span<const int> actions;
    std::span<const int> rewards;
};

class Policy {
public:
    virtual ~Policy() = default;
    virtual void reset(Rng&) {}
    virtual int act(const EpisodeView& view, Rng& rng) = 0;
};

class UniformPolicy : public Policy {
public:
    int act(const EpisodeView&, Rng& rng) override { return rng.bit(); }
};

class ConstantPolicy : public Policy {
public:
    explicit ConstantPolicy(int a) : a_(a) {}
    int act(const EpisodeView&, Rng&) override { return a_; }

private:
    int a_;
};

// Decodes the current b with `key` and plays it (or its complement). At the
// last step it plays `final_action` when that is 0 or 1.
class DecodedPolicy : public Policy {
public:
    DecodedPolicy(F2Vector key, int H, int final_action = -1, bool mismatch = false)
        : key_(key), H_(H), final_(final_action), mismatch_(mismatch) {}
    int act(const EpisodeView& v, Rng&) override {
        const Emission& x = v.xs.back();
        if (x.h == H_ && final_ >= 0) return final_;
        return decode_row(key_, x, x.rows() - 1) ^ (mismatch_ ? 1 : 0);
    }
    const F2Vector& key() const { return key_; }

private:
    F2Vector key_;
    int H_;
    int final_;
    bool mismatch_;
};

// Picks one component uniformly at the start of each episode.
class MixturePolicy : public Policy {
public:
    explicit MixturePolicy(std::vector<std::shared_ptr<Policy>> parts) : parts_(std::move(parts)) {
        if (parts_.empty()) throw std::invalid_argument("MixturePolicy: empty");
    }
    void reset(Rng& rng) override {
        cur_ = rng.below(parts_.size());
        parts_[cur_]->reset(rng);
    }
    int act(const EpisodeView& v, Rng& rng) override { return parts_[cur_]->act(v, rng); }
    std::size_t current() const { return cur_; }

private:
    std::vector<std::shared_ptr<Policy>> parts_;
    std::size_t cur_ = 0;
};

inline int checked_action(int a) {
    if (a != 0 && a != 1) throw std::invalid_argument("policy returned an invalid action");
    return a;
}

// ------------------------------------------------------------ trajectories

struct Trajectory {
    std::vector<LatentState> states;  // hidden; empty when the simulator has no latent record
    std::vector<Emission> xs;
    std::vector<int> actions;
    std::vector<int> rewards;
};

inline Trajectory episode(const CounterParams& p, Policy& pi, Rng& rng, bool conditioned = true) {
    Trajectory t;
    pi.reset(rng);
    LatentState s{1, 0, rng.bit()};
    for (int h = 1; h <= p.H; ++h) {
        t.states.push_back(s);
        t.xs.push_back(emit(p, s, rng, conditioned));
        t.rewards.push_back(p.reward(s));
        const int a = checked_action(pi.act({t.xs, t.actions, t.rewards}, rng));
        t.actions.push_back(a);
        if (h < p.H) s = latent_step(s, a, p.H, rng);
    }
    return t;
}

// Interactive simulator of the unconditioned-emission MDP from one triangle
// sample. Step h shows rows (h, sigma(j)) shifted by a_{sigma(j)} + 1 for a
// fresh permutation sigma, then the diagonal row (h, h).
class DrawTrajSession {
public:
    DrawTrajSession(TriangleSample sample, Rng rng) : t_(std::move(sample)), rng_(rng) {}

    int step() const { return h_; }
    int horizon() const { return static_cast<int>(t_.index.H); }

    Emission first() {
        if (h_ != 0) throw std::logic_error("DrawTraj: first() called twice");
        h_ = 1;
        return build({});
    }

    Emission next(int action) {
        if (h_ == 0) throw std::logic_error("DrawTraj: call first() before next()");
        if (h_ >= horizon()) throw std::invalid_argument("DrawTraj: more than H actions received");
        actions_.push_back(checked_action(action));
        ++h_;
        std::vector<std::size_t> sigma(static_cast<std::size_t>(h_ - 1));
        std::iota(sigma.begin(), sigma.end(), std::size_t{1});
        std::shuffle(sigma.begin(), sigma.end(), rng_);
        last_sigma_ = sigma;
        return build(sigma);
    }

    const std::vector<std::size_t>& last_permutation() const { return last_sigma_; }

private:
    void copy_row(Emission& Z, std::size_t dst, std::size_t g, int shift) const {
        const std::size_t N = t_.index.N;
        const std::size_t r0 = t_.row(g, 0);
        Z.row_u.set_row(dst, t_.u.row(r0));
        Z.row_y[dst] = static_cast<std::uint8_t>(t_.y[r0] ^ shift);
        const std::size_t wpr = t_.u.words_per_row();
        for (std::size_t c = 1; c <= N; ++c) {
            const std::size_t src = t_.row(g, c), out = dst * N + (c - 1);
            std::copy_n(t_.u.row_ptr(src), wpr, Z.enc_u.row_ptr(out));
            Z.enc_y[out] = static_cast<std::uint8_t>(t_.y[src] ^ shift);
        }
    }

    Emission build(const std::vector<std::size_t>& sigma) {
        const auto h = static_cast<std::size_t>(h_);
        Emission Z(h_, t_.n, t_.index.N);
        for (std::size_t j = 0; j + 1 < h; ++j) {
            const std::size_t src = sigma[j];
            copy_row(Z, j, t_.index.slot(h, src), actions_[src - 1] ^ 1);
        }
        copy_row(Z, h - 1, t_.index.slot(h, h), 0);
        return Z;
    }

    TriangleSample t_;
    Rng rng_;
    int h_ = 0;
    std::vector<int> actions_;
    std::vector<std::size_t> last_sigma_;
};

// One episode from one triangle sample; rewards are zero and latent states
// are not recorded (the simulator never sees sk).
inline Trajectory draw_traj(TriangleSample sample, Policy& pi, Rng& rng) {
    Trajectory t;
    pi.reset(rng);
    DrawTrajSession sess(std::move(sample), rng.child(rng.next()));
    const int H = sess.horizon();
    t.xs.push_back(sess.first());
    for (int h = 1; h <= H; ++h) {
        t.rewards.push_back(0);
        const int a = checked_action(pi.act({t.xs, t.actions, t.rewards}, rng));
        t.actions.push_back(a);
        if (h < H) t.xs.push_back(sess.next(a));
    }
    return t;
}

// --------------------------------------------------------------- visitation

// Probability of action 1 in a latent state.
using LatentPolicy = std::function<double(const LatentState&)>;

// d[h-1][s.index()] = Pr[s_h = s].
using Visitation = std::vector<std::vector<double>>;

inline Visitation visitation(int H, const LatentPolicy& pi) {
    Visitation d(static_cast<std::size_t>(H));
    d[0] = {0.5, 0.5};
    for (int h = 1; h < H; ++h) {
        auto& next = d[static_cast<std::size_t>(h)];
        next.assign(states_at(h + 1), 0.0);
        const auto& cur = d[static_cast<std::size_t>(h - 1)];
        for (std::size_t i = 0; i < cur.size(); ++i) {
            if (cur[i] == 0) continue;
            const LatentState s = LatentState::from_index(h, i);
            const double p1 = pi(s);
            for (int a = 0; a < 2; ++a) {
                const double pa = a ? p1 : 1 - p1;
                const int k2 = s.k + (s.b == a ? 1 : 0);
                for (int b2 = 0; b2 < 2; ++b2) next[static_cast<std::size_t>(2 * k2 + b2)] += cur[i] * pa * 0.5;
            }
        }
    }
    return d;
}

inline Visitation visitation_open_loop(const std::vector<int>& actions) {
    const int H = static_cast<int>(actions.size());
    return visitation(H, [&](const LatentState& s) { return static_cast<double>(actions[static_cast<std::size_t>(s.h - 1)]); });
}

// max over all policies of Pr[s_h = target], by backward induction.
inline double max_reach_probability(const LatentState& target) {
    std::vector<double> v(states_at(target.h), 0.0);
    v[target.index()] = 1;
    for (int h = target.h - 1; h >= 1; --h) {
        std::vector<double> u(states_at(h), 0.0);
        for (std::size_t i = 0; i < u.size(); ++i) {
            const LatentState s = LatentState::from_index(h, i);
            for (int a = 0; a < 2; ++a) {
                const int k2 = s.k + (s.b == a ? 1 : 0);
                u[i] = std::max(u[i], 0.5 * (v[static_cast<std::size_t>(2 * k2)] + v[static_cast<std::size_t>(2 * k2 + 1)]));
            }
        }
        v = std::move(u);
    }
    return 0.5 * (v[0] + v[1]);
}

inline Visitation max_visitation(int H) {
    Visitation m(static_cast<std::size_t>(H));
    for (int h = 1; h <= H; ++h) {
        auto& row = m[static_cast<std::size_t>(h - 1)];
        row.resize(states_at(h));
        for (std::size_t i = 0; i < row.size(); ++i) row[i] = max_reach_probability(LatentState::from_index(h, i));
    }
    return m;
}

struct CoverMargin {
    LatentState s;
    double margin;
};

struct CoverReport {
    bool pass = true;
    std::vector<CoverMargin> margins;
};

// avg_{pi in Psi} d^pi_h(s) >= alpha (max_pi' d^pi'_h(s) - gamma) on every
// listed state (all states of every step when `states` is empty).
inline CoverReport policy_cover_check(const std::vector<Visitation>& psi, const Visitation& best, double alpha, double gamma,
                                      std::vector<LatentState> states = {}) {
    if (states.empty())
        for (std::size_t h = 0; h < best.size(); ++h)
            for (std::size_t i = 0; i < best[h].size(); ++i) states.push_back(LatentState::from_index(static_cast<int>(h + 1), i));
    CoverReport r;
    for (const auto& s : states) {
        const auto h = static_cast<std::size_t>(s.h - 1);
        double avg = 0;
        for (const auto& d : psi) avg += d[h][s.index()];
        if (!psi.empty()) avg /= static_cast<double>(psi.size());
        const double margin = avg - alpha * (best[h][s.index()] - gamma);
        r.margins.push_back({s, margin});
        if (margin < -1e-12) r.pass = false;
    }
    return r;
}

// ------------------------------------------------------ horizon-two toy

struct ToyParams {
    std::size_t n = 8;
    std::size_t N = 64;
    double delta = 0.2;
    F2Vector sk;
};

// (u, <u,sk> + s + e, Enc(s)) with e ~ Ber(1/2 - delta) and Enc(s) made of N
// pairs (u', <u',sk> + e' + s), e' ~ Ber(1/2 - 2 delta^2).
struct ToyEmission {
    LpnSample head;
    F2Matrix enc_u;
    std::vector<std::uint8_t> enc_y;
};

inline ToyEmission toy_emit(const ToyParams& p, int s, Rng& rng) {
    ToyEmission x{{F2Vector::random(p.n, rng), 0}, F2Matrix(p.N, p.n), std::vector<std::uint8_t>(p.N)};
    x.head.y = dot(x.head.u, p.sk) ^ s ^ sample_noise(p.delta, rng);
    const double pe = 0.5 - 2 * p.delta * p.delta;
    for (std::size_t i = 0; i < p.N; ++i) {
        x.enc_u.randomize_row(i, rng);
        x.enc_y[i] = static_cast<std::uint8_t>(x.enc_u.row_dot(i, p.sk) ^ s ^ (rng.bernoulli(pe) ? 1 : 0));
    }
    return x;
}

inline int toy_decode(const F2Vector& t, const ToyEmission& x) {
    std::size_t ones = 0;
    for (std::size_t i = 0; i < x.enc_y.size(); ++i) ones += static_cast<std::size_t>(x.enc_y[i] ^ x.enc_u.row_dot(i, t));
    return 2 * ones > x.enc_y.size() ? 1 : 0;
}

struct ToyTrajectory {
    int s1 = 0, s2 = 0;
    ToyEmission x1, x2;
    int a1 = 0;
};

// Latent s1 uniform, s2 = s1 + a1.
inline ToyTrajectory toy_episode(const ToyParams& p, const std::function<int(const ToyEmission&, Rng&)>& pi, Rng& rng) {
    ToyTrajectory t;
    t.s1 = rng.bit();
    t.x1 = toy_emit(p, t.s1, rng);
    t.a1 = checked_action(pi(t.x1, rng));
    t.s2 = t.s1 ^ t.a1;
    t.x2 = toy_emit(p, t.s2, rng);
    return t;
}

// Folds the label into the LPN part: (u, <u,sk> + s + e + y).
inline std::vector<LpnSample> toy_supervised_to_lpn(const std::vector<std::pair<ToyEmission, int>>& data) {
    std::vector<LpnSample> out;
    out.reserve(data.size());
    for (const auto& [x, y] : data) out.push_back({x.head.u, x.head.y ^ y});
    return out;
}

// One LPN sample (u, b) at bias 2 delta^2 becomes the pair (u', b'),
// (u + u', b + b') with u', b' fresh and uniform.
inline std::pair<LpnSample, LpnSample> toy_lpn_to_selfsupervised(const LpnSample& s, Rng& rng) {
    LpnSample first{F2Vector::random(s.u.size(), rng), rng.bit()};
    LpnSample second{first.u ^ s.u, first.y ^ s.y};
    return {first, second};
}

}  // namespace lpnrl
