#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lpnrl/dist.hpp"
#include "lpnrl/f2.hpp"
#include "lpnrl/lpn.hpp"
#include "lpnrl/rng.hpp"

namespace lpnrl {

// Distributions over affine functions F0 + <F, z> on F2^k are indexed by
// f = F0 | (F << 1).
inline int affine_eval(std::size_t f, std::size_t z) { return parity((f & 1U) ^ ((f >> 1) & z)); }

inline void fwht_real(std::vector<double>& a) {
    for (std::size_t len = 1; len < a.size(); len <<= 1)
        for (std::size_t i = 0; i < a.size(); i += len << 1)
            for (std::size_t j = i; j < i + len; ++j) {
                const double x = a[j], y = a[j + len];
                a[j] = x + y;
                a[j + len] = x - y;
            }
}

inline std::size_t log2_exact(std::size_t m, const char* what) {
    if (m == 0 || (m & (m - 1))) throw std::invalid_argument(what);
    return static_cast<std::size_t>(std::countr_zero(m));
}

// ----------------------------------------------------------- linearization

inline double linearization_band(std::size_t k) { return std::ldexp(1.0, -static_cast<int>(k + 3)); }

// Pr_{F ~ mu}[F0 + <F, z> = 1] for every z.
inline std::vector<double> affine_pushforward(const DiscreteDist& mu, std::size_t k) {
    std::vector<double> q(std::size_t{1} << k, 0.0);
    for (std::size_t f = 0; f < mu.size(); ++f)
        for (std::size_t z = 0; z < q.size(); ++z)
            if (affine_eval(f, z)) q[z] += mu[f];
    return q;
}

// The explicit construction: start from Ber(q(0)) x Ber(1/2)^k, then correct
// the entries (0, z) for z != 0 by B^{-1}(q_Z - 1/2) and the zero entry by the
// negated total, where B is the inner-product matrix on nonzero vectors.
// B^2 = 2^{k-2}(J + I) gives B^{-1} v = 2^{2-k}(B v - (2^{k-1} 1^T v / 2^k) 1).
inline DiscreteDist linearize_conditional(const std::vector<double>& q) {
    const std::size_t k = log2_exact(q.size(), "linearize_conditional: table size must be a power of two");
    const double band = linearization_band(k);
    for (double x : q)
        if (!(std::abs(x - 0.5) <= band)) throw std::invalid_argument("linearize_conditional: q outside the admissible band");
    const std::size_t m = q.size();
    std::vector<double> mu(2 * m);
    for (std::size_t f = 0; f < 2 * m; ++f) mu[f] = ((f & 1U) ? q[0] : 1 - q[0]) / static_cast<double>(m);
    double vsum = 0;
    for (std::size_t w = 1; w < m; ++w) vsum += q[w] - 0.5;
    const double scale = std::ldexp(1.0, 2 - static_cast<int>(k));
    double csum = 0;
    for (std::size_t z = 1; z < m; ++z) {
        double bv = 0;
        for (std::size_t w = 1; w < m; ++w)
            if (parity(z & w)) bv += q[w] - 0.5;
        const double c = scale * (bv - vsum / 2);
        mu[z << 1] += c;
        csum += c;
    }
    mu[0] -= csum;
    return DiscreteDist(std::move(mu));
}

// Fourier coefficients of z -> 1 - 2 q(z), normalized so that
// 1 - 2q(z) = sum_S c(S) (-1)^{<S,z>}.
inline std::vector<double> sign_spectrum(const std::vector<double>& q) {
    std::vector<double> c(q.size());
    for (std::size_t z = 0; z < q.size(); ++z) c[z] = 1 - 2 * q[z];
    fwht_real(c);
    for (double& x : c) x /= static_cast<double>(q.size());
    return c;
}

inline double sign_spectrum_l1(const std::vector<double>& q) {
    double s = 0;
    for (double x : sign_spectrum(q)) s += std::abs(x);
    return s;
}

// Exact linearization whenever one exists at all: q is the pushforward of a
// distribution over affine functions iff the Fourier L1 norm of 1 - 2q is at
// most 1. Positive coefficients go to F0 = 0, negative ones to F0 = 1, and the
// slack is spread uniformly.
inline DiscreteDist linearize_conditional_l1(const std::vector<double>& q) {
    log2_exact(q.size(), "linearize_conditional_l1: table size must be a power of two");
    for (double x : q)
        if (!(x >= 0 && x <= 1)) throw std::invalid_argument("linearize_conditional_l1: q outside [0,1]");
    const auto c = sign_spectrum(q);
    double l1 = 0;
    for (double x : c) l1 += std::abs(x);
    if (l1 > 1 + 1e-12) throw std::invalid_argument("linearize_conditional_l1: Fourier L1 norm exceeds 1");
    const double slack = std::max(0.0, 1 - l1) / static_cast<double>(2 * q.size());
    std::vector<double> mu(2 * q.size());
    for (std::size_t s = 0; s < q.size(); ++s) {
        mu[s << 1] = std::max(c[s], 0.0) + slack;
        mu[(s << 1) | 1U] = std::max(-c[s], 0.0) + slack;
    }
    return DiscreteDist(std::move(mu));
}

enum class Linearizer { paper, l1 };

inline DiscreteDist linearize(const std::vector<double>& q, Linearizer how) {
    return how == Linearizer::paper ? linearize_conditional(q) : linearize_conditional_l1(q);
}

// ------------------------------------------------------- Santha-Vazirani

// Pr[X_i = 1 | X_{<i} = prefix] for every prefix in F2^i; unreachable
// prefixes get 1/2.
inline std::vector<double> sequential_conditional(const DiscreteDist& p, std::size_t i) {
    const std::size_t m = std::size_t{1} << i;
    std::vector<double> mass(m, 0.0), ones(m, 0.0);
    for (std::size_t x = 0; x < p.size(); ++x) {
        const std::size_t pre = x & (m - 1);
        mass[pre] += p[x];
        if ((x >> i) & 1U) ones[pre] += p[x];
    }
    std::vector<double> c(m, 0.5);
    for (std::size_t pre = 0; pre < m; ++pre)
        if (mass[pre] > 0) c[pre] = ones[pre] / mass[pre];
    return c;
}

inline double max_sequential_bias(const DiscreteDist& p) {
    const std::size_t k = log2_exact(p.size(), "SV source: support must be F2^k");
    double worst = 0;
    for (std::size_t i = 0; i < k; ++i)
        for (double c : sequential_conditional(p, i)) worst = std::max(worst, std::abs(c - 0.5));
    return worst;
}

// Largest |Pr[X_i = 1 | X_{-i}] - 1/2| over coordinates and reachable contexts.
inline double max_full_conditional_bias(const DiscreteDist& p) {
    const std::size_t k = log2_exact(p.size(), "max_full_conditional_bias: support must be F2^k");
    double worst = 0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t x = 0; x < p.size(); ++x) {
            if ((x >> i) & 1U) continue;
            const double p0 = p[x], p1 = p[x | (std::size_t{1} << i)];
            if (p0 + p1 > 0) worst = std::max(worst, std::abs(p1 / (p0 + p1) - 0.5));
        }
    return worst;
}

class SvSource {
public:
    // Certifies the exact maximal sequential conditional bias.
    explicit SvSource(DiscreteDist dist)
        : k_(log2_exact(dist.size(), "SvSource: support must be F2^k")), dist_(std::move(dist)), cert_(max_sequential_bias(dist_)) {}
    // Rejects sources that violate the band at `delta`.
    SvSource(DiscreteDist dist, double delta) : SvSource(std::move(dist)) {
        if (cert_ > delta + 1e-12) throw std::invalid_argument("SvSource: conditional bias exceeds the certified band");
    }

    std::size_t k() const { return k_; }
    const DiscreteDist& dist() const { return dist_; }
    double delta_cert() const { return cert_; }
    std::vector<double> conditional(std::size_t i) const { return sequential_conditional(dist_, i); }

private:
    std::size_t k_;
    DiscreteDist dist_;
    double cert_;
};

// ---------------------------------------------------------------- EntLPN

struct EntLpnPlan {
    std::size_t k = 0;
    double input_bias = 0;              // bias of the k input samples
    double first_noise = 0.5;           // Pr[extra noise bit = 1] at step 1
    std::vector<DiscreteDist> shifts;   // shifts[i-1]: law of F^{(i)} over F2^{i+1}, i >= 1
};

// p^{(i)}(z) = 1/2 - (1/2 - Pr[Z_i = 1 | Z_{<i} = z]) / (2 * input_bias).
inline std::vector<double> scaled_conditional(const SvSource& src, std::size_t i, double input_bias) {
    auto c = src.conditional(i);
    for (double& x : c) x = 0.5 - (0.5 - x) / (2 * input_bias);
    return c;
}

inline EntLpnPlan build_ent_plan(const SvSource& src, double input_bias, Linearizer how) {
    EntLpnPlan plan;
    plan.k = src.k();
    plan.input_bias = input_bias;
    plan.first_noise = scaled_conditional(src, 0, input_bias)[0];
    if (!(plan.first_noise >= -1e-12 && plan.first_noise <= 1 + 1e-12))
        throw std::invalid_argument("ent_lpn: step-1 noise outside [0,1]");
    plan.first_noise = std::clamp(plan.first_noise, 0.0, 1.0);
    for (std::size_t i = 1; i < plan.k; ++i) plan.shifts.push_back(linearize(scaled_conditional(src, i, input_bias), how));
    return plan;
}

// Proof constants: inputs at bias 2^{k+2} delta, the source certified at delta,
// and delta < 1/2^{k+3} strictly.
inline EntLpnPlan ent_lpn_plan(const SvSource& src, double delta) {
    const std::size_t k = src.k();
    if (!(delta > 0 && delta < std::ldexp(1.0, -static_cast<int>(k + 3))))
        throw std::invalid_argument("ent_lpn: delta must lie in (0, 1/2^{k+3})");
    if (src.delta_cert() > delta + 1e-12) throw std::invalid_argument("ent_lpn: source not certified at delta");
    return build_ent_plan(src, std::ldexp(delta, static_cast<int>(k + 2)), Linearizer::paper);
}

// Smallest input bias at which every scaled conditional admits an exact
// linearization.
inline double ent_lpn_required_bias(const SvSource& src) {
    double need = 0;
    for (std::size_t i = 0; i < src.k(); ++i) need = std::max(need, sign_spectrum_l1(src.conditional(i)) / 2);
    return need;
}

inline EntLpnPlan ent_lpn_plan_l1(const SvSource& src, double input_bias) {
    if (!(input_bias > 0 && input_bias <= 0.5)) throw std::invalid_argument("ent_lpn: input bias outside (0,1/2]");
    if (input_bias + 1e-12 < ent_lpn_required_bias(src)) throw std::invalid_argument("ent_lpn: input bias below the exact requirement");
    return build_ent_plan(src, input_bias, Linearizer::l1);
}

inline std::vector<LpnSample> ent_lpn(const EntLpnPlan& plan, std::span<const LpnSample> input, Rng& rng) {
    if (input.size() != plan.k) throw std::invalid_argument("ent_lpn: input count must equal k");
    check_dimension(input);
    std::vector<LpnSample> out(input.begin(), input.end());
    out[0].y ^= sample_ber(plan.first_noise, rng);
    for (std::size_t i = 1; i < plan.k; ++i) {
        const std::size_t f = plan.shifts[i - 1].sample(rng);
        out[i].y ^= static_cast<int>(f & 1U);
        for (std::size_t j = 0; j < i; ++j)
            if ((f >> (j + 1)) & 1U) {
                out[i].u ^= out[j].u;
                out[i].y ^= out[j].y;
            }
    }
    return out;
}

inline std::vector<LpnSample> ent_lpn(std::span<const LpnSample> input, const SvSource& src, double delta, Rng& rng) {
    return ent_lpn(ent_lpn_plan(src, delta), input, rng);
}

// --------------------------------------------------- conditional families

// table[z] is the law of a hidden vector X in F2^H given condition z in F2^k.
struct ConditionalFamily {
    std::size_t k = 0;
    std::size_t H = 0;
    std::vector<DiscreteDist> table;

    ConditionalFamily() = default;
    ConditionalFamily(std::size_t k_, std::size_t H_, std::vector<DiscreteDist> t) : k(k_), H(H_), table(std::move(t)) {
        if (table.size() != (std::size_t{1} << k)) throw std::invalid_argument("ConditionalFamily: table size != 2^k");
        for (const auto& d : table)
            if (d.size() != (std::size_t{1} << H)) throw std::invalid_argument("ConditionalFamily: entry size != 2^H");
    }

    // Pr[X_h = 1 | X_{<h} = w, condition z] indexed by z | (w << k).
    std::vector<double> step_conditional(std::size_t h) const {
        const std::size_t wm = std::size_t{1} << h;
        std::vector<double> p(table.size() * wm, 0.5);
        for (std::size_t z = 0; z < table.size(); ++z) {
            const auto c = sequential_conditional(table[z], h);
            for (std::size_t w = 0; w < wm; ++w) p[z | (w << k)] = c[w];
        }
        return p;
    }

    double max_step_bias() const {
        double worst = 0;
        for (std::size_t h = 0; h < H; ++h)
            for (double c : step_conditional(h)) worst = std::max(worst, std::abs(c - 0.5));
        return worst;
    }

    double band() const { return std::ldexp(1.0, -static_cast<int>(H + k + 2)); }
    bool admissible() const { return max_step_bias() <= band(); }
};

// -------------------------------------------------------------- AffSample

struct AffPlan {
    std::size_t k = 0;
    std::size_t H = 0;
    std::vector<DiscreteDist> steps;  // steps[h]: over F2^{k+h+1}, bits F0 | anchors | previous outputs
};

inline AffPlan aff_plan(const ConditionalFamily& q, Linearizer how = Linearizer::paper) {
    if (how == Linearizer::paper && !q.admissible()) throw std::invalid_argument("aff_sample: conditional family not admissible");
    AffPlan plan{q.k, q.H, {}};
    for (std::size_t h = 0; h < q.H; ++h) plan.steps.push_back(linearize(q.step_conditional(h), how));
    return plan;
}

struct AffinePair {
    F2Vector U;
    int v = 0;
};

inline std::vector<AffinePair> aff_sample(const AffPlan& plan, std::span<const LpnSample> anchors, Rng& rng) {
    if (anchors.size() != plan.k) throw std::invalid_argument("aff_sample: anchor count must equal k");
    const std::size_t n = check_dimension(anchors);
    std::vector<AffinePair> out;
    out.reserve(plan.H);
    for (std::size_t h = 0; h < plan.H; ++h) {
        const std::size_t f = plan.steps[h].sample(rng);
        AffinePair p{F2Vector(n), static_cast<int>(f & 1U)};
        for (std::size_t j = 0; j < plan.k; ++j)
            if ((f >> (1 + j)) & 1U) {
                p.U ^= anchors[j].u;
                p.v ^= anchors[j].y;
            }
        for (std::size_t i = 0; i < h; ++i)
            if ((f >> (1 + plan.k + i)) & 1U) {
                p.U ^= out[i].U;
                p.v ^= out[i].v;
            }
        out.push_back(p);
    }
    return out;
}

// Row h of `rows` receives the shift (U^h, v^h); rows may have any length.
inline std::vector<std::vector<LpnSample>> structured_batch(const AffPlan& plan, std::span<const LpnSample> anchors,
                                                            std::vector<std::vector<LpnSample>> rows, Rng& rng) {
    if (rows.size() != plan.H) throw std::invalid_argument("structured_batch: grid shape mismatch");
    const auto shifts = aff_sample(plan, anchors, rng);
    const std::size_t n = anchors.empty() ? 0 : anchors[0].u.size();
    for (std::size_t h = 0; h < plan.H; ++h)
        for (auto& s : rows[h]) {
            if (s.u.size() != n) throw std::invalid_argument("structured_batch: grid shape mismatch");
            s.u ^= shifts[h].U;
            s.y ^= shifts[h].v;
        }
    return rows;
}

// ---------------------------------------------------------- triangle LPN

// Gamma(H) = {(i, j): 1 <= j <= i <= H}, listed row by row.
struct TriangleIndex {
    std::size_t H = 0;
    std::size_t N = 0;
    std::vector<std::pair<std::size_t, std::size_t>> gamma;

    TriangleIndex() = default;
    TriangleIndex(std::size_t H_, std::size_t N_) : H(H_), N(N_) {
        if (H == 0) throw std::invalid_argument("TriangleIndex: H must be positive");
        for (std::size_t i = 1; i <= H; ++i)
            for (std::size_t j = 1; j <= i; ++j) gamma.emplace_back(i, j);
    }
    std::size_t size() const { return gamma.size(); }
    std::size_t slot(std::size_t i, std::size_t j) const { return i * (i - 1) / 2 + (j - 1); }
    std::size_t samples() const { return gamma.size() * (N + 1); }
};

inline std::size_t triangle_size(std::size_t H) { return H * (H + 1) / 2; }

// Entry (g, c) with g indexing Gamma and c in [0, N] (c = 0 is the anchor
// slice) lives in row g * (N + 1) + c.
struct TriangleSample {
    TriangleIndex index;
    std::size_t n = 0;
    F2Matrix u;
    std::vector<std::uint8_t> y;

    TriangleSample() = default;
    TriangleSample(TriangleIndex idx, std::size_t n_) : index(std::move(idx)), n(n_), u(index.samples(), n_), y(index.samples(), 0) {}
    std::size_t row(std::size_t g, std::size_t c) const { return g * (index.N + 1) + c; }
};

// Noise tensor as an integer, bit row(g, c) = y - <u, sk>.
inline std::uint64_t triangle_noise(const TriangleSample& t, const F2Vector& sk) {
    if (t.u.rows() > 64) throw std::invalid_argument("triangle_noise: more than 64 slots");
    std::uint64_t z = 0;
    for (std::size_t r = 0; r < t.u.rows(); ++r)
        if (t.y[r] ^ t.u.row_dot(r, sk)) z |= std::uint64_t{1} << r;
    return z;
}

inline constexpr std::size_t kMaxEnumerationBits = 22;

// Law of the noise tensor: sum over b in F2^H, e_i ~ CBer(i, delta) on the
// anchor slice, and e' ~ Ber(1/2 - 2 delta^2) on the N copies.
inline DiscreteDist mu_pmf(std::size_t H, std::size_t N, double delta) {
    const TriangleIndex idx(H, N);
    const std::size_t bits = idx.samples();
    if (bits > kMaxEnumerationBits) throw std::invalid_argument("mu_pmf: size beyond enumeration budget");
    if (!(delta >= 0 && delta <= 0.5)) throw std::invalid_argument("mu_pmf: delta outside [0,1/2]");
    const double pe = 0.5 - 2 * delta * delta;
    std::vector<double> cber(H + 1);
    std::vector<double> cber_zero(H + 1);
    for (std::size_t i = 1; i <= H; ++i) {
        cber[i] = (1 - 2 * delta) / static_cast<double>(std::size_t{1} << i);
        cber_zero[i] = cber[i] + 2 * delta;
    }
    std::vector<double> p(std::size_t{1} << bits, 0.0);
    const double pb = 1.0 / static_cast<double>(std::size_t{1} << H);
    for (std::size_t z = 0; z < p.size(); ++z) {
        double total = 0;
        for (std::size_t b = 0; b < (std::size_t{1} << H); ++b) {
            double w = pb;
            for (std::size_t i = 1; i <= H && w > 0; ++i) {
                bool zero = true;
                for (std::size_t j = 1; j <= i; ++j) {
                    const std::size_t g = idx.slot(i, j);
                    const int zb = static_cast<int>((z >> (g * (N + 1))) & 1U);
                    const int bj = static_cast<int>((b >> (j - 1)) & 1U);
                    if (zb != bj) zero = false;
                    for (std::size_t c = 1; c <= N; ++c) {
                        const int x = static_cast<int>((z >> (g * (N + 1) + c)) & 1U) ^ bj;
                        w *= x ? pe : 1 - pe;
                    }
                }
                w *= zero ? cber_zero[i] : cber[i];
            }
            total += w;
        }
        p[z] = total;
    }
    return DiscreteDist(std::move(p));
}

inline DiscreteDist mu0_pmf(std::size_t H, double delta) { return mu_pmf(H, 0, delta); }

// Pr[Z = z | B = b] for the anchor slice: product over rows of CBer(i, delta)
// evaluated at the row of z shifted by b_{1..i}.
inline double anchor_likelihood(const TriangleIndex& idx, std::size_t z, std::size_t b, double delta) {
    double w = 1;
    for (std::size_t i = 1; i <= idx.H; ++i) {
        bool zero = true;
        for (std::size_t j = 1; j <= i; ++j)
            if (static_cast<std::size_t>((z >> idx.slot(i, j)) & 1U) != ((b >> (j - 1)) & 1U)) zero = false;
        w *= (1 - 2 * delta) / static_cast<double>(std::size_t{1} << i) + (zero ? 2 * delta : 0.0);
    }
    return w;
}

// Law of the hidden bits b given the anchor slice z, by enumeration.
inline ConditionalFamily b_posterior(std::size_t H, double delta) {
    const TriangleIndex idx(H, 0);
    const std::size_t k = idx.size();
    if (k > kMaxEnumerationBits) throw std::invalid_argument("b_posterior: size beyond enumeration budget");
    std::vector<DiscreteDist> table;
    table.reserve(std::size_t{1} << k);
    for (std::size_t z = 0; z < (std::size_t{1} << k); ++z) {
        std::vector<double> w(std::size_t{1} << H);
        double s = 0;
        for (std::size_t b = 0; b < w.size(); ++b) s += (w[b] = anchor_likelihood(idx, z, b, delta));
        for (double& x : w) x /= s;
        table.emplace_back(std::move(w));
    }
    return ConditionalFamily(k, H, std::move(table));
}

// Triangle sample straight from the definition (needs sk; used as a
// reference sampler and by experiments that do not exercise the reduction).
inline TriangleSample tri_sample_direct(const F2Vector& sk, std::size_t H, std::size_t N, double delta, Rng& rng) {
    TriangleSample t(TriangleIndex(H, N), sk.size());
    const double pe = 0.5 - 2 * delta * delta;
    const std::uint64_t b = rng.next() & F2Vector::low_mask(H);
    for (std::size_t i = 1; i <= H; ++i) {
        const F2Vector e = sample_cber(i, delta, rng);
        for (std::size_t j = 1; j <= i; ++j) {
            const std::size_t g = t.index.slot(i, j);
            const int bj = static_cast<int>((b >> (j - 1)) & 1U);
            for (std::size_t c = 0; c <= N; ++c) {
                const std::size_t r = t.row(g, c);
                t.u.randomize_row(r, rng);
                const int noise = c == 0 ? e.get(j - 1) : (rng.bernoulli(pe) ? 1 : 0);
                t.y[r] = static_cast<std::uint8_t>(t.u.row_dot(r, sk) ^ noise ^ bj);
            }
        }
    }
    return t;
}

// -------------------------------------------------------------- TriAlg

// paper: the proof's constants (input bias C(H) delta^2, delta below
// 1/2^{|Gamma|+2H+7}, the explicit linearization).
// desk: exact certificates computed by enumeration and the Fourier
// linearization, so the input bias can be as small as the construction allows.
enum class TriMode { paper, desk };

inline double tri_constant(std::size_t H) {
    return std::ldexp(1.0, static_cast<int>(triangle_size(H) + 2 * H + 6));
}

struct TriPlan {
    TriangleIndex index;
    double delta = 0;
    double input_bias = 0;   // bias of every input sample
    double extra_bias = 0.5; // bias of the noise added to the N copies
    EntLpnPlan ent;
    AffPlan aff;
    TriMode mode = TriMode::paper;
};

inline TriPlan tri_plan(std::size_t H, std::size_t N, double delta, TriMode mode = TriMode::paper) {
    TriPlan plan;
    plan.index = TriangleIndex(H, N);
    plan.delta = delta;
    plan.mode = mode;
    const std::size_t k = plan.index.size();
    if (k > kMaxEnumerationBits) throw std::invalid_argument("tri_alg: H beyond enumeration budget");
    if (!(delta > 0 && delta < 0.5)) throw std::invalid_argument("tri_alg: delta outside (0,1/2)");
    const SvSource source(mu0_pmf(H, delta));
    const ConditionalFamily post = b_posterior(H, delta);
    if (mode == TriMode::paper) {
        if (!(delta < std::ldexp(1.0, -static_cast<int>(k + 2 * H + 7)))) throw std::invalid_argument("tri_alg: delta bound violated");
        const double sv = std::ldexp(delta * delta, static_cast<int>(2 * H + 4));
        plan.ent = ent_lpn_plan(SvSource(source.dist(), sv), sv);
        plan.aff = aff_plan(post, Linearizer::paper);
    } else {
        const double need = std::max(ent_lpn_required_bias(source), 2 * delta * delta);
        if (need > 0.5) throw std::invalid_argument("tri_alg: no input bias up to 1/2 supports this delta");
        plan.ent = ent_lpn_plan_l1(source, need);
        plan.aff = aff_plan(post, Linearizer::l1);
    }
    plan.input_bias = plan.ent.input_bias;
    plan.extra_bias = delta * delta / plan.input_bias;  // 2 * input * extra = 2 delta^2
    return plan;
}

inline TriangleSample tri_alg(const TriPlan& plan, std::span<const LpnSample> input, Rng& rng) {
    const TriangleIndex& idx = plan.index;
    if (input.size() != idx.samples()) throw std::invalid_argument("tri_alg: wrong input count");
    const std::size_t n = check_dimension(input);
    const std::size_t k = idx.size();
    const auto anchors = ent_lpn(plan.ent, input.subspan(0, k), rng);
    const auto shifts = aff_sample(plan.aff, anchors, rng);
    TriangleSample t(idx, n);
    std::size_t next = k;
    for (std::size_t g = 0; g < k; ++g) {
        t.u.set_row(t.row(g, 0), anchors[g].u);
        t.y[t.row(g, 0)] = static_cast<std::uint8_t>(anchors[g].y);
        const auto& sh = shifts[idx.gamma[g].second - 1];
        for (std::size_t c = 1; c <= idx.N; ++c) {
            const LpnSample& s = input[next++];
            const std::size_t r = t.row(g, c);
            t.u.set_row(r, s.u);
            t.u.xor_row(r, sh.U);
            t.y[r] = static_cast<std::uint8_t>(s.y ^ sh.v ^ sample_noise(plan.extra_bias, rng));
        }
    }
    return t;
}

inline TriangleSample tri_alg(const TriPlan& plan, SampleSource& src, Rng& rng) {
    const auto input = src.take(plan.index.samples());
    return tri_alg(plan, input, rng);
}

}  // namespace lpnrl
