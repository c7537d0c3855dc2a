#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "lpnrl/f2.hpp"
#include "lpnrl/rng.hpp"

namespace lpnrl {

inline constexpr double kProbTol = 1e-12;

// Exact finite distribution over {0, ..., m-1}. Over F2^k the index bit i is
// coordinate i.
class DiscreteDist {
public:
    DiscreteDist() = default;
    explicit DiscreteDist(std::vector<double> p) : p_(std::move(p)) {
        if (p_.empty()) throw std::invalid_argument("DiscreteDist: empty support");
        double s = 0;
        for (double& x : p_) {
            if (!(x >= -kProbTol) || !(x <= 1 + kProbTol)) throw std::invalid_argument("DiscreteDist: entry outside [0,1]");
            x = std::clamp(x, 0.0, 1.0);
            s += x;
        }
        if (std::abs(s - 1) > 1e-9) throw std::invalid_argument("DiscreteDist: mass drifts from 1 by more than 1e-9");
        for (double& x : p_) x /= s;
        build_cdf();
    }
    static DiscreteDist uniform(std::size_t m) { return DiscreteDist(std::vector<double>(m, 1.0 / static_cast<double>(m))); }
    static DiscreteDist point(std::size_t m, std::size_t i) {
        std::vector<double> p(m, 0.0);
        p.at(i) = 1.0;
        return DiscreteDist(std::move(p));
    }

    std::size_t size() const { return p_.size(); }
    double operator[](std::size_t i) const { return p_[i]; }
    const std::vector<double>& probs() const { return p_; }

    std::size_t sample(Rng& rng) const {
        const double u = rng.uniform();
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        std::size_t i = static_cast<std::size_t>(it - cdf_.begin());
        if (i >= p_.size()) i = p_.size() - 1;
        while (p_[i] == 0.0 && i > 0) --i;  // guards u landing exactly on a flat step
        return i;
    }

    // Marginal of coordinate i being 1, for distributions over F2^k.
    double marginal_one(std::size_t i) const {
        double s = 0;
        for (std::size_t z = 0; z < p_.size(); ++z)
            if ((z >> i) & 1U) s += p_[z];
        return s;
    }

private:
    void build_cdf() {
        cdf_.resize(p_.size());
        std::partial_sum(p_.begin(), p_.end(), cdf_.begin());
    }

    std::vector<double> p_;
    std::vector<double> cdf_;
};

inline void check_prob(double g, const char* what) {
    if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument(what);
}

inline int sample_ber(double gamma, Rng& rng) {
    check_prob(gamma, "sample_ber: probability outside [0,1]");
    return rng.bernoulli(gamma) ? 1 : 0;
}

// CBer(n, delta): all-zero with probability 2*delta, else uniform bits.
inline F2Vector sample_cber(std::size_t n, double delta, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_cber: n must be positive");
    if (!(delta >= 0.0 && delta <= 0.5)) throw std::invalid_argument("sample_cber: delta outside [0,1/2]");
    if (rng.bernoulli(2 * delta)) return F2Vector(n);
    return F2Vector::random(n, rng);
}

// Same law as sample_cber, packed into a word (n <= 64).
inline std::uint64_t sample_cber_word(std::size_t n, double delta, Rng& rng) {
    if (rng.bernoulli(2 * delta)) return 0;
    return rng.next() & F2Vector::low_mask(n);
}

inline DiscreteDist cber_pmf(std::size_t n, double delta) {
    if (n < 1 || n > 24) throw std::invalid_argument("cber_pmf: n outside [1,24]");
    if (!(delta >= 0.0 && delta <= 0.5)) throw std::invalid_argument("cber_pmf: delta outside [0,1/2]");
    const std::size_t m = std::size_t{1} << n;
    std::vector<double> p(m, (1 - 2 * delta) / static_cast<double>(m));
    p[0] += 2 * delta;
    return DiscreteDist(std::move(p));
}

// Bias of the XOR of two independent bits with biases d1, d2.
inline double convolve_bias(double d1, double d2) { return 2 * d1 * d2; }

// Noise bit with signed bias d: Pr[1] = 1/2 - d.
inline int sample_noise(double bias, Rng& rng) { return rng.bernoulli(0.5 - bias) ? 1 : 0; }

inline double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("tv_distance: size mismatch");
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return s / 2;
}

inline int parity(std::uint64_t x) { return std::popcount(x) & 1; }

}  // namespace lpnrl
