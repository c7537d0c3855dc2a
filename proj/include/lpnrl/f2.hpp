#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lpnrl/rng.hpp"

namespace lpnrl {

// Coordinate i of a vector is bit i of the underlying integer. Hex output
// renders that integer most-significant digit first; the length travels
// separately.
class F2Vector {
public:
    static constexpr std::size_t kMaxBits = 256;
    static constexpr std::size_t kMaxWords = kMaxBits / 64;

    F2Vector() = default;
    explicit F2Vector(std::size_t n) : n_(n) {
        if (n > kMaxBits) throw std::invalid_argument("F2Vector: length exceeds 256");
    }
    static F2Vector from_word(std::size_t n, std::uint64_t w) {
        F2Vector v(n);
        v.w_[0] = n >= 64 ? w : (w & low_mask(n));
        return v;
    }
    static F2Vector unit(std::size_t n, std::size_t i) {
        F2Vector v(n);
        v.set(i, 1);
        return v;
    }
    static F2Vector random(std::size_t n, Rng& rng) {
        F2Vector v(n);
        for (std::size_t i = 0; i < v.words(); ++i) v.w_[i] = rng.next();
        v.trim();
        return v;
    }

    std::size_t size() const { return n_; }
    std::size_t words() const { return (n_ + 63) / 64; }
    std::uint64_t word(std::size_t i) const { return w_[i]; }
    std::uint64_t& word(std::size_t i) { return w_[i]; }

    int get(std::size_t i) const { return static_cast<int>((w_[i / 64] >> (i % 64)) & 1U); }
    void set(std::size_t i, int b) {
        const std::uint64_t m = std::uint64_t{1} << (i % 64);
        if (b & 1) w_[i / 64] |= m;
        else w_[i / 64] &= ~m;
    }
    void flip(std::size_t i) { w_[i / 64] ^= std::uint64_t{1} << (i % 64); }

    bool is_zero() const {
        for (std::size_t i = 0; i < words(); ++i)
            if (w_[i]) return false;
        return true;
    }
    std::size_t weight() const {
        std::size_t c = 0;
        for (std::size_t i = 0; i < words(); ++i) c += static_cast<std::size_t>(std::popcount(w_[i]));
        return c;
    }

    F2Vector& operator^=(const F2Vector& o) {
        check_len(o);
        for (std::size_t i = 0; i < words(); ++i) w_[i] ^= o.w_[i];
        return *this;
    }
    friend F2Vector operator^(F2Vector a, const F2Vector& b) { return a ^= b; }
    friend F2Vector operator+(F2Vector a, const F2Vector& b) { return a ^= b; }
    friend bool operator==(const F2Vector& a, const F2Vector& b) {
        if (a.n_ != b.n_) return false;
        for (std::size_t i = 0; i < a.words(); ++i)
            if (a.w_[i] != b.w_[i]) return false;
        return true;
    }
    friend bool operator<(const F2Vector& a, const F2Vector& b) {
        if (a.n_ != b.n_) return a.n_ < b.n_;
        for (std::size_t i = a.words(); i-- > 0;)
            if (a.w_[i] != b.w_[i]) return a.w_[i] < b.w_[i];
        return false;
    }

    void check_len(const F2Vector& o) const {
        if (o.n_ != n_) throw std::invalid_argument("F2Vector: length mismatch");
    }

    std::string hex() const {
        static constexpr char digits[] = "0123456789abcdef";
        const std::size_t nd = n_ == 0 ? 0 : (n_ + 3) / 4;
        std::string s(nd, '0');
        for (std::size_t d = 0; d < nd; ++d) {
            const std::size_t bit = 4 * d;
            unsigned v = static_cast<unsigned>((w_[bit / 64] >> (bit % 64)) & 0xF);
            s[nd - 1 - d] = digits[v];
        }
        return s;
    }
    static F2Vector from_hex(std::size_t n, std::string_view s) {
        F2Vector v(n);
        const std::size_t nd = s.size();
        for (std::size_t d = 0; d < nd; ++d) {
            const char c = s[nd - 1 - d];
            unsigned x;
            if (c >= '0' && c <= '9') x = static_cast<unsigned>(c - '0');
            else if (c >= 'a' && c <= 'f') x = static_cast<unsigned>(c - 'a' + 10);
            else if (c >= 'A' && c <= 'F') x = static_cast<unsigned>(c - 'A' + 10);
            else throw std::invalid_argument("F2Vector::from_hex: bad digit");
            for (int b = 0; b < 4; ++b) {
                const std::size_t i = 4 * d + static_cast<std::size_t>(b);
                if ((x >> b) & 1U) {
                    if (i >= n) throw std::invalid_argument("F2Vector::from_hex: value exceeds length");
                    v.set(i, 1);
                }
            }
        }
        return v;
    }

    // Bit string with coordinate 0 first, e.g. "110" has coordinates 0 and 1 set.
    static F2Vector from_bits(std::string_view s) {
        F2Vector v(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '1') v.set(i, 1);
            else if (s[i] != '0') throw std::invalid_argument("F2Vector::from_bits: bad char");
        }
        return v;
    }

    static std::uint64_t low_mask(std::size_t n) { return n >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1); }

private:
    void trim() {
        if (n_ % 64) w_[n_ / 64] &= low_mask(n_ % 64);
    }

    std::size_t n_ = 0;
    std::array<std::uint64_t, kMaxWords> w_{};
};

inline int dot(const F2Vector& u, const F2Vector& v) {
    u.check_len(v);
    std::uint64_t acc = 0;
    for (std::size_t i = 0; i < u.words(); ++i) acc ^= u.word(i) & v.word(i);
    return std::popcount(acc) & 1;
}

// Rows stored contiguously, words_per_row words each.
class F2Matrix {
public:
    F2Matrix() = default;
    F2Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), wpr_((cols + 63) / 64), data_(rows * ((cols + 63) / 64), 0) {
        if (cols > F2Vector::kMaxBits) throw std::invalid_argument("F2Matrix: too many columns");
    }
    static F2Matrix from_rows(const std::vector<F2Vector>& rows) {
        if (rows.empty()) return {};
        F2Matrix m(rows.size(), rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r) m.set_row(r, rows[r]);
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t words_per_row() const { return wpr_; }

    const std::uint64_t* row_ptr(std::size_t r) const { return data_.data() + r * wpr_; }
    std::uint64_t* row_ptr(std::size_t r) { return data_.data() + r * wpr_; }

    F2Vector row(std::size_t r) const {
        F2Vector v(cols_);
        for (std::size_t i = 0; i < wpr_; ++i) v.word(i) = row_ptr(r)[i];
        return v;
    }
    void set_row(std::size_t r, const F2Vector& v) {
        if (v.size() != cols_) throw std::invalid_argument("F2Matrix::set_row: length mismatch");
        for (std::size_t i = 0; i < wpr_; ++i) row_ptr(r)[i] = v.word(i);
    }
    void xor_row(std::size_t r, const F2Vector& v) {
        for (std::size_t i = 0; i < wpr_; ++i) row_ptr(r)[i] ^= v.word(i);
    }
    void xor_row_into(std::size_t r, F2Vector& v) const {
        for (std::size_t i = 0; i < wpr_; ++i) v.word(i) ^= row_ptr(r)[i];
    }
    void randomize_row(std::size_t r, Rng& rng) {
        std::uint64_t* p = row_ptr(r);
        for (std::size_t i = 0; i < wpr_; ++i) p[i] = rng.next();
        if (cols_ % 64) p[wpr_ - 1] &= F2Vector::low_mask(cols_ % 64);
    }
    int row_dot(std::size_t r, const F2Vector& v) const {
        const std::uint64_t* p = row_ptr(r);
        std::uint64_t acc = 0;
        for (std::size_t i = 0; i < wpr_; ++i) acc ^= p[i] & v.word(i);
        return std::popcount(acc) & 1;
    }
    int get(std::size_t r, std::size_t c) const { return static_cast<int>((row_ptr(r)[c / 64] >> (c % 64)) & 1U); }

    friend bool operator==(const F2Matrix& a, const F2Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

    // One hex string per row, joined by ':'.
    std::string hex() const {
        std::string s;
        for (std::size_t r = 0; r < rows_; ++r) {
            if (r) s += ':';
            s += row(r).hex();
        }
        return s;
    }
    static F2Matrix from_hex(std::size_t cols, std::string_view s) {
        std::vector<F2Vector> rows;
        std::size_t start = 0;
        while (start <= s.size() && !s.empty()) {
            const std::size_t end = s.find(':', start);
            rows.push_back(F2Vector::from_hex(cols, s.substr(start, end == std::string_view::npos ? end : end - start)));
            if (end == std::string_view::npos) break;
            start = end + 1;
        }
        return from_rows(rows);
    }

private:
    std::size_t rows_ = 0, cols_ = 0, wpr_ = 0;
    std::vector<std::uint64_t> data_;
};

inline F2Vector operator*(const F2Matrix& m, const F2Vector& v) {
    if (v.size() != m.cols()) throw std::invalid_argument("F2Matrix * F2Vector: length mismatch");
    F2Vector out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out.set(r, m.row_dot(r, v));
    return out;
}

}  // namespace lpnrl
