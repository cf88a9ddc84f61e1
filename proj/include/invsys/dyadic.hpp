// SPDX-License-Identifier: MIT
//
// Exact dyadic rationals p / 2^k.
//
// The numerator is a signed 128-bit integer kept odd (or zero), so every value
// has exactly one representation. Arithmetic that would overflow the
// numerator throws std::overflow_error instead of wrapping.

#ifndef INVSYS_DYADIC_HPP
#define INVSYS_DYADIC_HPP

#include <compare>
#include <cstdint>
#include <gmpxx.h>
#include <stdexcept>
#include <string>
#include <string_view>

namespace invsys {

using int128 = __int128;

class Dyadic {
public:
    Dyadic() = default;
    Dyadic(long long v) : num_(v), exp_(0) {}  // NOLINT: implicit on purpose

    /// value = num / 2^exp; exp may be negative.
    static Dyadic from_parts(int128 num, int exp);
    /// 1 / 2^k
    static Dyadic pow2(int k) { return from_parts(1, k); }
    /// Exact conversion of a finite double.
    static Dyadic from_double(double d);
    /// Accepts "p/2^k", "p/q" with q a power of two, integers and decimals
    /// whose value is dyadic (e.g. "0.375").
    static Dyadic parse(std::string_view s);

    int128 numerator() const { return num_; }
    int log2_denominator() const { return exp_; }

    bool is_zero() const { return num_ == 0; }
    int sign() const { return num_ > 0 ? 1 : (num_ < 0 ? -1 : 0); }

    Dyadic operator-() const;
    Dyadic& operator+=(const Dyadic& o);
    Dyadic& operator-=(const Dyadic& o);
    Dyadic& operator*=(const Dyadic& o);

    friend Dyadic operator+(Dyadic a, const Dyadic& b) { return a += b; }
    friend Dyadic operator-(Dyadic a, const Dyadic& b) { return a -= b; }
    friend Dyadic operator*(Dyadic a, const Dyadic& b) { return a *= b; }

    /// Multiply by 2^k (k may be negative).
    Dyadic ldexp(int k) const;
    Dyadic half() const { return ldexp(-1); }
    Dyadic abs() const { return num_ < 0 ? -*this : *this; }

    friend bool operator==(const Dyadic& a, const Dyadic& b) {
        return a.num_ == b.num_ && a.exp_ == b.exp_;
    }
    friend std::strong_ordering operator<=>(const Dyadic& a, const Dyadic& b);

    double to_double() const;
    long double to_long_double() const;
    mpq_class to_mpq() const;
    /// Canonical "p/2^k" rendering, always with the denominator part.
    std::string str() const;

    /// Largest multiple of 2^-k that is <= *this.
    Dyadic floor_to(int k) const;
    /// Smallest multiple of 2^-k that is >= *this.
    Dyadic ceil_to(int k) const;

private:
    void normalize();
    int128 num_ = 0;
    int exp_ = 0;
};

inline Dyadic min(const Dyadic& a, const Dyadic& b) { return b < a ? b : a; }
inline Dyadic max(const Dyadic& a, const Dyadic& b) { return a < b ? b : a; }

std::string int128_to_string(int128 v);

/// Exact rational used wherever division leaves the dyadics.
using Rational = mpq_class;

Rational parse_rational(std::string_view s);
std::string rational_str(const Rational& q);

}  // namespace invsys

#endif
