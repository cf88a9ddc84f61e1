// SPDX-License-Identifier: MIT
#include "invsys/dyadic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

namespace invsys {

namespace {

int128 checked_shl(int128 v, int s) {
    if (s == 0 || v == 0) return v;
    if (s >= 126) throw std::overflow_error("dyadic: numerator overflow on shift");
    const int128 lim = int128(1) << (126 - s);
    if (v >= lim || v <= -lim) throw std::overflow_error("dyadic: numerator overflow on shift");
    return v * (int128(1) << s);
}

int128 checked_add(int128 a, int128 b) {
    int128 r;
    if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("dyadic: overflow in addition");
    return r;
}

int128 checked_mul(int128 a, int128 b) {
    int128 r;
    if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("dyadic: overflow in product");
    return r;
}

int128 parse_int128(std::string_view s) {
    if (s.empty()) throw std::invalid_argument("dyadic: empty integer");
    bool neg = false;
    std::size_t i = 0;
    if (s[0] == '-' || s[0] == '+') {
        neg = s[0] == '-';
        i = 1;
    }
    if (i == s.size()) throw std::invalid_argument("dyadic: malformed integer");
    int128 v = 0;
    for (; i < s.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i])))
            throw std::invalid_argument("dyadic: malformed integer '" + std::string(s) + "'");
        v = checked_add(checked_mul(v, 10), s[i] - '0');
    }
    return neg ? -v : v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}  // namespace

std::string int128_to_string(int128 v) {
    if (v == 0) return "0";
    bool neg = v < 0;
    // Work on the negative side so the minimum value is representable.
    std::string out;
    int128 x = neg ? v : -v;
    while (x != 0) {
        int digit = -static_cast<int>(x % 10);
        out.push_back(static_cast<char>('0' + digit));
        x /= 10;
    }
    if (neg) out.push_back('-');
    std::reverse(out.begin(), out.end());
    return out;
}

void Dyadic::normalize() {
    if (num_ == 0) {
        exp_ = 0;
        return;
    }
    if (exp_ < 0) {
        num_ = checked_shl(num_, -exp_);
        exp_ = 0;
        return;
    }
    while (exp_ > 0 && (num_ & 1) == 0) {
        num_ /= 2;
        --exp_;
    }
}

Dyadic Dyadic::from_parts(int128 num, int exp) {
    Dyadic d;
    d.num_ = num;
    d.exp_ = exp;
    d.normalize();
    return d;
}

Dyadic Dyadic::from_double(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("dyadic: non-finite double");
    if (v == 0.0) return Dyadic();
    int e = 0;
    double m = std::frexp(v, &e);  // v = m * 2^e, 0.5 <= |m| < 1
    auto mant = static_cast<long long>(std::ldexp(m, 53));
    return from_parts(mant, 53 - e);
}

Dyadic Dyadic::parse(std::string_view raw) {
    std::string_view s = trim(raw);
    if (s.empty()) throw std::invalid_argument("dyadic: empty string");
    auto slash = s.find('/');
    if (slash != std::string_view::npos) {
        int128 p = parse_int128(trim(s.substr(0, slash)));
        std::string_view den = trim(s.substr(slash + 1));
        if (den.size() > 2 && den[0] == '2' && den[1] == '^') {
            int128 k = parse_int128(den.substr(2));
            if (k < 0 || k > 100000) throw std::invalid_argument("dyadic: bad exponent");
            return from_parts(p, static_cast<int>(k));
        }
        int128 q = parse_int128(den);
        if (q <= 0 || (q & (q - 1)) != 0)
            throw std::invalid_argument("dyadic: denominator is not a power of two: '" +
                                        std::string(raw) + "'");
        int k = 0;
        while ((int128(1) << k) != q) ++k;
        return from_parts(p, k);
    }
    auto dot = s.find('.');
    if (dot == std::string_view::npos && s.find_first_of("eE") == std::string_view::npos)
        return from_parts(parse_int128(s), 0);
    // Decimal: a.b = ab / 10^n, dyadic only if 5^n divides ab.
    if (s.find_first_of("eE") != std::string_view::npos) {
        double d = std::stod(std::string(s));
        return from_double(d);
    }
    std::string digits(s.substr(0, dot));
    std::string frac(s.substr(dot + 1));
    while (!frac.empty() && frac.back() == '0') frac.pop_back();
    int128 v = parse_int128(digits.empty() || digits == "-" || digits == "+" ? digits + "0" : digits);
    bool neg = !digits.empty() && digits[0] == '-';
    for (char c : frac) {
        if (!std::isdigit(static_cast<unsigned char>(c)))
            throw std::invalid_argument("dyadic: malformed decimal '" + std::string(raw) + "'");
        v = checked_add(checked_mul(v, 10), neg ? -(c - '0') : (c - '0'));
    }
    int n = static_cast<int>(frac.size());
    for (int i = 0; i < n; ++i) {
        if (v % 5 != 0)
            throw std::invalid_argument("dyadic: decimal is not dyadic: '" + std::string(raw) + "'");
        v /= 5;
    }
    return from_parts(v, n);
}

Dyadic Dyadic::operator-() const {
    Dyadic d = *this;
    d.num_ = -d.num_;
    return d;
}

Dyadic& Dyadic::operator+=(const Dyadic& o) {
    if (o.num_ == 0) return *this;
    if (num_ == 0) return *this = o;
    int e = std::max(exp_, o.exp_);
    int128 a = checked_shl(num_, e - exp_);
    int128 b = checked_shl(o.num_, e - o.exp_);
    num_ = checked_add(a, b);
    exp_ = e;
    normalize();
    return *this;
}

Dyadic& Dyadic::operator-=(const Dyadic& o) { return *this += -o; }

Dyadic& Dyadic::operator*=(const Dyadic& o) {
    num_ = checked_mul(num_, o.num_);
    exp_ += o.exp_;
    normalize();
    return *this;
}

Dyadic Dyadic::ldexp(int k) const {
    if (num_ == 0) return *this;
    return from_parts(num_, exp_ - k);
}

std::strong_ordering operator<=>(const Dyadic& a, const Dyadic& b) {
    if (a.exp_ == b.exp_) return a.num_ <=> b.num_;
    int sa = a.sign(), sb = b.sign();
    if (sa != sb) return sa <=> sb;
    int e = std::max(a.exp_, b.exp_);
    int da = e - a.exp_, db = e - b.exp_;
    // Shifting can overflow for wildly different scales; fall back to GMP.
    try {
        return checked_shl(a.num_, da) <=> checked_shl(b.num_, db);
    } catch (const std::overflow_error&) {
        return cmp(a.to_mpq(), b.to_mpq()) <=> 0;
    }
}

double Dyadic::to_double() const { return static_cast<double>(to_long_double()); }

long double Dyadic::to_long_double() const {
    return std::ldexp(static_cast<long double>(num_), -exp_);
}

mpq_class Dyadic::to_mpq() const {
    mpz_class n(int128_to_string(num_));
    mpz_class d = 1;
    mpz_mul_2exp(d.get_mpz_t(), d.get_mpz_t(), static_cast<mp_bitcnt_t>(exp_));
    mpq_class q(n, d);
    q.canonicalize();
    return q;
}

std::string Dyadic::str() const {
    return int128_to_string(num_) + "/2^" + std::to_string(exp_);
}

Dyadic Dyadic::floor_to(int k) const {
    if (exp_ <= k) return *this;
    int s = exp_ - k;
    int128 q = num_ >> s;  // arithmetic shift floors toward -inf
    return from_parts(q, k);
}

Dyadic Dyadic::ceil_to(int k) const {
    Dyadic f = floor_to(k);
    if (f == *this) return f;
    return f + pow2(k);
}

Rational parse_rational(std::string_view raw) {
    std::string_view s = trim(raw);
    if (s.find("^") != std::string_view::npos) return Dyadic::parse(s).to_mpq();
    if (s.find('.') != std::string_view::npos || s.find_first_of("eE") != std::string_view::npos) {
        // exact decimal: mantissa digits scaled by a power of ten
        std::string digits;
        long exp10 = 0;
        std::size_t k = 0;
        bool neg = false;
        if (k < s.size() && (s[k] == '-' || s[k] == '+')) neg = s[k++] == '-';
        bool seen_dot = false;
        bool any = false;
        for (; k < s.size() && s[k] != 'e' && s[k] != 'E'; ++k) {
            if (s[k] == '.' && !seen_dot) {
                seen_dot = true;
            } else if (s[k] >= '0' && s[k] <= '9') {
                digits.push_back(s[k]);
                any = true;
                if (seen_dot) --exp10;
            } else {
                throw std::invalid_argument("rational: bad decimal '" + std::string(s) + "'");
            }
        }
        if (!any) throw std::invalid_argument("rational: bad decimal '" + std::string(s) + "'");
        if (k < s.size()) {
            std::string e(s.substr(k + 1));
            std::size_t used = 0;
            long ev = std::stol(e, &used);
            if (used != e.size()) throw std::invalid_argument("rational: bad exponent '" + std::string(s) + "'");
            exp10 += ev;
        }
        mpz_class num(digits, 10);
        mpz_class ten = 10;
        mpz_class scale;
        mpz_pow_ui(scale.get_mpz_t(), ten.get_mpz_t(), static_cast<unsigned long>(exp10 < 0 ? -exp10 : exp10));
        Rational q = exp10 < 0 ? Rational(num, scale) : Rational(num * scale);
        q.canonicalize();
        return neg ? Rational(-q) : q;
    }
    Rational q(std::string(s), 10);
    q.canonicalize();
    return q;
}

std::string rational_str(const Rational& q) { return q.get_str(); }

}  // namespace invsys
