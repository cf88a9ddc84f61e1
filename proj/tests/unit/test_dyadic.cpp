// SPDX-License-Identifier: MIT
#include "doctest.h"

#include "invsys/dyadic.hpp"

using invsys::Dyadic;
using invsys::Rational;

TEST_CASE("dyadic parts and powers") {
    CHECK(Dyadic::from_parts(3, 2).to_mpq() == Rational(3, 4));
    CHECK(Dyadic::pow2(3).to_mpq() == Rational(1, 8));
    CHECK(Dyadic::pow2(0) == Dyadic(1));
    CHECK(Dyadic::pow2(-2) == Dyadic(4));
    CHECK(Dyadic(3).ldexp(-1).to_mpq() == Rational(3, 2));
    CHECK(Dyadic::from_parts(6, 3) == Dyadic::from_parts(3, 2));
}

TEST_CASE("dyadic rounding to a grid") {
    Dyadic x = Dyadic::from_parts(5, 4);  // 5/16
    CHECK(x.floor_to(2) == Dyadic::from_parts(1, 2));
    CHECK(x.ceil_to(2) == Dyadic::from_parts(1, 1));
    CHECK(Dyadic::from_parts(1, 2).ceil_to(2) == Dyadic::from_parts(1, 2));
    CHECK((-x).floor_to(2) == -Dyadic::from_parts(1, 1));
    CHECK((-x).ceil_to(2) == -Dyadic::from_parts(1, 2));
}

TEST_CASE("dyadic arithmetic agrees with rationals") {
    const long nums[] = {-7, -1, 0, 1, 3, 5, 1023};
    const int exps[] = {0, 1, 4, 9};
    for (long a : nums)
        for (int ea : exps)
            for (long b : nums)
                for (int eb : exps) {
                    Dyadic x = Dyadic::from_parts(a, ea), y = Dyadic::from_parts(b, eb);
                    Rational qx(a, 1), qy(b, 1);
                    qx /= Rational(mpz_class(1) << ea);
                    qy /= Rational(mpz_class(1) << eb);
                    CHECK((x + y).to_mpq() == qx + qy);
                    CHECK((x - y).to_mpq() == qx - qy);
                    CHECK((x * y).to_mpq() == qx * qy);
                    CHECK(((x < y) == (qx < qy)));
                }
}

TEST_CASE("dyadic text forms") {
    CHECK(Dyadic::parse("3/2^4") == Dyadic::from_parts(3, 4));
    CHECK(Dyadic::parse("3/16") == Dyadic::from_parts(3, 4));
    CHECK(Dyadic::parse("0.375") == Dyadic::from_parts(3, 3));
    CHECK(Dyadic::parse("-2") == Dyadic(-2));
    CHECK(Dyadic::from_parts(3, 4).str() == "3/2^4");
    CHECK(Dyadic::parse(Dyadic::from_parts(-5, 7).str()) == Dyadic::from_parts(-5, 7));
    CHECK_THROWS(Dyadic::parse("1/3"));
    CHECK_THROWS(Dyadic::parse("0.1"));
}

TEST_CASE("rational parsing accepts fractions, dyadics and decimals exactly") {
    CHECK(invsys::parse_rational("4/5") == Rational(4, 5));
    CHECK(invsys::parse_rational("0.8") == Rational(4, 5));
    CHECK(invsys::parse_rational("-0.2") == Rational(-1, 5));
    CHECK(invsys::parse_rational("1e-3") == Rational(1, 1000));
    CHECK(invsys::parse_rational("2.5E2") == Rational(250));
    CHECK(invsys::parse_rational("1/2^3") == Rational(1, 8));
    CHECK(invsys::parse_rational("7") == Rational(7));
}
