// SPDX-License-Identifier: MIT
#include "doctest.h"

#include <random>

#include "invsys/builders.hpp"
#include "invsys/calculus.hpp"
#include "invsys/io.hpp"

using namespace invsys;

namespace {

// Non-vertex point with offset a multiple of |e|/16.
GraphPoint random_interior_point(const MetricGraph& g, std::mt19937_64& rng) {
    EdgeId e = static_cast<EdgeId>(rng() % static_cast<std::uint64_t>(g.num_edges()));
    return {e, g.edge(e).length * Dyadic::from_parts(static_cast<long long>(1 + rng() % 15), 4)};
}

SegmentSet random_segments(const MetricGraph& g, std::mt19937_64& rng) {
    SegmentSet s;
    int pieces = 1 + static_cast<int>(rng() % 3);
    for (int k = 0; k < pieces; ++k) {
        EdgeId e = static_cast<EdgeId>(rng() % static_cast<std::uint64_t>(g.num_edges()));
        long long a = static_cast<long long>(rng() % 8), b = static_cast<long long>(rng() % 8);
        if (a > b) std::swap(a, b);
        ++b;
        s.add(e, g.edge(e).length * Dyadic::from_parts(a, 3), g.edge(e).length * Dyadic::from_parts(b, 3));
    }
    s.normalize();
    return s;
}

PLFunction constant(const MetricGraph& g, int level, const Rational& c) {
    return PLFunction::from_vertex_values(g, level, std::vector<Vec>(static_cast<std::size_t>(g.num_vertices()), Vec{c}));
}

// a * pi + b on X_i.
PLFunction affine_in_height(const InverseSystem& sys, int i, const Rational& a, const Rational& b) {
    PLFunction h = height_function(sys, i);
    for (auto& ks : h.edges)
        for (Knot& k : ks) k.v[0] = Rational(a * k.v[0] + b);
    return h;
}

}  // namespace

TEST_CASE("conditional expectation examples") {
    InverseSystem l = build_laakso(3);
    PLFunction c = constant(l.graph(3), 3, Rational(7, 3));
    PLFunction e = cond_exp_from_top(l, 0, c);
    for (const auto& ks : e.edges)
        for (const Knot& k : ks) CHECK(k.v[0] == Rational(7, 3));

    // +1 at the midpoint of one arc of L_1, -1 at the other, 0 at every vertex
    InverseSystem l1 = build_laakso(1);
    const MetricGraph& g1 = l1.graph(1);
    PLFunction h = constant(g1, 1, Rational(0));
    int sign = 1;
    for (const Edge& ed : g1.edges())
        if (ed.length == Dyadic::pow2(1)) {
            auto& ks = h.edges[static_cast<std::size_t>(ed.id)];
            ks.insert(ks.begin() + 1, Knot{Rational(1, 4), Vec{Rational(sign)}});
            sign = -sign;
        }
    h.validate(g1);
    PLFunction avg = cond_exp_step(l1, 0, h);
    for (const Knot& k : avg.edges[0]) CHECK(k.v[0] == 0);

    // the height function is fixed and J = i is the identity
    for (int i = 0; i <= 3; ++i) {
        PLFunction hi = cond_exp_from_top(l, i, height_function(l, 3));
        PLFunction ref = height_function(l, i);
        std::mt19937_64 rng(static_cast<std::uint64_t>(i));
        for (int s = 0; s < 50; ++s) {
            GraphPoint p = random_interior_point(l.graph(i), rng);
            CHECK(hi.eval(l.graph(i), p) == ref.eval(l.graph(i), p));
        }
    }
    std::mt19937_64 rng(5);
    PLFunction r = random_pl(l.graph(2), 2, 2, rng);
    PLFunction same = cond_exp_from_top(l, 2, r);
    for (int s = 0; s < 50; ++s) {
        GraphPoint p = random_interior_point(l.graph(2), rng);
        CHECK(same.eval(l.graph(2), p) == r.eval(l.graph(2), p));
    }
}

TEST_CASE("conditional expectation satisfies its defining identity on indicators") {
    InverseSystem l = build_laakso(3);
    std::mt19937_64 rng(17);
    for (int s = 0; s < 100; ++s) {
        int i = static_cast<int>(rng() % 3);
        PLFunction h = random_pl(l.graph(3), 3, 1, rng);
        SegmentSet a = random_segments(l.graph(i), rng);
        Vec lhs = integrate(l.graph(i), cond_exp_from_top(l, i, h), a);
        Vec rhs = integrate(l.graph(3), h, preimage(l, i, 3, a));
        CHECK(lhs == rhs);
    }
    // phi = 1: total integral is preserved
    PLFunction h = random_pl(l.graph(3), 3, 1, rng);
    CHECK(integrate(l.graph(0), cond_exp_from_top(l, 0, h), full_set(l.graph(0))) ==
          integrate(l.graph(3), h, full_set(l.graph(3))));
}

TEST_CASE("conditional expectation agrees with fiber measures") {
    InverseSystem l = build_laakso(3);
    std::mt19937_64 rng(23);
    PLFunction f = random_pl(l.graph(3), 3, 1, rng);
    for (int s = 0; s < 100; ++s) {
        int i = static_cast<int>(rng() % 3);
        GraphPoint p = random_interior_point(l.graph(i), rng);
        Rational expect = 0;
        Dyadic mass = 0;
        for (const FiberAtom& a : fiber_measure(l, i, p, 3)) {
            expect += a.mass.to_mpq() * f.eval(l.graph(3), a.point)[0];
            mass += a.mass;
        }
        CHECK(mass == Dyadic(1));
        CHECK(cond_exp_from_top(l, i, f).eval(l.graph(i), p)[0] == expect);
    }
}

TEST_CASE("derivatives") {
    InverseSystem l = build_laakso(2);
    const MetricGraph& g = l.graph(2);
    StepFunction dpi = derivative_level(height_function(l, 2));
    for (const auto& ps : dpi.edges)
        for (const StepPiece& p : ps) CHECK(p.v[0] == 1);
    StepFunction dc = derivative_level(constant(g, 2, Rational(3)));
    CHECK(sup_norm(dc, Norm::Euclidean) == 0);

    // slope equals a forward difference inside each piece
    std::mt19937_64 rng(31);
    PLFunction h = random_pl(g, 2, 2, rng);
    StepFunction dh = derivative_level(h);
    for (EdgeId e = 0; e < g.num_edges(); ++e)
        for (const StepPiece& p : dh.edges[static_cast<std::size_t>(e)]) {
            Rational t = (3 * p.t0 + p.t1) / 4, dt = (p.t1 - p.t0) / 8;
            Vec a = h.eval_on_edge(e, t), b = h.eval_on_edge(e, Rational(t + dt));
            for (int c = 0; c < 2; ++c) CHECK(Rational((b[c] - a[c]) / dt) == p.v[c]);
        }
    CHECK(lipschitz_constant(height_function(l, 2), Norm::Euclidean) == 1);
}

TEST_CASE("derivative martingale") {
    InverseSystem l = build_laakso(3);
    MartingaleReport m = derivative_martingale(l, height_function(l, 3), 3);
    REQUIRE(m.derivatives.size() == 4);
    for (const auto& d : m.derivatives)
        for (const auto& ps : d.edges)
            for (const StepPiece& p : ps) CHECK(p.v[0] == 1);
    for (const auto& inc : m.l1_increments) CHECK(inc == 0);

    std::mt19937_64 rng(37);
    for (int f = 0; f < 5; ++f) {
        PLFunction h = random_pl(l.graph(3), 3, 1, rng);
        MartingaleReport r = derivative_martingale(l, h, 3);
        for (bool ok : r.identity_holds) CHECK(ok);
        // independent side: differentiate E_i(h) directly and average h_{i+1}'
        for (int i = 0; i < 3; ++i) {
            StepFunction lhs = cond_exp_step(l, i, derivative_level(cond_exp_from_top(l, i + 1, h)));
            StepFunction rhs = derivative_level(cond_exp_from_top(l, i, h));
            CHECK(step_equal(lhs, rhs));
        }
        Rational lip = lipschitz_constant(h, Norm::Euclidean);
        for (const auto& s : r.sup_norms) CHECK(s <= lip);
    }
}

TEST_CASE("fundamental theorem inequality examples") {
    InverseSystem l = build_laakso(3);
    std::mt19937_64 rng(41);
    for (int i = 1; i <= 3; ++i) {
        auto pairs = ftc_pairs(l, i, 200, rng);
        for (const auto& p : pairs) CHECK(in_one_edge_preimage(l, i, p.x, p.y));
        FtcReport zero = ftc_check(l, i, constant(l.graph(3), 3, Rational(2)), pairs);
        CHECK(zero.max_ratio == 0);
        CHECK(zero.violations == 0);
        FtcReport rnd = ftc_check(l, i, random_pl(l.graph(3), 3, 2, rng), pairs);
        CHECK(rnd.violations == 0);
        CHECK(rnd.max_ratio <= 1);
    }
    // g = pi on one terminal edge: LHS = |y - x|, RHS = 2 |y - x|
    InverseSystem l1 = build_laakso(1);
    const MetricGraph& g1 = l1.graph(1);
    EdgeId term = -1;
    for (const Edge& e : g1.edges())
        if (e.length == Dyadic::pow2(2)) term = e.id;
    std::vector<PointPair> one{{{term, Dyadic::pow2(4)}, {term, Dyadic::from_parts(3, 4)}}};
    CHECK(ftc_check(l1, 1, height_function(l1, 1), one).max_ratio == Rational(1, 2));
}

TEST_CASE("maximal function examples") {
    InverseSystem l = build_laakso(2);
    const MetricGraph& g = l.graph(2);
    std::mt19937_64 rng(43);
    PLFunction one = constant(g, 2, Rational(1));
    for (int s = 0; s < 10; ++s) {
        GraphPoint x = random_interior_point(g, rng);
        CHECK(maximal_function(l, one, x, 2, 16).value == 1);
    }
    // M(h)(x) dominates the level-0 average over [x_0, 1]
    PLFunction h = pl_abs(random_pl(g, 2, 1, rng));
    PLFunction h0 = cond_exp_from_top(l, 0, h);
    for (int s = 0; s < 30; ++s) {
        GraphPoint x = random_interior_point(g, rng);
        GraphPoint x0 = project(l, 0, 2, x);
        SegmentSet tail;
        tail.add(0, x0.offset, Dyadic(1));
        Rational avg = integrate(l.graph(0), h0, tail)[0] / (Dyadic(1) - x0.offset).to_mpq();
        CHECK(maximal_function(l, h, x, 2, 16).value >= avg);
    }

    WeakReport w = weak_inequality_check(l, one, Rational(2), 2, 16);
    CHECK(w.weak_norm == 1);
    CHECK(w.pass);
    // weak norm of a bump equal to 1 on a set of measure 1/4
    std::vector<std::pair<Rational, Dyadic>> bump{{Rational(1), Dyadic::pow2(2)}, {Rational(0), Dyadic::from_parts(3, 2)}};
    CHECK(weak_norm(bump) == Rational(1, 4));
}

TEST_CASE("covering selection examples") {
    InverseSystem l = build_laakso(2);
    const MetricGraph& g1 = l.graph(1);
    EdgeId term = -1;
    for (const Edge& e : g1.edges())
        if (e.length == Dyadic::pow2(2) && e.src == zero_vertex(l, 1)) term = e.id;
    REQUIRE(term >= 0);
    CoveringCandidate small{1, {term, Dyadic(0)}, {term, Dyadic::pow2(4)}};
    CoveringCandidate big{1, {term, Dyadic(0)}, {term, Dyadic::pow2(3)}};

    CoveringResult single = covering_select(l, {small});
    CHECK(single.selected == std::vector<int>{0});
    CHECK(single.covers);
    CHECK(single.max_ratio <= 256);

    CoveringResult nested = covering_select(l, {small, big});
    CHECK(nested.selected == std::vector<int>{1});
    CHECK(nested.disjoint);
    CHECK(nested.covers);
    CHECK(nested.paths[0].subset_of(nested.enlargements[0]));

    // a path through two parent edges is rejected
    const MetricGraph& g2 = l.graph(2);
    GraphPoint a{-1, Dyadic(0)}, b{-1, Dyadic(0)};
    for (const Edge& e : g2.edges()) {
        EdgeId parent = project(l, 1, 2, {e.id, e.length.half()}).edge;
        if (e.src == zero_vertex(l, 2)) a = {e.id, e.length.half()};
        if (e.dst == one_vertex(l, 2) && parent != project(l, 1, 2, a).edge) b = {e.id, e.length.half()};
    }
    REQUIRE(a.edge >= 0);
    REQUIRE(b.edge >= 0);
    CHECK_THROWS_AS(covering_select(l, {{2, a, b}}), PreconditionError);
}

TEST_CASE("differentiability residual examples") {
    InverseSystem l = build_laakso(4);
    const MetricGraph& g = l.graph(4);
    std::mt19937_64 rng(47);
    PLFunction pi = height_function(l, 4);
    PLFunction aff = affine_in_height(l, 4, Rational(-3, 2), Rational(5));
    for (int s = 0; s < 10; ++s) {
        GraphPoint x = random_interior_point(g, rng);
        ResidualReport r = differentiability_residual(l, pi, x, Dyadic(1), 0, 4);
        for (const auto& v : r.residual) CHECK(v == 0);
        ResidualReport ra = differentiability_residual(l, aff, x, Dyadic(1), 0, 4);
        for (const auto& v : ra.residual) CHECK(v == 0);
    }
    // functions frozen at level 1 vanish once the ball sits in one cell
    PLFunction f = pullback(l, 4, random_pl(l.graph(1), 1, 1, rng));
    for (int s = 0; s < 10; ++s) {
        GraphPoint x = random_interior_point(g, rng);
        ResidualReport r = differentiability_residual(l, f, x, Dyadic(1), 0, 4, 1);
        for (std::size_t k = 0; k < r.residual.size(); ++k)
            if (r.in_cell[k]) CHECK(r.residual[k] == 0);
    }
}

TEST_CASE("function JSON round trip") {
    InverseSystem l = build_laakso(2);
    const MetricGraph& g = l.graph(2);
    std::mt19937_64 rng(53);
    PLFunction f = pl_abs(random_pl(g, 2, 1, rng));
    PLFunction back = function_from_json(g, function_to_json(g, f));
    CHECK(back.level == 2);
    for (int s = 0; s < 50; ++s) {
        GraphPoint p = random_interior_point(g, rng);
        CHECK(back.eval(g, p) == f.eval(g, p));
    }
    Json bad = function_to_json(g, random_pl(g, 2, 1, rng));
    REQUIRE_FALSE(bad.contains("knots"));
    bad["vertex_values"].erase("0");
    CHECK_THROWS(function_from_json(g, bad));
    Json unsorted = function_to_json(g, f);
    REQUIRE(unsorted.contains("knots"));
    unsorted["knots"][0].erase(0);
    CHECK_THROWS(function_from_json(g, unsorted));
}
