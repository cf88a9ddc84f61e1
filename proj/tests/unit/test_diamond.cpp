// SPDX-License-Identifier: MIT
#include "doctest.h"

#include <queue>
#include <random>
#include <set>

#include "invsys/banach_diamond.hpp"
#include "invsys/io.hpp"

using namespace invsys;

namespace {

ConvexWitness symmetric_witness() {
    ConvexWitness w;
    w.c = {Rational(0)};
    w.branches = {{Rational(4, 5)}, {Rational(-4, 5)}};
    w.n_c = 1;
    w.delta_c = Rational(1, 5);
    return w;
}

NormedPoint np(std::initializer_list<Rational> b, const Rational& t) { return {Coord(b), t}; }

// Minimal N with 2^-N <= (delta_i - delta') / 4, by direct search.
int minimal_exponent(const Rational& delta, const Rational& delta_i) {
    Rational target = (delta_i - (delta + delta_i) / 2) / 4;
    Rational p = 1;
    int n = 0;
    while (p > target) {
        p /= 2;
        ++n;
    }
    return n;
}

// All-pairs vertex distances by Dijkstra with exact lengths.
std::vector<std::vector<Dyadic>> vertex_distances(const MetricGraph& g) {
    const int n = g.num_vertices();
    std::vector<std::vector<std::pair<VertexId, Dyadic>>> adj(static_cast<std::size_t>(n));
    for (const Edge& e : g.edges()) {
        adj[static_cast<std::size_t>(e.src)].emplace_back(e.dst, e.length);
        adj[static_cast<std::size_t>(e.dst)].emplace_back(e.src, e.length);
    }
    std::vector<std::vector<Dyadic>> out;
    for (VertexId s = 0; s < n; ++s) {
        std::vector<std::optional<Dyadic>> d(static_cast<std::size_t>(n));
        std::set<std::pair<Dyadic, VertexId>> open{{Dyadic(0), s}};
        d[static_cast<std::size_t>(s)] = Dyadic(0);
        while (!open.empty()) {
            auto [du, u] = *open.begin();
            open.erase(open.begin());
            for (auto [v, w] : adj[static_cast<std::size_t>(u)]) {
                auto& dv = d[static_cast<std::size_t>(v)];
                if (!dv || du + w < *dv) {
                    if (dv) open.erase({*dv, v});
                    dv = du + w;
                    open.insert({*dv, v});
                }
            }
        }
        std::vector<Dyadic> row;
        for (auto& x : d) row.push_back(*x);
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace

TEST_CASE("subdivision exponent") {
    CHECK(subdivision_exponent(Rational(1, 5), Rational(1, 4)) == 8);
    CHECK(minimal_exponent(Rational(1, 5), Rational(1, 4)) == 8);
    for (int a = 1; a < 8; ++a)
        for (int b = a + 1; b <= 8; ++b) {
            Rational delta(a, 16), di(b, 16);
            CHECK(subdivision_exponent(delta, di) == minimal_exponent(delta, di));
        }
    CHECK_THROWS(subdivision_exponent(Rational(1, 4), Rational(1, 5)));
}

TEST_CASE("model graph of a one-dimensional witness") {
    ConvexWitness w = symmetric_witness();
    w.validate();
    ModelGraph mg = build_model_graph(w, Dyadic(1), np({Rational(0)}, Rational(0)));
    CHECK(mg.graph.num_edges() == 8);
    // vertices from the two displacement recursions
    std::set<std::pair<Rational, Rational>> got, want{{0, 0},
                                                      {0, Rational(1, 4)},
                                                      {Rational(1, 5), Rational(1, 4)},
                                                      {Rational(1, 5), Rational(1, 2)},
                                                      {Rational(1, 5), Rational(3, 4)},
                                                      {0, Rational(3, 4)},
                                                      {0, 1}};
    for (const NormedPoint& p : mg.coords) got.insert({p.b[0], p.t});
    CHECK(got == want);

    for (const auto* path : {&mg.gamma0, &mg.gamma1}) {
        REQUIRE(path->size() == 4);
        Dyadic total = 0;
        for (EdgeId e : *path) {
            const Edge& ed = mg.graph.edge(e);
            NormedPoint v = mg.coords[static_cast<std::size_t>(ed.dst)] - mg.coords[static_cast<std::size_t>(ed.src)];
            CHECK(v.t == ed.length.to_mpq());
            CHECK(v.norm() == ed.length.to_mpq());
            total += ed.length;
        }
        CHECK(total == Dyadic(1));
    }
    // non-joint subdivision heights have two preimages, joints one
    for (Rational t : {Rational(1, 4), Rational(3, 4)}) {
        int count = 0;
        for (const NormedPoint& p : mg.coords) count += p.t == t;
        CHECK(count == 2);
    }
    int joints = 0;
    for (VertexId v = 0; v < mg.graph.num_vertices(); ++v)
        if (mg.graph.degree(v) == 4) ++joints;
    CHECK(joints == 1);
}

TEST_CASE("parallelogram examples") {
    ConvexWitness w = symmetric_witness();
    NormedPoint x = parallelogram_point(w, 0, 1, Rational(1));
    NormedPoint y = parallelogram_point(w, 0, 2, Rational(1));
    CHECK(x == np({Rational(0)}, Rational(1)));
    CHECK(y == np({Rational(4, 5)}, Rational(1)));
    CHECK(distance(x, y) == Rational(4, 5));
    CHECK(parallelogram_intrinsic(1, Rational(1), 2, Rational(1)) == 2);
    CHECK(distance(x, y) / parallelogram_intrinsic(1, Rational(1), 2, Rational(1)) == Rational(2, 5));
    // e1 against e4
    for (int a = 0; a <= 4; ++a)
        for (int b = 0; b <= 4; ++b) {
            Rational sa(a, 4), sb(b, 4);
            CHECK(distance(parallelogram_point(w, 0, 1, sa), parallelogram_point(w, 0, 4, sb)) >= 2 * w.delta_c);
            CHECK(parallelogram_intrinsic(1, sa, 4, sb) <= 2);
        }
    for (int j = 0; j < 2; ++j) {
        ParallelogramReport r = certify_parallelogram(w, j, 2000);
        CHECK(r.min_ratio >= w.delta_c);
        CHECK(r.evaluated > 0);
    }
}

TEST_CASE("witness validation names the failing inequality") {
    ConvexWitness off = symmetric_witness();
    off.branches[1] = {Rational(-3, 5)};
    CHECK_THROWS_AS(off.validate(), WitnessError);
    ConvexWitness close = symmetric_witness();
    close.delta_c = Rational(1, 4);
    CHECK_THROWS_WITH_AS(close.validate(), doctest::Contains("4 delta_c"), WitnessError);
    ConvexWitness big = symmetric_witness();
    big.branches = {{Rational(6, 5)}, {Rational(-6, 5)}};
    CHECK_THROWS_AS(big.validate(), WitnessError);
    ConvexWitness count = symmetric_witness();
    count.branches.pop_back();
    CHECK_THROWS_AS(count.validate(), WitnessError);
    // delta_c must exceed the target delta
    CHECK_THROWS_AS(build_generalized_diamond(1, coordinate_splitting_provider(1, Rational(4, 5)), Rational(1, 4), 2),
                    WitnessError);
    ConvexWitness padded = symmetric_witness().padded(2);
    CHECK(padded.n_c == 2);
    CHECK(padded.branches.size() == 4);
    CHECK_NOTHROW(padded.validate());
}

TEST_CASE("generalized diamond build satisfies D1-D7") {
    GeneralizedDiamondSystem d =
        build_generalized_diamond(2, coordinate_splitting_provider(2, Rational(4, 5)), Rational(1, 16), 2);
    REQUIRE(d.sys.top() == 1);
    CHECK(d.coords[0][0] == np({Rational(0), Rational(0)}, Rational(0)));
    CHECK(d.coords[0][1] == np({Rational(0), Rational(0)}, Rational(1)));
    DAxiomReport rep = check_d_axioms(d);
    for (const auto& r : rep.results) {
        INFO(r.id);
        CHECK(r.pass);
    }
    for (int i = 0; i <= d.sys.top(); ++i) {
        CHECK(d.sys.graph(i).total_measure() == Dyadic(1));
        CHECK(d.delta_i[static_cast<std::size_t>(i)] > d.delta);
    }

    // pair two split subdivision vertices in a row
    GeneralizedDiamondSystem bad = d;
    const MetricGraph& H = bad.sys.graph(1);
    auto& subs = bad.sys.levels[0].subdivision[0];
    bool corrupted = false;
    for (std::size_t k = 1; k < subs.size() && !corrupted; ++k) {
        const SubEdge& prev = subs[k - 1];
        if (prev.is_circle() && subs[k].is_circle() && H.edge(prev.primary).dst == H.edge(prev.opposite).dst) {
            subs[k].opposite = prev.opposite;
            corrupted = true;
        }
    }
    REQUIRE(corrupted);
    CHECK_FALSE(check_d_axioms(bad).get("D3(i)").pass);
}

TEST_CASE("quasiconvexity and fiber displacement") {
    GeneralizedDiamondSystem d =
        build_generalized_diamond(2, coordinate_splitting_provider(2, Rational(4, 5)), Rational(1, 16), 2);
    std::mt19937_64 rng(59);
    for (int i = 0; i <= 1; ++i) {
        QuasiconvexityReport q = certify_quasiconvexity(d, i, 2000, rng);
        CHECK(q.min_ratio >= d.delta_i[static_cast<std::size_t>(i)]);
        CHECK(q.min_ratio <= 1);
    }
    // fibers of subdivision points stay within 2^-(n_0 + 1 + N_0)
    Rational bound = Rational(1) / (mpz_class(1) << (d.n[0] + 1 + d.N[0]));
    for (const GraphPoint& p : subdivision_points(d.sys, 0))
        for (const GraphPoint& f : fiber_points(d.sys, 0, 1, p)) CHECK(distance(d.point(1, f), d.point(0, p)) <= bound);
}

TEST_CASE("vertex distortion matches a brute-force search") {
    GeneralizedDiamondSystem d =
        build_generalized_diamond(1, coordinate_splitting_provider(1, Rational(4, 5)), Rational(1, 16), 2);
    const MetricGraph& g = d.sys.graph(1);
    auto dist = vertex_distances(g);
    Rational worst = 0;
    for (VertexId u = 0; u < g.num_vertices(); ++u)
        for (VertexId v = u + 1; v < g.num_vertices(); ++v) {
            Rational r = dist[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)].to_mpq() /
                         distance(d.coords[1][static_cast<std::size_t>(u)], d.coords[1][static_cast<std::size_t>(v)]);
            worst = std::max(worst, r);
        }
    std::mt19937_64 rng(61);
    DistortionReport rep = vertex_distortion(d, 1, 1'000'000, rng);
    CHECK_FALSE(rep.sampled);
    CHECK(rep.max_ratio == worst);
    CHECK(rep.max_ratio <= 1 / d.delta_i[1]);

    // joint vertices at mid-height of one block: norm gap 4 delta_c, path gap 2 in block units
    ConvexWitness w = symmetric_witness();
    Rational ratio = parallelogram_intrinsic(1, Rational(1), 2, Rational(1)) /
                     distance(parallelogram_point(w, 0, 1, Rational(1)), parallelogram_point(w, 0, 2, Rational(1)));
    CHECK(ratio == 1 / (2 * w.delta_c));
    CHECK(ratio <= 1 / w.delta_c);
}

TEST_CASE("shipped witness fixture") {
    WitnessFile wf = witnesses_from_json(read_json_file(std::string(INVSYS_FIXTURES) + "/linf3_witnesses.json"));
    CHECK(wf.m == 3);
    CHECK(wf.delta == Rational(1, 16));
    REQUIRE(wf.entries.size() == 3);
    for (const auto& w : wf.entries) {
        CHECK_NOTHROW(w.validate());
        for (int j = 0; j < static_cast<int>(w.branches.size()); ++j)
            CHECK(certify_parallelogram(w, j, 1000).min_ratio >= w.delta_c);
    }
    GeneralizedDiamondSystem d = build_generalized_diamond(wf.m, table_provider(wf.entries), wf.delta, 2);
    CHECK(check_d_axioms(d).pass());
    CHECK_THROWS_AS(table_provider(wf.entries)({Rational(1), Rational(0), Rational(0)}), WitnessError);

    // round trip through JSON
    WitnessFile back = witnesses_from_json(witnesses_to_json(wf));
    REQUIRE(back.entries.size() == wf.entries.size());
    for (std::size_t k = 0; k < back.entries.size(); ++k) {
        CHECK(back.entries[k].c == wf.entries[k].c);
        CHECK(back.entries[k].branches == wf.entries[k].branches);
        CHECK(back.entries[k].delta_c == wf.entries[k].delta_c);
    }
}
