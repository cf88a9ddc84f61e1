// SPDX-License-Identifier: MIT
#include "doctest.h"

#include <functional>
#include <random>
#include <sstream>

#include "invsys/builders.hpp"
#include "invsys/io.hpp"
#include "invsys/system.hpp"

using namespace invsys;

namespace {

// Directed 0-1 paths by depth-first search.
void all_paths(const MetricGraph& g, VertexId v, VertexId target, std::vector<EdgeId>& cur,
               std::vector<std::vector<EdgeId>>& out) {
    if (v == target) {
        out.push_back(cur);
        return;
    }
    for (EdgeId e : g.out_edges(v)) {
        cur.push_back(e);
        all_paths(g, g.edge(e).dst, target, cur, out);
        cur.pop_back();
    }
}

// Circle length of X_i' carried by each edge of X_i.
Dyadic circle_length(const InverseSystem& sys, int i, EdgeId e) {
    Dyadic s = 0;
    for (const SubEdge& se : sys.levels[static_cast<std::size_t>(i)].subdivision[static_cast<std::size_t>(e)])
        if (se.is_circle()) s += se.length;
    return s;
}

// ht(e') / |e'| maximised over a 1/64 grid of the subedge, distances from Dijkstra at level i+1.
Rational grid_height_ratio(const InverseSystem& sys, int i, const SubEdge& s) {
    const MetricGraph& g = sys.graph(i + 1);
    Dyadic best = 0;
    for (int k = 0; k <= 64; ++k) {
        Dyadic t = s.length * Dyadic::from_parts(k, 6);
        best = max(best, shortest_path_distance(g, {s.primary, t}, {s.opposite, t}));
    }
    return best.to_mpq() / s.length.to_mpq();
}

}  // namespace

TEST_CASE("Laakso builder geometry") {
    InverseSystem l0 = build_laakso(0);
    CHECK(l0.top() == 0);
    CHECK(l0.graph(0).num_edges() == 1);

    InverseSystem l1 = build_laakso(1);
    const MetricGraph& g1 = l1.graph(1);
    REQUIRE(g1.num_edges() == 4);
    CHECK(g1.num_vertices() == 4);
    int quarters = 0, arcs = 0;
    for (const Edge& e : g1.edges()) {
        if (e.length == Dyadic::pow2(2)) {
            ++quarters;
            CHECK(g1.edge_measure(e.id) == Dyadic::pow2(2));
        } else if (e.length == Dyadic::pow2(1)) {
            ++arcs;
            CHECK(g1.edge_measure(e.id) == Dyadic::pow2(2));
        }
    }
    CHECK(quarters == 2);
    CHECK(arcs == 2);

    InverseSystem l3 = build_laakso(3);
    long long edges = 1, vertices = 2;
    for (int i = 0; i <= 3; ++i) {
        CHECK(l3.graph(i).num_edges() == edges);
        CHECK(l3.graph(i).num_vertices() == vertices);
        CHECK(l3.graph(i).total_measure() == Dyadic(1));
        vertices += 2 * edges;
        edges *= 4;
    }
}

TEST_CASE("Laakso pushforward is exact") {
    InverseSystem l = build_laakso(5);
    for (int i = 0; i < 5; ++i) {
        PushforwardReport r = pushforward_check(l, i);
        CHECK(r.ok);
        CHECK(r.discrepancies.empty());
    }
    // circle subedge of X_0': mu_0(e') = 1/2 splits as 1/4 + 1/4
    const SubEdge& s = l.subedge(0, 0, 1);
    REQUIRE(s.is_circle());
    CHECK(l.graph(1).edge_measure(s.primary) == Dyadic::pow2(2));
    CHECK(l.graph(1).edge_measure(s.opposite) == Dyadic::pow2(2));
}

TEST_CASE("Laakso axioms agree with path enumeration and grid heights") {
    InverseSystem l = build_laakso(3);
    AxiomReport rep = check_axioms(l);
    CHECK(rep.pass());
    REQUIRE(rep.achieved_alpha);
    REQUIRE(rep.achieved_beta);
    CHECK(*rep.achieved_alpha == 1);
    CHECK(*rep.achieved_beta == Dyadic::pow2(1));

    for (int i = 0; i <= 2; ++i) {
        // beta: minimum circle length over directed 0-1 paths
        const MetricGraph& g = l.graph(i);
        std::vector<std::vector<EdgeId>> paths;
        std::vector<EdgeId> cur;
        all_paths(g, zero_vertex(l, i), one_vertex(l, i), cur, paths);
        std::optional<Dyadic> beta;
        for (const auto& p : paths) {
            Dyadic c = 0;
            for (EdgeId e : p) c += circle_length(l, i, e);
            if (!beta || c < *beta) beta = c;
        }
        CHECK(*beta == Dyadic::pow2(1));
        CHECK(min_circle_length(l, i) == *beta);
        // alpha: heights on a grid of every circle subedge
        std::optional<Rational> alpha;
        for (EdgeId e = 0; e < g.num_edges(); ++e)
            for (const SubEdge& s : l.levels[static_cast<std::size_t>(i)].subdivision[static_cast<std::size_t>(e)])
                if (s.is_circle()) {
                    Rational r = grid_height_ratio(l, i, s);
                    if (!alpha || r < *alpha) alpha = r;
                }
        CHECK(*alpha == 1);
    }
}

TEST_CASE("a circle marked terminal is reported") {
    InverseSystem l = build_laakso(1);
    l.levels[0].subdivision[0][0].opposite = l.levels[0].subdivision[0][1].opposite;
    l.levels[0].subdivision[0][1].opposite = l.levels[0].subdivision[0][1].primary;
    bool rejected = false;
    try {
        l.rebuild_lifts();
        AxiomReport r = check_axioms(l);
        rejected = !r.pass();
        bool named = false;
        for (const auto& a : r.results)
            if (!a.pass && a.id.rfind("A2", 0) == 0) named = true;
        CHECK(named);
    } catch (const SystemError&) {
        rejected = true;
    }
    CHECK(rejected);
}

TEST_CASE("deltas") {
    InverseSystem l = build_laakso(2);
    DeltaReport d0 = compute_deltas(l, 0);
    CHECK(d0.delta_E == Rational(1, 2));
    CHECK(d0.delta_d == 0);  // a single edge has no complement
    CHECK_FALSE(d0.Delta_d.has_value());

    // uniform 2^m-fold subdivision of the unit edge
    for (int m = 1; m <= 4; ++m) {
        InverseSystem s;
        Level a, b;
        a.graph.add_vertex();
        a.graph.add_vertex();
        a.graph.add_edge(0, 1, Dyadic(1), Dyadic(1));
        const int n = 1 << m;
        for (int k = 0; k <= n; ++k) b.graph.add_vertex();
        std::vector<SubEdge> row;
        for (int k = 0; k < n; ++k) {
            VertexId src = k == 0 ? 0 : k + 1;
            VertexId dst = k == n - 1 ? 1 : k + 2;
            EdgeId e = b.graph.add_edge(src, dst, Dyadic::pow2(m), Dyadic(1));
            row.push_back({Dyadic::pow2(m) * Dyadic(k), Dyadic::pow2(m), k == 0 || k == n - 1, e, e});
        }
        a.subdivision.push_back(row);
        s.levels.push_back(std::move(a));
        s.levels.push_back(std::move(b));
        s.rebuild_lifts();
        CHECK(compute_deltas(s, 0).delta_E == Rational(1, n));
    }
}

TEST_CASE("Laakso projections are 1-Lipschitz and isometric on directed paths") {
    InverseSystem l = build_laakso(3);
    for (int j = 1; j <= 3; ++j) {
        auto pairs = all_vertex_pairs(l.graph(j));
        for (int i = 0; i < j; ++i) CHECK(lip_bound_check(l, i, j, pairs).max_ratio == 1);
    }
    // points on one directed path keep their distance
    const MetricGraph& g = l.graph(3);
    std::mt19937_64 rng(3);
    std::vector<std::vector<EdgeId>> paths;
    std::vector<EdgeId> cur;
    all_paths(g, zero_vertex(l, 3), one_vertex(l, 3), cur, paths);
    for (int s = 0; s < 50; ++s) {
        const auto& p = paths[rng() % paths.size()];
        EdgeId a = p[rng() % p.size()], b = p[rng() % p.size()];
        GraphPoint x{a, g.edge(a).length.half()}, y{b, g.edge(b).length.half()};
        if (a == b) continue;
        for (int i = 0; i < 3; ++i) {
            auto r = lip_bound_check(l, i, 3, {{x, y}});
            CHECK(r.max_ratio == 1);
        }
    }
}

TEST_CASE("projection, fibers and fiber measures on L_1") {
    InverseSystem l = build_laakso(1);
    const SubEdge& s = l.subedge(0, 0, 1);
    GraphPoint mid_op{s.opposite, Dyadic::pow2(2)};
    GraphPoint p = project(l, 0, 1, mid_op);
    CHECK(p.edge == 0);
    CHECK(p.offset == Dyadic::pow2(1));
    CHECK(project(l, 1, 1, mid_op) == canonical(l.graph(1), mid_op));
    for (VertexId v = 0; v < l.graph(0).num_vertices(); ++v) {
        GraphPoint up = embed(l, 0, 1, vertex_point(l.graph(0), v));
        CHECK(project(l, 0, 1, up) == vertex_point(l.graph(0), v));
    }

    FiberMeasure fm = fiber_measure(l, 0, GraphPoint{0, Dyadic::pow2(1)}, 1);
    REQUIRE(fm.size() == 2);
    CHECK(fm[0].mass == Dyadic::pow2(1));
    CHECK(fm[1].mass == Dyadic::pow2(1));
    FiberMeasure atom = fiber_measure(l, 0, GraphPoint{0, Dyadic(0)}, 1);
    REQUIRE(atom.size() == 1);
    CHECK(atom[0].mass == Dyadic(1));

    // the arc subdivision scale bounds the fiber diameter ratio
    FiberDiameterReport fd = fiber_diameter_check(l, 0, 1, subdivision_points(l, 0));
    CHECK(fd.max_ratio == Rational(1, 2));
}

TEST_CASE("deep points, circle sets and path disintegrations") {
    InverseSystem l = build_laakso(3);
    DeepPointReport d = deep_point_report(l, 3);
    for (const Dyadic& m : d.terminal_measure) CHECK(m == Dyadic::pow2(1));
    for (int i = 0; i < 3; ++i) {
        Dyadic c = circle_set_measure(l, i);
        CHECK(c == Dyadic::pow2(1));
        PathMeasure pm = alberti_representation(l, i);
        Dyadic total = 0;
        for (const auto& w : pm) total += w.probability;
        CHECK(total == Dyadic(1));
        SegmentSet circles;
        for (EdgeId e = 0; e < l.graph(i).num_edges(); ++e)
            for (const SubEdge& s : l.levels[static_cast<std::size_t>(i)].subdivision[static_cast<std::size_t>(e)])
                if (s.is_circle()) circles.add(e, s.start, s.start + s.length);
        circles.normalize();
        CHECK(alberti_measure(l, i, pm, circles) == c);
    }
    PathMeasure p0 = alberti_representation(l, 0);
    REQUIRE(p0.size() == 1);
    CHECK(p0[0].probability == Dyadic(1));
}

TEST_CASE("rescaled ball on a Laakso circle") {
    InverseSystem l = build_laakso(2);
    const SubEdge& s = l.subedge(0, 0, 1);
    GraphPoint x = embed(l, 1, 2, GraphPoint{s.primary, Dyadic::pow2(2)});
    RescaledBall b = rescaled_ball(l, 2, x, 1, Dyadic(1));
    CHECK(b.scale == Dyadic::pow2(1));
    REQUIRE(b.normalized_opposite_distance);
    CHECK(*b.normalized_opposite_distance == 1);
}

TEST_CASE("system JSON, DOT and CSV exports") {
    InverseSystem l = build_laakso(2);
    Json j = system_to_json(l);
    InverseSystem back = system_from_json(Json::parse(j.dump()));
    CHECK(structurally_equal(l, back));
    CHECK(system_to_json(back).dump() == j.dump());

    InverseSystem l1 = build_laakso(1);
    std::ostringstream dot;
    export_dot(dot, l1, 1);
    int edge_lines = 0, vertex_lines = 0;
    std::istringstream in(dot.str());
    for (std::string line; std::getline(in, line);) {
        if (line.find("->") != std::string::npos) ++edge_lines;
        else if (line.rfind("  v", 0) == 0) ++vertex_lines;
    }
    CHECK(edge_lines == 4);
    CHECK(vertex_lines == 4);

    std::ostringstream csv;
    export_constants_csv(csv, l);
    std::istringstream cin(csv.str());
    std::string header;
    std::getline(cin, header);
    CHECK(header == "level,deltaE,deltad,deltaPrime,alpha,beta,L");
    std::string row0;
    std::getline(cin, row0);
    CHECK(row0.rfind("0,1/2,0,", 0) == 0);

    std::ostringstream edges;
    export_edges_csv(edges, l);
    int rows = -1;
    std::istringstream ein(edges.str());
    for (std::string line; std::getline(ein, line);) ++rows;
    CHECK(rows == 1 + 4 + 16);
}

TEST_CASE("malformed system JSON is rejected with a named cause") {
    CHECK_THROWS_AS(system_from_json(Json::parse(R"({"levels": []})")), FormatError);
    Json j = system_to_json(build_laakso(1));
    j["subdivisions"][0][0][1]["opposite"] = 99;
    CHECK_THROWS(system_from_json(j));
    j = system_to_json(build_laakso(1));
    j["levels"][0]["edges"][0]["length"] = "1/3";
    CHECK_THROWS(system_from_json(j));
}

TEST_CASE("edge budget") {
    setenv("INVSYS_EDGE_BUDGET", "100", 1);
    CHECK_THROWS_AS(build_laakso(4), BudgetError);
    unsetenv("INVSYS_EDGE_BUDGET");
    CHECK_NOTHROW(build_laakso(4));
}

TEST_CASE("host oracle deviation and thickness") {
    LaaksoOracle host(3);
    Member gamma;
    Partition ends{{Dyadic(0), Dyadic(1)}};
    CHECK(deviation(host, gamma, gamma, ends).total == Dyadic(0));
    DeviationRecord r = deviation(host, gamma, gamma.with_flip(""), ends);
    CHECK(r.total == Dyadic::pow2(1));
    // refining the partition at points where the curves agree never lowers the deviation
    Member other = gamma.with_flip("").with_flip("0L");
    Partition fine{{Dyadic(0), Dyadic::pow2(2), Dyadic::from_parts(3, 2), Dyadic(1)}};
    CHECK(deviation(host, gamma, other, fine).total >= deviation(host, gamma, other, ends).total);

    LaaksoOracle thin(3, false);
    DeviationRecord z = select_sup2(thin, HostSegment{gamma, Dyadic(0), Dyadic(1)}, ends);
    CHECK(z.total == Dyadic(0));
    DeviationRecord best = select_sup2(host, HostSegment{gamma, Dyadic(0), Dyadic(1)}, ends);
    CHECK(best.gamma_tilde.bit(""));
    CHECK(deviation(host, gamma, best.gamma_tilde, ends).total == Dyadic::pow2(1));
}

TEST_CASE("small thick system satisfies the axioms and its delta targets") {
    LaaksoOracle host(6);
    std::vector<Dyadic> dp{Dyadic::pow2(3)};
    ThickBuildReport rep;
    InverseSystem s = build_thick_system(host, dp, 2, &rep);
    CHECK_THROWS_AS(build_thick_system(LaaksoOracle(3), {Dyadic::pow2(3), Dyadic::pow2(4)}, 3), PreconditionError);
    AxiomReport a = check_axioms(s);
    CHECK(a.pass());
    REQUIRE(s.constants.alpha);
    REQUIRE(s.constants.beta);
    CHECK(*s.constants.alpha == rep.alpha_prime.to_mpq() / 4);
    CHECK(*s.constants.beta == rep.alpha_prime.to_mpq() / 8);
    for (int i = 0; i < s.top(); ++i) {
        DeltaReport d = compute_deltas(s, i);
        CHECK(d.delta_E <= dp[static_cast<std::size_t>(i)].to_mpq());
        CHECK(d.delta_d <= dp[static_cast<std::size_t>(i)].to_mpq());
        CHECK(pushforward_check(s, i).ok);
    }

    LaaksoOracle flat(3, false);
    InverseSystem f = build_thick_system(flat, {Dyadic::pow2(3)}, 2);
    CHECK_FALSE(check_axioms(f).pass());
}
