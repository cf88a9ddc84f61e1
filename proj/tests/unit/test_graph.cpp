// SPDX-License-Identifier: MIT
#include "doctest.h"

#include <map>
#include <random>

#include "invsys/builders.hpp"
#include "invsys/graph.hpp"

using namespace invsys;

namespace {

// Floyd-Warshall on the graph with every edge cut at multiples of `step`.
struct GridOracle {
    std::map<std::pair<EdgeId, Dyadic>, int> node;
    std::vector<std::vector<std::optional<Dyadic>>> d;

    GridOracle(const MetricGraph& g, const Dyadic& step) {
        auto vertex_node = [&](VertexId v) { return v; };
        int next = g.num_vertices();
        std::vector<std::tuple<int, int, Dyadic>> links;
        for (const Edge& e : g.edges()) {
            int prev = vertex_node(e.src);
            node[{e.id, Dyadic(0)}] = prev;
            for (Dyadic t = step; t < e.length; t += step) {
                node[{e.id, t}] = next;
                links.emplace_back(prev, next, step);
                prev = next++;
            }
            node[{e.id, e.length}] = vertex_node(e.dst);
            links.emplace_back(prev, vertex_node(e.dst), step);
        }
        d.assign(static_cast<std::size_t>(next), std::vector<std::optional<Dyadic>>(static_cast<std::size_t>(next)));
        for (int k = 0; k < next; ++k) d[k][k] = Dyadic(0);
        for (auto& [a, b, w] : links) {
            if (!d[a][b] || w < *d[a][b]) d[a][b] = d[b][a] = w;
        }
        for (int k = 0; k < next; ++k)
            for (int i = 0; i < next; ++i) {
                if (!d[i][k]) continue;
                for (int j = 0; j < next; ++j) {
                    if (!d[k][j]) continue;
                    Dyadic via = *d[i][k] + *d[k][j];
                    if (!d[i][j] || via < *d[i][j]) d[i][j] = via;
                }
            }
    }
    Dyadic dist(const GraphPoint& p, const GraphPoint& q) const {
        return *d[node.at({p.edge, p.offset})][node.at({q.edge, q.offset})];
    }
};

std::vector<GraphPoint> grid_points(const MetricGraph& g, const Dyadic& step) {
    std::vector<GraphPoint> out;
    for (const Edge& e : g.edges())
        for (Dyadic t = 0; t <= e.length; t += step) out.push_back({e.id, t});
    return out;
}

// Length of {t in [0, L] : min(da + t, db + L - t, |t - c| if on the edge) <= r}.
Dyadic ball_length_on_edge(const Dyadic& L, std::optional<Dyadic> da, std::optional<Dyadic> db,
                           std::optional<Dyadic> c, const Dyadic& r) {
    std::vector<std::pair<Dyadic, Dyadic>> iv;
    auto clip = [&](Dyadic a, Dyadic b) {
        a = max(a, Dyadic(0));
        b = min(b, L);
        if (a <= b) iv.emplace_back(a, b);
    };
    if (da && *da <= r) clip(Dyadic(0), r - *da);
    if (db && *db <= r) clip(L - (r - *db), L);
    if (c) clip(*c - r, *c + r);
    std::sort(iv.begin(), iv.end());
    Dyadic total = 0, reach = 0;
    bool any = false;
    for (auto [a, b] : iv) {
        if (!any || a > reach) {
            total += b - a;
            reach = b;
            any = true;
        } else if (b > reach) {
            total += b - reach;
            reach = b;
        }
    }
    return total;
}

}  // namespace

TEST_CASE("distance examples on L_0 and L_1") {
    InverseSystem l1 = build_laakso(1);
    const MetricGraph& g0 = l1.graph(0);
    CHECK(shortest_path_distance(g0, {0, Dyadic(0)}, {0, Dyadic(1)}) == Dyadic(1));
    CHECK(shortest_path_distance(g0, {0, Dyadic::from_parts(1, 3)}, {0, Dyadic::from_parts(5, 3)}) ==
          Dyadic::from_parts(1, 1));
    // the two arcs of L_1 have length 1/2; their midpoints are 1/2 apart
    const MetricGraph& g1 = l1.graph(1);
    std::vector<EdgeId> arcs;
    for (const Edge& e : g1.edges())
        if (e.length == Dyadic::pow2(1)) arcs.push_back(e.id);
    REQUIRE(arcs.size() == 2);
    CHECK(shortest_path_distance(g1, {arcs[0], Dyadic::pow2(2)}, {arcs[1], Dyadic::pow2(2)}) == Dyadic::pow2(1));
}

TEST_CASE("shortest path distances match a Floyd-Warshall grid oracle") {
    InverseSystem l = build_laakso(2);
    for (int level : {1, 2}) {
        const MetricGraph& g = l.graph(level);
        const Dyadic step = Dyadic::pow2(level == 1 ? 4 : 5);
        GridOracle oracle(g, step);
        auto pts = grid_points(g, step);
        std::mt19937_64 rng(7);
        for (int s = 0; s < 400; ++s) {
            const GraphPoint& p = pts[rng() % pts.size()];
            const GraphPoint& q = pts[rng() % pts.size()];
            CHECK(shortest_path_distance(g, p, q) == oracle.dist(p, q));
        }
    }
}

TEST_CASE("ball and measure examples") {
    InverseSystem l1 = build_laakso(1);
    const MetricGraph& g0 = l1.graph(0);
    const MetricGraph& g1 = l1.graph(1);
    CHECK(measure(g0, full_set(g0)) == Dyadic(1));
    CHECK(measure(g1, full_set(g1)) == Dyadic(1));

    // r = 0 gives the center alone
    SegmentSet z = ball(g0, GraphPoint{0, Dyadic::pow2(1)}, Dyadic(0));
    CHECK(z.length() == Dyadic(0));
    CHECK(z.contains(GraphPoint{0, Dyadic::pow2(1)}));

    // interior point, small radius
    SegmentSet b = ball(g0, GraphPoint{0, Dyadic::pow2(1)}, Dyadic::pow2(3));
    REQUIRE(b.pieces().size() == 1);
    CHECK(b.length() == Dyadic::pow2(2));

    // weight 1/2 edge of length 1/2: half of it has measure 1/8
    MetricGraph h;
    VertexId a = h.add_vertex(), c = h.add_vertex();
    EdgeId e = h.add_edge(a, c, Dyadic::pow2(1), Dyadic::pow2(1));
    SegmentSet half;
    half.add(e, Dyadic(0), Dyadic::pow2(2));
    CHECK(measure(h, half) == Dyadic::pow2(3));

    // circle source vertex of L_1, r = 1/8: two arcs and the terminal edge
    VertexId src = -1;
    for (const Edge& ed : g1.edges())
        if (ed.length == Dyadic::pow2(1)) src = ed.src;
    SegmentSet s = ball(g1, vertex_point(g1, src), Dyadic::pow2(3));
    s.normalize();
    CHECK(s.pieces().size() == 3);
    for (const auto& [edge, iv] : s.pieces()) CHECK(iv.b - iv.a == Dyadic::pow2(3));
}

TEST_CASE("ball lengths match the per-edge distance formula") {
    InverseSystem l = build_laakso(2);
    const MetricGraph& g = l.graph(2);
    std::mt19937_64 rng(11);
    for (int s = 0; s < 60; ++s) {
        GraphPoint c{static_cast<EdgeId>(rng() % g.num_edges()), Dyadic(0)};
        c.offset = g.edge(c.edge).length * Dyadic::from_parts(static_cast<long long>(rng() % 9), 3);
        Dyadic r = Dyadic::from_parts(static_cast<long long>(1 + rng() % 40), 6);
        DistanceField f = distances_from(g, c);
        Dyadic expect = 0;
        for (const Edge& e : g.edges()) {
            std::optional<Dyadic> on;
            if (e.id == c.edge) on = c.offset;
            expect += ball_length_on_edge(e.length, f.dist[e.src], f.dist[e.dst], on, r);
        }
        CHECK(ball(g, c, r).length() == expect);
    }
}

TEST_CASE("doubling ratio examples") {
    MetricGraph g;
    VertexId a = g.add_vertex(), b = g.add_vertex();
    g.add_edge(a, b, Dyadic(1), Dyadic(1));
    DoublingReport r = doubling_ratio(g, full_set(g), {GraphPoint{0, Dyadic::pow2(1)}}, {Dyadic::pow2(3)});
    CHECK(r.max_ratio == 2);

    // two circles sharing a vertex, radius at most the arc length
    InverseSystem l = build_laakso(2);
    const MetricGraph& g2 = l.graph(2);
    std::vector<GraphPoint> centers;
    for (VertexId v = 0; v < g2.num_vertices(); ++v) centers.push_back(vertex_point(g2, v));
    std::vector<Dyadic> radii{Dyadic::pow2(3), Dyadic::pow2(4), Dyadic::pow2(5)};
    CHECK(doubling_ratio(g2, full_set(g2), centers, radii).max_ratio <= 8);
}

TEST_CASE("segment set algebra") {
    SegmentSet a, b;
    a.add(0, Dyadic(0), Dyadic::pow2(1));
    a.add(0, Dyadic::pow2(2), Dyadic(1));
    a.normalize();
    CHECK(a.pieces().size() == 1);
    CHECK(a.length() == Dyadic(1));
    b.add(0, Dyadic::pow2(1), Dyadic(2));
    b.add(1, Dyadic(0), Dyadic(1));
    b.normalize();
    CHECK(a.intersect(b).length() == Dyadic::pow2(1));
    CHECK(a.unite(b).length() == Dyadic(3));
    CHECK(a.intersect(b).subset_of(a));
    CHECK_FALSE(b.subset_of(a));
}
