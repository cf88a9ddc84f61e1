// SPDX-License-Identifier: MIT
#include "invsys/graph.hpp"

#include <algorithm>
#include <queue>
#include <tuple>

namespace invsys {

VertexId MetricGraph::add_vertex() {
    out_.emplace_back();
    in_.emplace_back();
    return static_cast<VertexId>(out_.size() - 1);
}

EdgeId MetricGraph::add_edge(VertexId src, VertexId dst, Dyadic length, Dyadic weight) {
    if (src < 0 || dst < 0 || src >= num_vertices() || dst >= num_vertices())
        throw GraphError("add_edge: endpoint out of range");
    if (length.sign() <= 0) throw GraphError("add_edge: edge length must be positive");
    Edge e;
    e.id = static_cast<EdgeId>(edges_.size());
    e.src = src;
    e.dst = dst;
    e.length = length;
    e.weight = weight;
    edges_.push_back(e);
    out_[static_cast<std::size_t>(src)].push_back(e.id);
    in_[static_cast<std::size_t>(dst)].push_back(e.id);
    return e.id;
}

Dyadic MetricGraph::total_measure() const {
    Dyadic s;
    for (const auto& e : edges_) s += e.weight * e.length;
    return s;
}

Dyadic MetricGraph::total_length() const {
    Dyadic s;
    for (const auto& e : edges_) s += e.length;
    return s;
}

void MetricGraph::validate() const {
    for (const auto& e : edges_) {
        if (e.length.sign() <= 0)
            throw GraphError("edge " + std::to_string(e.id) + " has non-positive length");
        if (e.weight.sign() < 0)
            throw GraphError("edge " + std::to_string(e.id) + " has negative weight");
    }
    if (num_vertices() == 0) return;
    std::vector<char> seen(static_cast<std::size_t>(num_vertices()), 0);
    std::vector<VertexId> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
        VertexId v = stack.back();
        stack.pop_back();
        auto visit = [&](VertexId w) {
            if (!seen[static_cast<std::size_t>(w)]) {
                seen[static_cast<std::size_t>(w)] = 1;
                stack.push_back(w);
            }
        };
        for (EdgeId e : out_edges(v)) visit(edge(e).dst);
        for (EdgeId e : in_edges(v)) visit(edge(e).src);
    }
    for (std::size_t v = 0; v < seen.size(); ++v)
        if (!seen[v]) throw GraphError("graph is disconnected at vertex " + std::to_string(v));
}

void check_point(const MetricGraph& g, const GraphPoint& p) {
    if (p.edge < 0 || p.edge >= g.num_edges()) throw GraphError("point on unknown edge");
    if (p.offset.sign() < 0 || p.offset > g.edge(p.edge).length)
        throw GraphError("point offset outside edge " + std::to_string(p.edge));
}

std::optional<VertexId> point_vertex(const MetricGraph& g, const GraphPoint& p) {
    const Edge& e = g.edge(p.edge);
    if (p.offset.is_zero()) return e.src;
    if (p.offset == e.length) return e.dst;
    return std::nullopt;
}

GraphPoint vertex_point(const MetricGraph& g, VertexId v) {
    EdgeId best = -1;
    for (EdgeId e : g.out_edges(v)) best = (best < 0 || e < best) ? e : best;
    for (EdgeId e : g.in_edges(v)) best = (best < 0 || e < best) ? e : best;
    if (best < 0) throw GraphError("isolated vertex " + std::to_string(v));
    const Edge& e = g.edge(best);
    return e.src == v ? GraphPoint{best, Dyadic()} : GraphPoint{best, e.length};
}

GraphPoint canonical(const MetricGraph& g, const GraphPoint& p) {
    check_point(g, p);
    if (auto v = point_vertex(g, p)) return vertex_point(g, *v);
    return p;
}

void SegmentSet::add(EdgeId e, Dyadic a, Dyadic b) {
    if (b < a) std::swap(a, b);
    pieces_.push_back({e, Interval{a, b}});
}

void SegmentSet::normalize() {
    std::sort(pieces_.begin(), pieces_.end(), [](const auto& x, const auto& y) {
        return std::tie(x.first, x.second.a, x.second.b) < std::tie(y.first, y.second.a, y.second.b);
    });
    std::vector<std::pair<EdgeId, Interval>> out;
    for (const auto& p : pieces_) {
        if (!out.empty() && out.back().first == p.first && p.second.a <= out.back().second.b) {
            out.back().second.b = max(out.back().second.b, p.second.b);
        } else {
            out.push_back(p);
        }
    }
    pieces_ = std::move(out);
}

SegmentSet SegmentSet::intersect(const SegmentSet& o) const {
    SegmentSet r;
    std::size_t i = 0, j = 0;
    while (i < pieces_.size() && j < o.pieces_.size()) {
        const auto& x = pieces_[i];
        const auto& y = o.pieces_[j];
        if (x.first < y.first) {
            ++i;
            continue;
        }
        if (y.first < x.first) {
            ++j;
            continue;
        }
        Dyadic a = max(x.second.a, y.second.a);
        Dyadic b = min(x.second.b, y.second.b);
        if (a <= b) r.pieces_.push_back({x.first, Interval{a, b}});
        if (x.second.b < y.second.b)
            ++i;
        else
            ++j;
    }
    r.normalize();
    return r;
}

SegmentSet SegmentSet::unite(const SegmentSet& o) const {
    SegmentSet r = *this;
    r.pieces_.insert(r.pieces_.end(), o.pieces_.begin(), o.pieces_.end());
    r.normalize();
    return r;
}

bool SegmentSet::subset_of(const SegmentSet& o) const {
    for (const auto& [e, iv] : pieces_) {
        bool covered = false;
        for (const auto& [f, jv] : o.pieces_)
            if (f == e && jv.a <= iv.a && iv.b <= jv.b) {
                covered = true;
                break;
            }
        if (!covered) return false;
    }
    return true;
}

bool SegmentSet::contains(const GraphPoint& p) const {
    for (const auto& [e, iv] : pieces_)
        if (e == p.edge && iv.a <= p.offset && p.offset <= iv.b) return true;
    return false;
}

Dyadic SegmentSet::length() const {
    Dyadic s;
    for (const auto& [e, iv] : pieces_) s += iv.b - iv.a;
    return s;
}

SegmentSet full_set(const MetricGraph& g) {
    SegmentSet s;
    for (const auto& e : g.edges()) s.add(e.id, Dyadic(), e.length);
    s.normalize();
    return s;
}

DistanceField distances_from(const MetricGraph& g, const GraphPoint& p) {
    check_point(g, p);
    DistanceField f;
    f.source = p;
    auto n = static_cast<std::size_t>(g.num_vertices());
    f.dist.assign(n, std::nullopt);
    f.pred_edge.assign(n, -1);
    using Item = std::pair<Dyadic, VertexId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    auto relax = [&](VertexId v, const Dyadic& d, EdgeId via) {
        auto& cur = f.dist[static_cast<std::size_t>(v)];
        auto& pe = f.pred_edge[static_cast<std::size_t>(v)];
        if (!cur || d < *cur || (d == *cur && via < pe)) {
            bool improved = !cur || d < *cur;
            cur = d;
            pe = via;
            if (improved) pq.push({d, v});
        }
    };
    const Edge& se = g.edge(p.edge);
    relax(se.src, p.offset, p.edge);
    relax(se.dst, se.length - p.offset, p.edge);
    std::vector<char> done(n, 0);
    while (!pq.empty()) {
        auto [d, v] = pq.top();
        pq.pop();
        auto vi = static_cast<std::size_t>(v);
        if (done[vi] || d != *f.dist[vi]) continue;
        done[vi] = 1;
        for (EdgeId e : g.out_edges(v)) relax(g.edge(e).dst, d + g.edge(e).length, e);
        for (EdgeId e : g.in_edges(v)) relax(g.edge(e).src, d + g.edge(e).length, e);
    }
    return f;
}

std::optional<Dyadic> distance_to(const MetricGraph& g, const DistanceField& f, const GraphPoint& q) {
    check_point(g, q);
    std::optional<Dyadic> best;
    auto take = [&](const Dyadic& d) {
        if (!best || d < *best) best = d;
    };
    if (q.edge == f.source.edge) take((q.offset - f.source.offset).abs());
    const Edge& e = g.edge(q.edge);
    if (auto& ds = f.dist[static_cast<std::size_t>(e.src)]) take(*ds + q.offset);
    if (auto& dd = f.dist[static_cast<std::size_t>(e.dst)]) take(*dd + (e.length - q.offset));
    return best;
}

Dyadic shortest_path_distance(const MetricGraph& g, const GraphPoint& p, const GraphPoint& q) {
    auto f = distances_from(g, p);
    auto d = distance_to(g, f, q);
    if (!d) throw GraphError("unreachable: points lie in different components");
    return *d;
}

namespace {

// Append the vertex-to-source part of a shortest path ending at v.
void trace_back(const MetricGraph& g, const DistanceField& f, VertexId v, SegmentSet& out) {
    int guard = g.num_vertices() + 2;
    while (guard-- > 0) {
        EdgeId pe = f.pred_edge[static_cast<std::size_t>(v)];
        const Edge& e = g.edge(pe);
        if (pe == f.source.edge) {
            // Reached from the source point along its own edge.
            if (v == e.src && *f.dist[static_cast<std::size_t>(v)] == f.source.offset) {
                out.add(pe, Dyadic(), f.source.offset);
                return;
            }
            if (v == e.dst && *f.dist[static_cast<std::size_t>(v)] == e.length - f.source.offset) {
                out.add(pe, f.source.offset, e.length);
                return;
            }
        }
        out.add(pe, Dyadic(), e.length);
        v = (e.dst == v) ? e.src : e.dst;
    }
    throw GraphError("shortest_path: predecessor cycle");
}

}  // namespace

Geodesic shortest_path(const MetricGraph& g, const DistanceField& f, const GraphPoint& q) {
    auto d = distance_to(g, f, q);
    if (!d) throw GraphError("unreachable: points lie in different components");
    Geodesic r;
    r.length = *d;
    const Edge& e = g.edge(q.edge);
    // Prefer the direct route on a shared edge, then the source endpoint, then the sink.
    if (q.edge == f.source.edge && (q.offset - f.source.offset).abs() == *d) {
        r.path.add(q.edge, min(q.offset, f.source.offset), max(q.offset, f.source.offset));
    } else if (auto& ds = f.dist[static_cast<std::size_t>(e.src)]; ds && *ds + q.offset == *d) {
        if (q.offset.sign() > 0) r.path.add(q.edge, Dyadic(), q.offset);
        trace_back(g, f, e.src, r.path);
    } else {
        if (q.offset < e.length) r.path.add(q.edge, q.offset, e.length);
        trace_back(g, f, e.dst, r.path);
    }
    r.path.normalize();
    return r;
}

Geodesic shortest_path(const MetricGraph& g, const GraphPoint& p, const GraphPoint& q) {
    return shortest_path(g, distances_from(g, p), q);
}

SegmentSet ball(const MetricGraph& g, const DistanceField& f, const Dyadic& r) {
    SegmentSet s;
    for (const auto& e : g.edges()) {
        const Dyadic& len = e.length;
        if (e.id == f.source.edge) {
            Dyadic a = max(Dyadic(), f.source.offset - r);
            Dyadic b = min(len, f.source.offset + r);
            s.add(e.id, a, b);
        }
        if (auto& du = f.dist[static_cast<std::size_t>(e.src)]; du && *du <= r)
            s.add(e.id, Dyadic(), min(len, r - *du));
        if (auto& dv = f.dist[static_cast<std::size_t>(e.dst)]; dv && *dv <= r)
            s.add(e.id, max(Dyadic(), len - (r - *dv)), len);
    }
    s.normalize();
    return s;
}

SegmentSet ball(const MetricGraph& g, const GraphPoint& center, const Dyadic& r) {
    if (r.sign() < 0) throw GraphError("ball: negative radius");
    return ball(g, distances_from(g, center), r);
}

Dyadic measure(const MetricGraph& g, const SegmentSet& s) {
    Dyadic m;
    for (const auto& [e, iv] : s.pieces()) m += g.edge(e).weight * (iv.b - iv.a);
    return m;
}

DoublingReport doubling_ratio(const MetricGraph& g, const SegmentSet& restriction,
                              const std::vector<GraphPoint>& centers,
                              const std::vector<Dyadic>& radii) {
    DoublingReport rep;
    for (const auto& c : centers) {
        if (!restriction.contains(c)) throw GraphError("doubling_ratio: center outside restriction");
        auto f = distances_from(g, c);
        for (const auto& r : radii) {
            Dyadic small = measure(g, ball(g, f, r).intersect(restriction));
            if (small.is_zero()) {
                ++rep.skipped;
                continue;
            }
            Dyadic big = measure(g, ball(g, f, r.ldexp(1)).intersect(restriction));
            Rational q = big.to_mpq() / small.to_mpq();
            ++rep.evaluated;
            if (q > rep.max_ratio) {
                rep.max_ratio = q;
                rep.argmax_center = c;
                rep.argmax_radius = r;
            }
        }
    }
    return rep;
}

}  // namespace invsys
