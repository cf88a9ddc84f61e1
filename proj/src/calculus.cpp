// SPDX-License-Identifier: MIT

#include "invsys/calculus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "invsys/builders.hpp"

namespace invsys {

namespace {

Rational q(const Dyadic& d) { return d.to_mpq(); }

Vec zero_vec(int k) { return Vec(static_cast<std::size_t>(k), Rational(0)); }

Vec add(const Vec& a, const Vec& b) {
    Vec r(a.size());
    for (std::size_t c = 0; c < a.size(); ++c) r[c] = a[c] + b[c];
    return r;
}

Vec sub(const Vec& a, const Vec& b) {
    Vec r(a.size());
    for (std::size_t c = 0; c < a.size(); ++c) r[c] = a[c] - b[c];
    return r;
}

Vec scale(const Vec& a, const Rational& s) {
    Vec r(a.size());
    for (std::size_t c = 0; c < a.size(); ++c) r[c] = a[c] * s;
    return r;
}

Vec average(const Vec& a, const Vec& b) { return scale(add(a, b), Rational(1, 2)); }

Vec lerp(const Knot& a, const Knot& b, const Rational& t) {
    if (t == a.t) return a.v;
    if (t == b.t) return b.v;
    Rational s = (t - a.t) / (b.t - a.t);
    Vec r(a.v.size());
    for (std::size_t c = 0; c < a.v.size(); ++c) r[c] = a.v[c] + (b.v[c] - a.v[c]) * s;
    return r;
}

Vec eval_knots(const std::vector<Knot>& ks, const Rational& t) {
    if (ks.empty()) throw std::invalid_argument("edge without knots");
    if (t <= ks.front().t) return ks.front().v;
    if (t >= ks.back().t) return ks.back().v;
    auto it = std::upper_bound(ks.begin(), ks.end(), t, [](const Rational& x, const Knot& k) { return x < k.t; });
    const Knot& b = *it;
    const Knot& a = *(it - 1);
    return lerp(a, b, t);
}

// Knots of ks restricted to [a, b], with interpolated endpoints.
std::vector<Knot> restrict_knots(const std::vector<Knot>& ks, const Rational& a, const Rational& b) {
    std::vector<Knot> out;
    out.push_back({a, eval_knots(ks, a)});
    auto it = std::upper_bound(ks.begin(), ks.end(), a, [](const Rational& x, const Knot& k) { return x < k.t; });
    for (; it != ks.end() && it->t < b; ++it) out.push_back(*it);
    if (b > a) out.push_back({b, eval_knots(ks, b)});
    return out;
}

void push_knot(std::vector<Knot>& ks, Knot k) {
    if (!ks.empty() && ks.back().t == k.t) return;
    ks.push_back(std::move(k));
}

const StepPiece& piece_at(const std::vector<StepPiece>& ps, const Rational& t) {
    if (ps.empty()) throw std::invalid_argument("edge without pieces");
    auto it = std::upper_bound(ps.begin(), ps.end(), t, [](const Rational& x, const StepPiece& p) { return x < p.t0; });
    if (it == ps.begin()) return ps.front();
    return *(it - 1);
}

// Edge of X_i containing edge E of X_j, with the offset of E inside it.
std::pair<EdgeId, Dyadic> ancestor(const InverseSystem& sys, int j, EdgeId E, int i) {
    Dyadic shift = 0;
    for (int k = j - 1; k >= i; --k) {
        const Lift& l = sys.lifts[static_cast<std::size_t>(k)][static_cast<std::size_t>(E)];
        shift += sys.subedge(k, l.parent, l.sub).start;
        E = l.parent;
    }
    return {E, shift};
}

// Children of every edge of X_i in X_{i+1}.
std::vector<std::vector<EdgeId>> children(const InverseSystem& sys, int i) {
    std::vector<std::vector<EdgeId>> ch(static_cast<std::size_t>(sys.graph(i).num_edges()));
    const auto& lf = sys.lifts[static_cast<std::size_t>(i)];
    for (std::size_t E = 0; E < lf.size(); ++E) ch[static_cast<std::size_t>(lf[E].parent)].push_back(static_cast<EdgeId>(E));
    return ch;
}

// Subgraph of X_i made of the given edges, with a map back to X_i.
struct SubGraph {
    MetricGraph g;
    std::vector<EdgeId> orig;
    std::map<EdgeId, EdgeId> local;
};

SubGraph make_subgraph(const MetricGraph& g, const std::vector<EdgeId>& es) {
    SubGraph s;
    std::map<VertexId, VertexId> vmap;
    auto v = [&](VertexId x) {
        auto it = vmap.find(x);
        if (it != vmap.end()) return it->second;
        VertexId y = s.g.add_vertex();
        vmap[x] = y;
        return y;
    };
    for (EdgeId e : es) {
        const Edge& ed = g.edge(e);
        VertexId a = v(ed.src);
        VertexId b = v(ed.dst);
        s.local[e] = s.g.add_edge(a, b, ed.length, ed.weight);
        s.orig.push_back(e);
    }
    return s;
}

GraphPoint to_local(const SubGraph& s, const MetricGraph& g, const GraphPoint& p) {
    auto it = s.local.find(p.edge);
    if (it != s.local.end()) return {it->second, p.offset};
    for (EdgeId e : edges_at(g, p)) {
        auto jt = s.local.find(e);
        if (jt == s.local.end()) continue;
        const Edge& ed = g.edge(e);
        auto pv = point_vertex(g, p);
        if (pv && *pv == ed.src) return {jt->second, Dyadic(0)};
        return {jt->second, ed.length};
    }
    throw std::invalid_argument("point outside subgraph");
}

SegmentSet to_global(const SubGraph& s, const SegmentSet& a) {
    SegmentSet r;
    for (const auto& [e, iv] : a.pieces()) r.add(s.orig[static_cast<std::size_t>(e)], iv.a, iv.b);
    r.normalize();
    return r;
}

// Edges of X_i over edge e of X_{i-1}; for i = 0 every edge of X_0.
std::vector<EdgeId> preimage_edges(const InverseSystem& sys, int i, EdgeId parent) {
    std::vector<EdgeId> r;
    if (i == 0) {
        for (EdgeId e = 0; e < sys.graph(0).num_edges(); ++e) r.push_back(e);
        return r;
    }
    const auto& lf = sys.lifts[static_cast<std::size_t>(i - 1)];
    for (std::size_t E = 0; E < lf.size(); ++E)
        if (lf[E].parent == parent) r.push_back(static_cast<EdgeId>(E));
    return r;
}

// Parent edge of the edge carrying a non-vertex point; -1 for level 0.
EdgeId parent_of(const InverseSystem& sys, int i, EdgeId e) {
    if (i == 0) return -1;
    return sys.lifts[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(e)].parent;
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

int log2i(int n) {
    int k = 0;
    while ((1 << k) < n) ++k;
    return k;
}

}  // namespace

// ---- norms -----------------------------------------------------------------

Rational norm(const Vec& v, Norm n) {
    switch (n) {
    case Norm::Sup: {
        Rational m = 0;
        for (const auto& x : v) m = std::max<Rational>(m, abs(x));
        return m;
    }
    case Norm::L1: {
        Rational s = 0;
        for (const auto& x : v) s += abs(x);
        return s;
    }
    case Norm::Euclidean:
        if (v.size() == 1) return abs(v[0]);
        {
            Rational s = 0;
            for (const auto& x : v) s += x * x;
            if (s == 0) return 0;
            long double r = std::sqrt(static_cast<long double>(s.get_d()));
            return Rational(static_cast<double>(r));
        }
    }
    return 0;
}

bool norm_is_exact(int k, Norm n) { return k == 1 || n != Norm::Euclidean; }

Norm parse_norm(const std::string& s) {
    if (s == "euclidean" || s == "l2") return Norm::Euclidean;
    if (s == "sup" || s == "linf") return Norm::Sup;
    if (s == "l1") return Norm::L1;
    throw std::invalid_argument("unknown norm: " + s);
}

// ---- PL and step functions ---------------------------------------------------

PLFunction PLFunction::from_vertex_values(const MetricGraph& g, int level, const std::vector<Vec>& values) {
    if (static_cast<int>(values.size()) != g.num_vertices()) throw std::invalid_argument("one value per vertex required");
    PLFunction f;
    f.level = level;
    f.k = values.empty() ? 1 : static_cast<int>(values[0].size());
    f.edges.resize(static_cast<std::size_t>(g.num_edges()));
    for (const Edge& e : g.edges()) {
        const Vec& a = values[static_cast<std::size_t>(e.src)];
        const Vec& b = values[static_cast<std::size_t>(e.dst)];
        if (static_cast<int>(a.size()) != f.k || static_cast<int>(b.size()) != f.k)
            throw std::invalid_argument("inconsistent value dimension");
        f.edges[static_cast<std::size_t>(e.id)] = {{Rational(0), a}, {q(e.length), b}};
    }
    return f;
}

Vec PLFunction::eval_on_edge(EdgeId e, const Rational& t) const {
    return eval_knots(edges.at(static_cast<std::size_t>(e)), t);
}

Vec PLFunction::eval(const MetricGraph& g, const GraphPoint& p) const {
    check_point(g, p);
    return eval_on_edge(p.edge, q(p.offset));
}

void PLFunction::validate(const MetricGraph& g) const {
    if (static_cast<int>(edges.size()) != g.num_edges()) throw std::invalid_argument("knot table size mismatch");
    for (const Edge& e : g.edges()) {
        const auto& ks = edges[static_cast<std::size_t>(e.id)];
        if (ks.size() < 2) throw std::invalid_argument("edge " + std::to_string(e.id) + " needs two knots");
        if (ks.front().t != 0 || ks.back().t != q(e.length))
            throw std::invalid_argument("edge " + std::to_string(e.id) + " misses an endpoint knot");
        for (std::size_t c = 0; c < ks.size(); ++c) {
            if (static_cast<int>(ks[c].v.size()) != k) throw std::invalid_argument("knot dimension mismatch");
            if (c > 0 && !(ks[c - 1].t < ks[c].t))
                throw std::invalid_argument("edge " + std::to_string(e.id) + " has unsorted knots");
        }
    }
    vertex_values(g);
}

std::vector<Vec> PLFunction::vertex_values(const MetricGraph& g) const {
    std::vector<std::optional<Vec>> vals(static_cast<std::size_t>(g.num_vertices()));
    auto put = [&](VertexId v, const Vec& x) {
        auto& slot = vals[static_cast<std::size_t>(v)];
        if (!slot) slot = x;
        else if (*slot != x) throw std::invalid_argument("values disagree at vertex " + std::to_string(v));
    };
    for (const Edge& e : g.edges()) {
        const auto& ks = edges.at(static_cast<std::size_t>(e.id));
        put(e.src, ks.front().v);
        put(e.dst, ks.back().v);
    }
    std::vector<Vec> out;
    for (auto& v : vals) out.push_back(v ? *v : zero_vec(k));
    return out;
}

Vec StepFunction::eval_on_edge(EdgeId e, const Rational& t) const {
    return piece_at(edges.at(static_cast<std::size_t>(e)), t).v;
}

// ---- construction --------------------------------------------------------------

PLFunction height_function(const InverseSystem& sys, int i) {
    const MetricGraph& g = sys.graph(i);
    std::vector<Vec> vals(static_cast<std::size_t>(g.num_vertices()));
    for (VertexId v = 0; v < g.num_vertices(); ++v) {
        GraphPoint p = project(sys, 0, i, vertex_point(g, v));
        vals[static_cast<std::size_t>(v)] = {q(p.offset)};
    }
    return PLFunction::from_vertex_values(g, i, vals);
}

PLFunction random_pl(const MetricGraph& g, int level, int k, std::mt19937_64& rng, int bits) {
    long long m = 1LL << bits;
    std::uniform_int_distribution<long long> dist(-m, m);
    std::vector<Vec> vals(static_cast<std::size_t>(g.num_vertices()));
    for (auto& v : vals) {
        v.resize(static_cast<std::size_t>(k));
        for (auto& x : v) {
            x = Rational(static_cast<long>(dist(rng)), static_cast<unsigned long>(m));
            x.canonicalize();
        }
    }
    return PLFunction::from_vertex_values(g, level, vals);
}

PLFunction pullback(const InverseSystem& sys, int j, const PLFunction& h) {
    if (j < h.level) throw std::invalid_argument("pullback target below source level");
    const MetricGraph& g = sys.graph(j);
    PLFunction r;
    r.level = j;
    r.k = h.k;
    r.edges.resize(static_cast<std::size_t>(g.num_edges()));
    for (const Edge& E : g.edges()) {
        auto [e, shift] = ancestor(sys, j, E.id, h.level);
        Rational a = q(shift);
        Rational b = q(shift + E.length);
        auto ks = restrict_knots(h.edges.at(static_cast<std::size_t>(e)), a, b);
        for (auto& kn : ks) kn.t -= a;
        r.edges[static_cast<std::size_t>(E.id)] = std::move(ks);
    }
    return r;
}

StepFunction pullback(const InverseSystem& sys, int j, const StepFunction& h) {
    if (j < h.level) throw std::invalid_argument("pullback target below source level");
    const MetricGraph& g = sys.graph(j);
    StepFunction r;
    r.level = j;
    r.k = h.k;
    r.edges.resize(static_cast<std::size_t>(g.num_edges()));
    for (const Edge& E : g.edges()) {
        auto [e, shift] = ancestor(sys, j, E.id, h.level);
        Rational a = q(shift);
        Rational b = q(shift + E.length);
        auto& out = r.edges[static_cast<std::size_t>(E.id)];
        for (const auto& p : h.edges.at(static_cast<std::size_t>(e))) {
            Rational lo = std::max<Rational>(p.t0, a);
            Rational hi = std::min<Rational>(p.t1, b);
            if (lo < hi) out.push_back({lo - a, hi - a, p.v});
        }
    }
    return r;
}

PLFunction pl_abs(const PLFunction& h) {
    if (h.k != 1) throw std::invalid_argument("pl_abs needs a scalar function");
    PLFunction r = h;
    for (auto& ks : r.edges) {
        std::vector<Knot> out;
        for (std::size_t c = 0; c < ks.size(); ++c) {
            if (c > 0) {
                const Rational& v0 = ks[c - 1].v[0];
                const Rational& v1 = ks[c].v[0];
                if ((v0 < 0 && v1 > 0) || (v0 > 0 && v1 < 0)) {
                    Rational t = ks[c - 1].t + (ks[c].t - ks[c - 1].t) * abs(v0) / (abs(v0) + abs(v1));
                    out.push_back({t, {Rational(0)}});
                }
            }
            out.push_back({ks[c].t, {abs(ks[c].v[0])}});
        }
        ks = std::move(out);
    }
    return r;
}

// ---- conditional expectation -----------------------------------------------------

PLFunction cond_exp_step(const InverseSystem& sys, int i, const PLFunction& h) {
    if (h.level != i + 1) throw std::invalid_argument("cond_exp_step expects a function on X_{i+1}");
    const MetricGraph& g = sys.graph(i);
    PLFunction r;
    r.level = i;
    r.k = h.k;
    r.edges.resize(static_cast<std::size_t>(g.num_edges()));
    for (const Edge& e : g.edges()) {
        auto& out = r.edges[static_cast<std::size_t>(e.id)];
        for (const SubEdge& s : sys.levels[static_cast<std::size_t>(i)].subdivision[static_cast<std::size_t>(e.id)]) {
            const auto& P = h.edges.at(static_cast<std::size_t>(s.primary));
            const auto& O = h.edges.at(static_cast<std::size_t>(s.opposite));
            std::vector<Rational> ts;
            for (const auto& kn : P) ts.push_back(kn.t);
            if (s.is_circle())
                for (const auto& kn : O) ts.push_back(kn.t);
            std::sort(ts.begin(), ts.end());
            ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
            Rational base = q(s.start);
            for (const auto& t : ts) {
                Vec v = s.is_circle() ? average(eval_knots(P, t), eval_knots(O, t)) : eval_knots(P, t);
                push_knot(out, {base + t, std::move(v)});
            }
        }
    }
    return r;
}

StepFunction cond_exp_step(const InverseSystem& sys, int i, const StepFunction& h) {
    if (h.level != i + 1) throw std::invalid_argument("cond_exp_step expects a function on X_{i+1}");
    const MetricGraph& g = sys.graph(i);
    StepFunction r;
    r.level = i;
    r.k = h.k;
    r.edges.resize(static_cast<std::size_t>(g.num_edges()));
    for (const Edge& e : g.edges()) {
        auto& out = r.edges[static_cast<std::size_t>(e.id)];
        for (const SubEdge& s : sys.levels[static_cast<std::size_t>(i)].subdivision[static_cast<std::size_t>(e.id)]) {
            const auto& P = h.edges.at(static_cast<std::size_t>(s.primary));
            const auto& O = h.edges.at(static_cast<std::size_t>(s.opposite));
            std::vector<Rational> ts;
            for (const auto& p : P) ts.push_back(p.t0);
            if (s.is_circle())
                for (const auto& p : O) ts.push_back(p.t0);
            ts.push_back(q(s.length));
            std::sort(ts.begin(), ts.end());
            ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
            Rational base = q(s.start);
            for (std::size_t c = 0; c + 1 < ts.size(); ++c) {
                const Rational& t = ts[c];
                Vec v = s.is_circle() ? average(piece_at(P, t).v, piece_at(O, t).v) : piece_at(P, t).v;
                if (!out.empty() && out.back().v == v && out.back().t1 == base + t) {
                    out.back().t1 = base + ts[c + 1];
                } else {
                    out.push_back({base + t, base + ts[c + 1], std::move(v)});
                }
            }
        }
    }
    return r;
}

PLFunction cond_exp_from_top(const InverseSystem& sys, int i, const PLFunction& f) {
    if (i > f.level) throw std::invalid_argument("target level above the function's level");
    PLFunction h = f;
    for (int j = f.level - 1; j >= i; --j) h = cond_exp_step(sys, j, h);
    return h;
}

StepFunction cond_exp_from_top(const InverseSystem& sys, int i, const StepFunction& f) {
    if (i > f.level) throw std::invalid_argument("target level above the function's level");
    StepFunction h = f;
    for (int j = f.level - 1; j >= i; --j) h = cond_exp_step(sys, j, h);
    return h;
}

// ---- integration ---------------------------------------------------------------

Vec integrate(const MetricGraph& g, const PLFunction& h, const SegmentSet& a) {
    Vec total = zero_vec(h.k);
    for (const auto& [e, iv] : a.pieces()) {
        auto ks = restrict_knots(h.edges.at(static_cast<std::size_t>(e)), q(iv.a), q(iv.b));
        Rational w = q(g.edge(e).weight);
        for (std::size_t c = 1; c < ks.size(); ++c) {
            Rational len = ks[c].t - ks[c - 1].t;
            for (int d = 0; d < h.k; ++d)
                total[static_cast<std::size_t>(d)] +=
                    w * len * (ks[c].v[static_cast<std::size_t>(d)] + ks[c - 1].v[static_cast<std::size_t>(d)]) / 2;
        }
    }
    return total;
}

Vec integrate(const MetricGraph& g, const StepFunction& h, const SegmentSet& a) {
    Vec total = zero_vec(h.k);
    for (const auto& [e, iv] : a.pieces()) {
        Rational lo = q(iv.a);
        Rational hi = q(iv.b);
        Rational w = q(g.edge(e).weight);
        for (const auto& p : h.edges.at(static_cast<std::size_t>(e))) {
            Rational x0 = std::max<Rational>(p.t0, lo);
            Rational x1 = std::min<Rational>(p.t1, hi);
            if (x0 < x1) total = add(total, scale(p.v, w * (x1 - x0)));
        }
    }
    return total;
}

long double integrate_power(const MetricGraph& g, const PLFunction& h, const Rational& p) {
    if (p.get_den() == 1 && p > 0) return integrate_power_exact(g, h, static_cast<unsigned>(p.get_num().get_ui())).get_d();
    PLFunction u = pl_abs(h);
    long double pp = static_cast<long double>(p.get_d());
    long double total = 0;
    for (const Edge& e : g.edges()) {
        const auto& ks = u.edges.at(static_cast<std::size_t>(e.id));
        long double w = e.weight.to_long_double();
        for (std::size_t c = 1; c < ks.size(); ++c) {
            long double len = static_cast<long double>(Rational(ks[c].t - ks[c - 1].t).get_d());
            long double a = static_cast<long double>(ks[c - 1].v[0].get_d());
            long double b = static_cast<long double>(ks[c].v[0].get_d());
            if (a == b) {
                total += w * len * std::pow(a, pp);
            } else {
                total += w * len * (std::pow(b, pp + 1) - std::pow(a, pp + 1)) / ((pp + 1) * (b - a));
            }
        }
    }
    return total;
}

Rational integrate_power_exact(const MetricGraph& g, const PLFunction& h, unsigned p) {
    if (h.k != 1) throw std::invalid_argument("integrate_power needs a scalar function");
    PLFunction u = pl_abs(h);
    Rational total = 0;
    for (const Edge& e : g.edges()) {
        const auto& ks = u.edges.at(static_cast<std::size_t>(e.id));
        Rational w = q(e.weight);
        for (std::size_t c = 1; c < ks.size(); ++c) {
            Rational len = ks[c].t - ks[c - 1].t;
            const Rational& a = ks[c - 1].v[0];
            const Rational& b = ks[c].v[0];
            // int_0^1 (a + (b-a)s)^p ds = sum_{m=0}^p a^m b^{p-m} / (p+1)
            Rational s = 0;
            for (unsigned m = 0; m <= p; ++m) {
                Rational term = 1;
                for (unsigned c2 = 0; c2 < m; ++c2) term *= a;
                for (unsigned c2 = 0; c2 < p - m; ++c2) term *= b;
                s += term;
            }
            total += w * len * s / Rational(p + 1);
        }
    }
    return total;
}

SegmentSet preimage(const InverseSystem& sys, int i, int j, const SegmentSet& a) {
    SegmentSet cur = a;
    for (int k = i; k < j; ++k) {
        SegmentSet nxt;
        for (const auto& [e, iv] : cur.pieces()) {
            for (const SubEdge& s : sys.levels[static_cast<std::size_t>(k)].subdivision[static_cast<std::size_t>(e)]) {
                Dyadic lo = std::max(iv.a, s.start);
                Dyadic hi = std::min(iv.b, s.start + s.length);
                if (hi < lo) continue;
                nxt.add(s.primary, lo - s.start, hi - s.start);
                if (s.is_circle()) nxt.add(s.opposite, lo - s.start, hi - s.start);
            }
        }
        nxt.normalize();
        cur = std::move(nxt);
    }
    return cur;
}

// ---- derivatives ---------------------------------------------------------------

StepFunction derivative_level(const PLFunction& h) {
    StepFunction r;
    r.level = h.level;
    r.k = h.k;
    r.edges.resize(h.edges.size());
    for (std::size_t e = 0; e < h.edges.size(); ++e) {
        const auto& ks = h.edges[e];
        auto& out = r.edges[e];
        for (std::size_t c = 1; c < ks.size(); ++c) {
            Vec slope = scale(sub(ks[c].v, ks[c - 1].v), 1 / (ks[c].t - ks[c - 1].t));
            if (!out.empty() && out.back().v == slope) out.back().t1 = ks[c].t;
            else out.push_back({ks[c - 1].t, ks[c].t, std::move(slope)});
        }
    }
    return r;
}

StepFunction norm_of(const StepFunction& h, Norm n) {
    StepFunction r;
    r.level = h.level;
    r.k = 1;
    r.edges.resize(h.edges.size());
    for (std::size_t e = 0; e < h.edges.size(); ++e)
        for (const auto& p : h.edges[e]) r.edges[e].push_back({p.t0, p.t1, {norm(p.v, n)}});
    return r;
}

Rational sup_norm(const StepFunction& h, Norm n) {
    Rational m = 0;
    for (const auto& ps : h.edges)
        for (const auto& p : ps) m = std::max(m, norm(p.v, n));
    return m;
}

Rational lipschitz_constant(const PLFunction& h, Norm n) { return sup_norm(derivative_level(h), n); }

namespace {

// Common refinement breakpoints of two piece lists on one edge.
std::vector<Rational> breakpoints(const std::vector<StepPiece>& a, const std::vector<StepPiece>& b) {
    std::vector<Rational> ts;
    for (const auto& p : a) { ts.push_back(p.t0); ts.push_back(p.t1); }
    for (const auto& p : b) { ts.push_back(p.t0); ts.push_back(p.t1); }
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    return ts;
}

}  // namespace

bool step_equal(const StepFunction& a, const StepFunction& b) {
    if (a.level != b.level || a.k != b.k || a.edges.size() != b.edges.size()) return false;
    for (std::size_t e = 0; e < a.edges.size(); ++e) {
        auto ts = breakpoints(a.edges[e], b.edges[e]);
        for (std::size_t c = 0; c + 1 < ts.size(); ++c)
            if (piece_at(a.edges[e], ts[c]).v != piece_at(b.edges[e], ts[c]).v) return false;
    }
    return true;
}

Rational l1_distance(const MetricGraph& g, const StepFunction& a, const StepFunction& b, Norm n) {
    if (a.edges.size() != b.edges.size()) throw std::invalid_argument("step functions on different graphs");
    Rational total = 0;
    for (std::size_t e = 0; e < a.edges.size(); ++e) {
        Rational w = q(g.edge(static_cast<EdgeId>(e)).weight);
        auto ts = breakpoints(a.edges[e], b.edges[e]);
        for (std::size_t c = 0; c + 1 < ts.size(); ++c)
            total += w * (ts[c + 1] - ts[c]) * norm(sub(piece_at(a.edges[e], ts[c]).v, piece_at(b.edges[e], ts[c]).v), n);
    }
    return total;
}

MartingaleReport derivative_martingale(const InverseSystem& sys, const PLFunction& f, int i_max, Norm n) {
    if (i_max > f.level) throw std::invalid_argument("i_max above the function's level");
    MartingaleReport r;
    r.exact = norm_is_exact(f.k, n);
    std::vector<PLFunction> hs(static_cast<std::size_t>(i_max + 1));
    PLFunction h = f;
    for (int j = f.level; j >= 0; --j) {
        if (j <= i_max) hs[static_cast<std::size_t>(j)] = h;
        if (j > 0) h = cond_exp_step(sys, j - 1, h);
    }
    for (int i = 0; i <= i_max; ++i) {
        r.derivatives.push_back(derivative_level(hs[static_cast<std::size_t>(i)]));
        r.sup_norms.push_back(sup_norm(r.derivatives.back(), n));
    }
    for (int i = 0; i < i_max; ++i) {
        const auto& di = r.derivatives[static_cast<std::size_t>(i)];
        const auto& dn = r.derivatives[static_cast<std::size_t>(i + 1)];
        r.identity_holds.push_back(step_equal(cond_exp_step(sys, i, dn), di));
        r.l1_increments.push_back(l1_distance(sys.graph(i + 1), dn, pullback(sys, i + 1, di), n));
    }
    return r;
}

// ---- fundamental theorem ------------------------------------------------------------

std::vector<PointPair> ftc_pairs(const InverseSystem& sys, int i, int count, std::mt19937_64& rng, int offset_bits) {
    if (i < 1 || i > sys.top()) throw std::invalid_argument("ftc_pairs needs 1 <= i <= top");
    auto ch = children(sys, i - 1);
    const MetricGraph& g = sys.graph(i);
    std::uniform_int_distribution<int> pe(0, sys.graph(i - 1).num_edges() - 1);
    std::uniform_int_distribution<long long> po(0, 1LL << offset_bits);
    std::vector<PointPair> out;
    auto point = [&](EdgeId E) {
        return canonical(g, {E, g.edge(E).length * Dyadic::from_parts(po(rng), offset_bits)});
    };
    while (static_cast<int>(out.size()) < count) {
        const auto& c = ch[static_cast<std::size_t>(pe(rng))];
        std::uniform_int_distribution<std::size_t> pc(0, c.size() - 1);
        out.push_back({point(c[pc(rng)]), point(c[pc(rng)])});
    }
    return out;
}

bool in_one_edge_preimage(const InverseSystem& sys, int i, const GraphPoint& x, const GraphPoint& y) {
    if (i == 0) return true;
    const MetricGraph& g = sys.graph(i);
    std::set<EdgeId> px;
    for (EdgeId e : edges_at(g, x)) px.insert(parent_of(sys, i, e));
    for (EdgeId e : edges_at(g, y))
        if (px.count(parent_of(sys, i, e))) return true;
    return false;
}

namespace {

EdgeId common_parent(const InverseSystem& sys, int i, const GraphPoint& x, const GraphPoint& y) {
    const MetricGraph& g = sys.graph(i);
    std::set<EdgeId> px;
    for (EdgeId e : edges_at(g, x)) px.insert(parent_of(sys, i, e));
    for (EdgeId e : edges_at(g, y)) {
        EdgeId p = parent_of(sys, i, e);
        if (px.count(p)) return p;
    }
    throw std::invalid_argument("points not in one edge preimage");
}

}  // namespace

FtcReport ftc_check(const InverseSystem& sys, int i, const PLFunction& g, const std::vector<PointPair>& pairs,
                    Norm n) {
    FtcReport r;
    r.exact = norm_is_exact(g.k, n);
    if (pairs.empty()) {
        r.warnings.push_back("no sample pairs: the check is vacuous");
        return r;
    }
    if (i < 1 || i > g.level) throw std::invalid_argument("ftc_check needs 1 <= i <= level of g");
    const MetricGraph& G = sys.graph(i);
    PLFunction gi = cond_exp_from_top(sys, i, g);
    StepFunction u = cond_exp_from_top(sys, i, norm_of(derivative_level(g), n));
    std::map<EdgeId, SubGraph> subs;
    Rational tol = r.exact ? Rational(0) : Rational(1, 1000000000);
    for (const auto& pr : pairs) {
        if (!in_one_edge_preimage(sys, i, pr.x, pr.y)) {
            ++r.skipped;
            continue;
        }
        EdgeId parent = common_parent(sys, i, pr.x, pr.y);
        auto it = subs.find(parent);
        if (it == subs.end()) it = subs.emplace(parent, make_subgraph(G, preimage_edges(sys, i, parent))).first;
        const SubGraph& s = it->second;
        Geodesic geo = shortest_path(s.g, to_local(s, G, pr.x), to_local(s, G, pr.y));
        if (geo.length.is_zero()) {
            ++r.skipped;
            continue;
        }
        SegmentSet path = to_global(s, geo.path);
        Rational lhs = norm(sub(gi.eval(G, pr.y), gi.eval(G, pr.x)), n);
        Rational mass = q(measure(G, path));
        Rational rhs = 2 * q(geo.length) * integrate(G, u, path)[0] / mass;
        ++r.evaluated;
        if (rhs == 0) {
            if (lhs > tol) ++r.violations;
            continue;
        }
        Rational ratio = lhs / rhs;
        r.max_ratio = std::max(r.max_ratio, ratio);
        if (ratio > 1 + tol) ++r.violations;
    }
    if (r.evaluated == 0) r.warnings.push_back("no pair was evaluated: the check is vacuous");
    return r;
}

// ---- maximal operator ----------------------------------------------------------

MaximalContext maximal_context(const InverseSystem& sys, const PLFunction& u, int i_max) {
    if (u.k != 1) throw std::invalid_argument("maximal operator needs a scalar function");
    if (i_max > u.level) throw std::invalid_argument("i_max above the function's level");
    for (const auto& ks : u.edges)
        for (const auto& kn : ks)
            if (kn.v[0] < 0) throw std::invalid_argument("maximal operator needs a nonnegative function");
    MaximalContext ctx;
    ctx.levels.resize(static_cast<std::size_t>(i_max + 1));
    PLFunction h = u;
    for (int j = u.level; j >= 0; --j) {
        if (j <= i_max) ctx.levels[static_cast<std::size_t>(j)] = h;
        if (j > 0) h = cond_exp_step(sys, j - 1, h);
    }
    for (const auto& ui : ctx.levels) {
        auto& pl = ctx.prefix.emplace_back();
        for (const auto& ks : ui.edges) {
            auto& pe = pl.emplace_back();
            Rational acc = 0;
            pe.push_back(acc);
            for (std::size_t c = 1; c < ks.size(); ++c) {
                acc += (ks[c].t - ks[c - 1].t) * (ks[c].v[0] + ks[c - 1].v[0]) / 2;
                pe.push_back(acc);
            }
        }
    }
    return ctx;
}

Rational MaximalContext::integral(const MetricGraph& g, int i, const SegmentSet& a) const {
    const PLFunction& ui = levels.at(static_cast<std::size_t>(i));
    const auto& pl = prefix.at(static_cast<std::size_t>(i));
    auto upto = [&](EdgeId e, const Rational& t) -> Rational {
        const auto& ks = ui.edges[static_cast<std::size_t>(e)];
        auto it = std::upper_bound(ks.begin(), ks.end(), t, [](const Rational& x, const Knot& k) { return x < k.t; });
        std::size_t c = static_cast<std::size_t>(it - ks.begin()) - 1;
        const Knot& k0 = ks[c];
        Vec v = eval_knots(ks, t);
        return pl[static_cast<std::size_t>(e)][c] + (t - k0.t) * (k0.v[0] + v[0]) / 2;
    };
    Rational total = 0;
    for (const auto& [e, iv] : a.pieces())
        total += q(g.edge(e).weight) * (upto(e, q(iv.b)) - upto(e, q(iv.a)));
    return total;
}

MaximalEntry maximal_function(const InverseSystem& sys, const PLFunction& u, const GraphPoint& x, int i_max,
                              int grid) {
    return maximal_function(sys, maximal_context(sys, u, i_max), u.level, x, grid);
}

MaximalEntry maximal_function(const InverseSystem& sys, const MaximalContext& ctx, int J, const GraphPoint& x,
                              int grid) {
    if (!is_power_of_two(grid)) throw std::invalid_argument("grid must be a power of two");
    if (point_vertex(sys.graph(J), x)) throw std::invalid_argument("maximal function needs a non-vertex point");
    MaximalEntry m;
    for (int i = 0; i < static_cast<int>(ctx.levels.size()); ++i) {
        const MetricGraph& G = sys.graph(i);
        const PLFunction& ui = ctx.levels[static_cast<std::size_t>(i)];
        GraphPoint xi = project(sys, i, J, x);
        Rational here = ui.eval(G, xi)[0];
        Rational best = here;
        m.doob = std::max(m.doob, here);
        SubGraph s = make_subgraph(G, preimage_edges(sys, i, parent_of(sys, i, xi.edge)));
        DistanceField f = distances_from(s.g, to_local(s, G, xi));
        for (EdgeId le = 0; le < s.g.num_edges(); ++le) {
            const Edge& ed = s.g.edge(le);
            for (int c = 0; c <= grid; ++c) {
                Dyadic off = (ed.length * Dyadic(c)).ldexp(-log2i(grid));
                Geodesic geo = shortest_path(s.g, f, {le, off});
                if (geo.length.is_zero()) continue;
                SegmentSet path = to_global(s, geo.path);
                Rational avg = ctx.integral(G, i, path) / q(measure(G, path));
                best = std::max(best, avg);
            }
        }
        m.per_level.push_back(best);
        m.value = std::max(m.value, best);
    }
    return m;
}

Rational weak_norm(std::vector<std::pair<Rational, Dyadic>> samples) {
    std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    Rational best = 0;
    Rational w = 0;
    for (std::size_t c = 0; c < samples.size(); ++c) {
        w += q(samples[c].second);
        if (c + 1 < samples.size() && samples[c + 1].first == samples[c].first) continue;
        best = std::max(best, Rational(samples[c].first * w));
    }
    return best;
}

std::vector<std::pair<Rational, Dyadic>> maximal_samples(const InverseSystem& sys, const PLFunction& h, int cells,
                                                         int grid) {
    if (!is_power_of_two(cells)) throw std::invalid_argument("cells must be a power of two");
    const int J = h.level;
    const MetricGraph& G = sys.graph(J);
    MaximalContext ctx = maximal_context(sys, pl_abs(h), J);
    std::vector<std::pair<Rational, Dyadic>> samples;
    int kc = log2i(cells);
    for (const Edge& e : G.edges()) {
        Dyadic w = G.edge_measure(e.id).ldexp(-kc);
        for (int c = 0; c < cells; ++c) {
            Dyadic off = (e.length * Dyadic(2 * c + 1)).ldexp(-kc - 1);
            samples.emplace_back(maximal_function(sys, ctx, J, {e.id, off}, grid).value, w);
        }
    }
    return samples;
}

WeakReport weak_inequality_report(const MetricGraph& g, const PLFunction& h, const Rational& p,
                                  std::vector<std::pair<Rational, Dyadic>> samples) {
    if (p <= 1) throw std::invalid_argument("p must exceed 1");
    WeakReport r;
    r.samples = samples.size();
    r.weak_norm = weak_norm(std::move(samples));
    long double pp = static_cast<long double>(p.get_d());
    r.lp_norm = std::pow(integrate_power(g, h, p), 1.0L / pp);
    r.bound = 256.0L * pp / (pp - 1) * r.lp_norm;
    long double wn = static_cast<long double>(r.weak_norm.get_d());
    r.margin = wn > 0 ? r.bound / wn : INFINITY;
    r.pass = wn <= r.bound;
    return r;
}

WeakReport weak_inequality_check(const InverseSystem& sys, const PLFunction& h, const Rational& p, int cells,
                                 int grid) {
    if (p <= 1) throw std::invalid_argument("p must exceed 1");
    return weak_inequality_report(sys.graph(h.level), h, p, maximal_samples(sys, h, cells, grid));
}

// ---- covering ------------------------------------------------------------------

CoveringResult covering_select(const InverseSystem& sys, const std::vector<CoveringCandidate>& cands) {
    CoveringResult r;
    if (cands.empty()) return r;
    const int i = cands.front().level;
    if (i < 1 || i > sys.top()) throw PreconditionError("covering candidates need 1 <= level <= top");
    const MetricGraph& G = sys.graph(i);
    std::vector<EdgeId> atom(cands.size());
    std::vector<Dyadic> radius(cands.size());
    for (std::size_t c = 0; c < cands.size(); ++c) {
        const auto& cd = cands[c];
        if (cd.level != i) throw PreconditionError("covering candidates must share one level");
        Geodesic geo = shortest_path(G, cd.p, cd.q);
        if (geo.length.is_zero()) throw PreconditionError("degenerate covering candidate");
        std::set<EdgeId> parents;
        for (const auto& [e, iv] : geo.path.pieces())
            if (iv.a < iv.b) parents.insert(parent_of(sys, i, e));
        if (parents.size() != 1) throw PreconditionError("candidate path leaves a single edge preimage");
        atom[c] = *parents.begin();
        radius[c] = geo.length;
        r.paths.push_back(geo.path);
    }
    std::vector<std::size_t> order(cands.size());
    for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (atom[a] != atom[b]) return atom[a] < atom[b];
        return radius[a] > radius[b];
    });
    std::map<std::size_t, SegmentSet> balls;
    std::map<std::size_t, SegmentSet> big;
    for (std::size_t c : order) {
        SegmentSet b = ball(G, cands[c].p, radius[c]);
        bool free = true;
        for (const auto& [s, sb] : balls) {
            if (atom[s] != atom[c]) continue;
            if (!measure(G, sb.intersect(b)).is_zero()) {
                free = false;
                break;
            }
        }
        if (!free) continue;
        balls[c] = b;
        big[c] = ball(G, cands[c].p, radius[c] * Dyadic(5));
        r.selected.push_back(static_cast<int>(c));
    }
    std::sort(r.selected.begin(), r.selected.end());
    for (int s : r.selected) {
        const SegmentSet& e = big[static_cast<std::size_t>(s)];
        r.enlargements.push_back(e);
        Rational ratio = q(measure(G, e)) / q(measure(G, r.paths[static_cast<std::size_t>(s)]));
        r.max_ratio = std::max(r.max_ratio, ratio);
    }
    for (std::size_t a = 0; a < r.selected.size(); ++a)
        for (std::size_t b = a + 1; b < r.selected.size(); ++b) {
            const auto& pa = r.paths[static_cast<std::size_t>(r.selected[a])];
            const auto& pb = r.paths[static_cast<std::size_t>(r.selected[b])];
            if (!measure(G, pa.intersect(pb)).is_zero()) r.disjoint = false;
        }
    for (std::size_t c = 0; c < cands.size(); ++c) {
        SegmentSet cover;
        for (const auto& [s, e] : big)
            if (atom[s] == atom[c]) cover = cover.unite(e);
        cover.normalize();
        if (!r.paths[c].subset_of(cover)) r.covers = false;
    }
    return r;
}

// ---- differentiability residual ---------------------------------------------------

bool is_deep(const InverseSystem& sys, int J, const GraphPoint& x, int i0) {
    if (point_vertex(sys.graph(J), x)) return false;
    EdgeId E = x.edge;
    for (int k = J - 1; k >= i0; --k) {
        const Lift& l = sys.lifts[static_cast<std::size_t>(k)][static_cast<std::size_t>(E)];
        if (sys.subedge(k, l.parent, l.sub).terminal) return false;
        E = l.parent;
    }
    return true;
}

ResidualReport differentiability_residual(const InverseSystem& sys, const PLFunction& f, const GraphPoint& x,
                                          const Dyadic& R, int i0, int i1, int frozen_level, Norm n) {
    const int J = f.level;
    const MetricGraph& G = sys.graph(J);
    if (point_vertex(G, x)) throw std::invalid_argument("residual needs a non-vertex point");
    if (i0 < 0 || i1 > J || i0 > i1) throw std::invalid_argument("level range outside [0, J]");
    ResidualReport r;
    r.derivative_level = J;
    r.exact = norm_is_exact(f.k, n);
    r.deep = is_deep(sys, J, x, i0);
    if (!r.deep) r.warnings.push_back("x is not deep from level " + std::to_string(i0));
    PLFunction height = height_function(sys, J);
    Vec fx = f.eval(G, x);
    Rational hx = height.eval(G, x)[0];
    Vec dfx = derivative_level(f).eval_on_edge(x.edge, q(x.offset));
    // f'(x) is the slope along the edge; pi has slope 1 or -1 along it.
    Rational dir = height.edges[static_cast<std::size_t>(x.edge)].back().v[0] -
                   height.edges[static_cast<std::size_t>(x.edge)].front().v[0];
    if (dir < 0) dfx = scale(dfx, -1);
    DistanceField field = distances_from(G, x);
    auto residual_at = [&](EdgeId e, const Rational& t) {
        Vec fy = f.eval_on_edge(e, t);
        Rational dh = height.eval_on_edge(e, t)[0] - hx;
        return norm(sub(sub(fy, fx), scale(dfx, dh)), n);
    };
    for (int i = i0; i <= i1; ++i) {
        Dyadic ri = natural_scale(sys, i, J, x);
        SegmentSet b = ball(G, field, R * ri);
        Rational worst = 0;
        bool in_pre = true;
        bool in_cell = true;
        auto anc_x = [&](int lvl) { return ancestor(sys, J, x.edge, lvl).first; };
        EdgeId ex_pre = i >= 1 ? anc_x(i - 1) : -1;
        EdgeId ex_cell = frozen_level >= 0 ? anc_x(frozen_level) : -1;
        for (const auto& [e, iv] : b.pieces()) {
            Rational a = q(iv.a);
            Rational bb = q(iv.b);
            worst = std::max(worst, residual_at(e, a));
            worst = std::max(worst, residual_at(e, bb));
            for (const auto& kn : f.edges[static_cast<std::size_t>(e)])
                if (a < kn.t && kn.t < bb) worst = std::max(worst, residual_at(e, kn.t));
            for (const auto& kn : height.edges[static_cast<std::size_t>(e)])
                if (a < kn.t && kn.t < bb) worst = std::max(worst, residual_at(e, kn.t));
            if (i >= 1 && ancestor(sys, J, e, i - 1).first != ex_pre) in_pre = false;
            if (frozen_level >= 0 && ancestor(sys, J, e, frozen_level).first != ex_cell) in_cell = false;
        }
        r.levels.push_back(i);
        r.scale.push_back(ri);
        r.residual.push_back(worst / q(ri));
        r.in_edge_preimage.push_back(in_pre);
        r.in_cell.push_back(frozen_level >= 0 && in_cell);
    }
    return r;
}

}  // namespace invsys
