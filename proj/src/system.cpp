// SPDX-License-Identifier: MIT
#include "invsys/system.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <sstream>

namespace invsys {

namespace {

std::string edge_name(int level, EdgeId e) {
    return "X_" + std::to_string(level) + " edge " + std::to_string(e);
}

// Key for deduplicating canonical points.
std::pair<EdgeId, Dyadic> key(const GraphPoint& p) { return {p.edge, p.offset}; }

}  // namespace

// ---------------------------------------------------------------------------
// InverseSystem

void InverseSystem::rebuild_lifts() {
    lifts.assign(levels.size() > 0 ? levels.size() - 1 : 0, {});
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
        const auto& next = levels[i + 1].graph;
        auto& out = lifts[i];
        out.assign(static_cast<std::size_t>(next.num_edges()), Lift{});
        const auto& sub = levels[i].subdivision;
        if (sub.size() != static_cast<std::size_t>(levels[i].graph.num_edges()))
            throw SystemError("level " + std::to_string(i) + ": subdivision table size mismatch");
        for (EdgeId e = 0; e < static_cast<EdgeId>(sub.size()); ++e) {
            for (int k = 0; k < static_cast<int>(sub[static_cast<std::size_t>(e)].size()); ++k) {
                const SubEdge& s = sub[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)];
                auto claim = [&](EdgeId E, bool opp) {
                    if (E < 0 || E >= next.num_edges())
                        throw SystemError(edge_name(static_cast<int>(i), e) + ": subedge " + std::to_string(k) +
                                          " points to a missing edge");
                    auto& l = out[static_cast<std::size_t>(E)];
                    if (l.parent >= 0)
                        throw SystemError(edge_name(static_cast<int>(i + 1), E) + " lies over two subedges");
                    l = Lift{e, k, opp};
                };
                claim(s.primary, false);
                if (s.is_circle()) claim(s.opposite, true);
            }
        }
        for (EdgeId E = 0; E < next.num_edges(); ++E)
            if (out[static_cast<std::size_t>(E)].parent < 0)
                throw SystemError(edge_name(static_cast<int>(i + 1), E) + " lies over no subedge");
    }
}

int InverseSystem::subedge_index(int i, const GraphPoint& p) const {
    const auto& subs = levels.at(static_cast<std::size_t>(i)).subdivision.at(static_cast<std::size_t>(p.edge));
    if (subs.empty()) throw SystemError("level " + std::to_string(i) + " has no subdivision");
    // First subedge whose end is beyond the offset.
    auto it = std::upper_bound(subs.begin(), subs.end(), p.offset,
                               [](const Dyadic& t, const SubEdge& s) { return t < s.start + s.length; });
    if (it == subs.end()) return static_cast<int>(subs.size()) - 1;
    return static_cast<int>(it - subs.begin());
}

// ---------------------------------------------------------------------------
// projections

GraphPoint project(const InverseSystem& sys, int i, int j, const GraphPoint& p) {
    if (j < i) throw SystemError("project: j < i");
    GraphPoint q = canonical(sys.graph(j), p);
    for (int k = j - 1; k >= i; --k) {
        const Lift& l = sys.lifts.at(static_cast<std::size_t>(k)).at(static_cast<std::size_t>(q.edge));
        const SubEdge& s = sys.subedge(k, l.parent, l.sub);
        q = canonical(sys.graph(k), GraphPoint{l.parent, s.start + q.offset});
    }
    return q;
}

GraphPoint opposite_point(const InverseSystem& sys, int i, const GraphPoint& p) {
    const Lift& l = sys.lifts.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(p.edge));
    const SubEdge& s = sys.subedge(i, l.parent, l.sub);
    EdgeId other = l.opposite ? s.primary : s.opposite;
    return canonical(sys.graph(i + 1), GraphPoint{other, p.offset});
}

GraphPoint embed(const InverseSystem& sys, int i, int j, const GraphPoint& p) {
    GraphPoint q = canonical(sys.graph(i), p);
    for (int k = i; k < j; ++k) {
        int idx = sys.subedge_index(k, q);
        const SubEdge& s = sys.subedge(k, q.edge, idx);
        q = canonical(sys.graph(k + 1), GraphPoint{s.primary, q.offset - s.start});
    }
    return q;
}

VertexId lift_vertex(const InverseSystem& sys, int i, VertexId v) {
    GraphPoint q = embed(sys, i, i + 1, vertex_point(sys.graph(i), v));
    auto w = point_vertex(sys.graph(i + 1), q);
    if (!w) throw SystemError("lift_vertex: vertex does not lift to a vertex");
    return *w;
}

VertexId zero_vertex(const InverseSystem& sys, int i) {
    VertexId v = sys.graph(0).edge(0).src;
    for (int k = 0; k < i; ++k) v = lift_vertex(sys, k, v);
    return v;
}

VertexId one_vertex(const InverseSystem& sys, int i) {
    VertexId v = sys.graph(0).edge(0).dst;
    for (int k = 0; k < i; ++k) v = lift_vertex(sys, k, v);
    return v;
}

std::vector<EdgeId> edges_at(const MetricGraph& g, const GraphPoint& p) {
    if (auto v = point_vertex(g, p)) {
        std::vector<EdgeId> out = g.out_edges(*v);
        out.insert(out.end(), g.in_edges(*v).begin(), g.in_edges(*v).end());
        std::sort(out.begin(), out.end());
        return out;
    }
    return {p.edge};
}

Dyadic natural_scale(const InverseSystem& sys, int i, int j, const GraphPoint& x) {
    GraphPoint xi = project(sys, i, j, x);
    auto es = edges_at(sys.graph(i), xi);
    Dyadic best = sys.graph(i).edge(es.front()).length;
    for (EdgeId e : es) best = min(best, sys.graph(i).edge(e).length);
    return best;
}

// ---------------------------------------------------------------------------
// measure

PushforwardReport pushforward_check(const InverseSystem& sys, int i) {
    PushforwardReport rep;
    const auto& gi = sys.graph(i);
    const auto& gj = sys.graph(i + 1);
    for (EdgeId e = 0; e < gi.num_edges(); ++e) {
        const auto& subs = sys.levels[static_cast<std::size_t>(i)].subdivision[static_cast<std::size_t>(e)];
        for (int k = 0; k < static_cast<int>(subs.size()); ++k) {
            const SubEdge& s = subs[static_cast<std::size_t>(k)];
            Dyadic below = gi.edge(e).weight * s.length;
            Dyadic above = gj.edge_measure(s.primary);
            if (s.is_circle()) above += gj.edge_measure(s.opposite);
            ++rep.checked;
            if (below != above) {
                rep.ok = false;
                rep.discrepancies.push_back(edge_name(i, e) + " subedge " + std::to_string(k) + ": mu_i = " +
                                            below.str() + ", preimage mass = " + above.str());
            }
        }
    }
    rep.total_mass_lower = gi.total_measure();
    rep.total_mass_upper = gj.total_measure();
    if (rep.total_mass_lower != rep.total_mass_upper) {
        rep.ok = false;
        rep.discrepancies.push_back("total mass differs: " + rep.total_mass_lower.str() + " vs " +
                                    rep.total_mass_upper.str());
    }
    return rep;
}

// ---------------------------------------------------------------------------
// axioms

bool AxiomReport::pass() const {
    return std::all_of(results.begin(), results.end(), [](const AxiomResult& r) { return r.pass; });
}

const AxiomResult& AxiomReport::get(const std::string& id) const {
    for (const auto& r : results)
        if (r.id == id) return r;
    throw SystemError("no axiom result named " + id);
}

Dyadic circle_height(const InverseSystem& sys, int i, EdgeId e, int k) {
    const SubEdge& s = sys.subedge(i, e, k);
    if (!s.is_circle()) return Dyadic();
    const auto& g = sys.graph(i + 1);
    const Edge& a = g.edge(s.primary);
    const Edge& b = g.edge(s.opposite);
    if (a.src != b.src || a.dst != b.dst) throw SystemError("circle arcs do not share endpoints");
    // Both arcs are single edges whose interiors meet the rest of X_{i+1}
    // only through the shared endpoints, so a path from p to p^op leaves
    // through one endpoint and returns through one endpoint. Going out through
    // u and back through w costs at least |e'|, which never beats the direct
    // routes, so d(p, p^op) = min(2s, 2(|e'| - s)): affine between breakpoints.
    const Dyadic& len = s.length;
    std::vector<Dyadic> candidates{Dyadic(), len.half(), len};
    Dyadic best;
    for (const auto& t : candidates) {
        Dyadic d = min(t.ldexp(1), (len - t).ldexp(1));
        best = max(best, d);
    }
    return best;
}

SubdividedGraph subdivided_graph(const InverseSystem& sys, int i) {
    SubdividedGraph out;
    const auto& g = sys.graph(i);
    for (VertexId v = 0; v < g.num_vertices(); ++v) out.graph.add_vertex();
    for (EdgeId e = 0; e < g.num_edges(); ++e) {
        const auto& subs = sys.levels[static_cast<std::size_t>(i)].subdivision[static_cast<std::size_t>(e)];
        const Edge& ed = g.edge(e);
        VertexId prev = ed.src;
        for (int k = 0; k < static_cast<int>(subs.size()); ++k) {
            VertexId next = (k + 1 == static_cast<int>(subs.size())) ? ed.dst : out.graph.add_vertex();
            out.graph.add_edge(prev, next, subs[static_cast<std::size_t>(k)].length, ed.weight);
            out.subedge_of.push_back({e, k});
            prev = next;
        }
    }
    return out;
}

namespace {

std::vector<VertexId> topological_order(const MetricGraph& g) {
    std::vector<int> indeg(static_cast<std::size_t>(g.num_vertices()), 0);
    for (const auto& e : g.edges()) ++indeg[static_cast<std::size_t>(e.dst)];
    std::vector<VertexId> order, stack;
    for (VertexId v = 0; v < g.num_vertices(); ++v)
        if (indeg[static_cast<std::size_t>(v)] == 0) stack.push_back(v);
    while (!stack.empty()) {
        VertexId v = stack.back();
        stack.pop_back();
        order.push_back(v);
        for (EdgeId e : g.out_edges(v))
            if (--indeg[static_cast<std::size_t>(g.edge(e).dst)] == 0) stack.push_back(g.edge(e).dst);
    }
    if (static_cast<int>(order.size()) != g.num_vertices()) throw SystemError("directed cycle in level graph");
    return order;
}

// Directed arrival times from vertex `zero`; nullopt if some edge is inconsistent.
std::optional<std::vector<Dyadic>> directed_times(const MetricGraph& g, VertexId zero, std::string* why) {
    auto order = topological_order(g);
    std::vector<std::optional<Dyadic>> t(static_cast<std::size_t>(g.num_vertices()));
    t[static_cast<std::size_t>(zero)] = Dyadic();
    for (VertexId v : order) {
        if (!t[static_cast<std::size_t>(v)]) {
            if (why) *why = "vertex " + std::to_string(v) + " is not reachable from 0 along directed edges";
            return std::nullopt;
        }
        for (EdgeId e : g.out_edges(v)) {
            Dyadic cand = *t[static_cast<std::size_t>(v)] + g.edge(e).length;
            auto& tw = t[static_cast<std::size_t>(g.edge(e).dst)];
            if (tw && *tw != cand) {
                if (why) *why = "directed paths to vertex " + std::to_string(g.edge(e).dst) + " have different lengths";
                return std::nullopt;
            }
            tw = cand;
        }
    }
    std::vector<Dyadic> out;
    for (auto& x : t) out.push_back(*x);
    return out;
}

}  // namespace

Dyadic min_circle_length(const InverseSystem& sys, int i) {
    SubdividedGraph sg = subdivided_graph(sys, i);
    const auto& g = sg.graph;
    auto order = topological_order(g);
    std::vector<std::optional<Dyadic>> best(static_cast<std::size_t>(g.num_vertices()));
    VertexId z = zero_vertex(sys, i), o = one_vertex(sys, i);
    best[static_cast<std::size_t>(z)] = Dyadic();
    for (VertexId v : order) {
        const auto& bv = best[static_cast<std::size_t>(v)];
        if (!bv) continue;
        for (EdgeId e : g.out_edges(v)) {
            auto [pe, k] = sg.subedge_of[static_cast<std::size_t>(e)];
            const SubEdge& s = sys.subedge(i, pe, k);
            Dyadic c = *bv + (s.is_circle() ? s.length : Dyadic());
            auto& bw = best[static_cast<std::size_t>(g.edge(e).dst)];
            if (!bw || c < *bw) bw = c;
        }
    }
    if (!best[static_cast<std::size_t>(o)]) throw SystemError("vertex 1 unreachable in X_i'");
    return *best[static_cast<std::size_t>(o)];
}

AxiomReport check_axioms(const InverseSystem& sys, const AxiomOptions& opt) {
    AxiomReport rep;
    auto alpha_thr = opt.alpha ? opt.alpha : sys.constants.alpha;
    auto beta_thr = opt.beta ? opt.beta : sys.constants.beta;

    AxiomResult a1{"A1", true, {}};
    const auto& g0 = sys.graph(0);
    if (g0.num_vertices() != 2 || g0.num_edges() != 1 || g0.edge(0).length != Dyadic(1)) {
        a1.pass = false;
        a1.messages.push_back("X_0 must be a single directed edge of length 1 between two vertices");
    }
    if (g0.num_edges() == 1 && g0.edge(0).weight != Dyadic(1)) {
        a1.pass = false;
        a1.messages.push_back("mu_0 must be Lebesgue measure");
    }
    rep.results.push_back(a1);

    AxiomResult a2i{"A2(i)", true, {}}, a2ii{"A2(ii)", true, {}}, a3{"A3", true, {}}, a4{"A4", true, {}};
    AxiomResult a5{"A5", true, {}}, a6{"A6", true, {}}, meas{"measure", true, {}};

    for (int i = 0; i < sys.top(); ++i) {
        const auto& gi = sys.graph(i);
        const auto& gj = sys.graph(i + 1);
        const auto& sub = sys.levels[static_cast<std::size_t>(i)].subdivision;
        std::optional<Rational> lvl_alpha;
        for (EdgeId e = 0; e < gi.num_edges(); ++e) {
            const auto& subs = sub[static_cast<std::size_t>(e)];
            const Edge& ed = gi.edge(e);
            if (subs.empty()) {
                a2i.pass = false;
                a2i.messages.push_back(edge_name(i, e) + " has no subdivision");
                continue;
            }
            Dyadic pos;
            VertexId expect = -1;
            try {
                expect = lift_vertex(sys, i, ed.src);
            } catch (const std::exception& ex) {
                a2i.pass = false;
                a2i.messages.push_back(edge_name(i, e) + ": " + ex.what());
            }
            for (int k = 0; k < static_cast<int>(subs.size()); ++k) {
                const SubEdge& s = subs[static_cast<std::size_t>(k)];
                std::string nm = edge_name(i, e) + " subedge " + std::to_string(k);
                if (s.start != pos) {
                    a2i.pass = false;
                    a2i.messages.push_back(nm + ": offsets do not tile the edge");
                }
                pos = s.start + s.length;
                const Edge& P = gj.edge(s.primary);
                if (P.length != s.length) {
                    a4.pass = false;
                    a4.messages.push_back(nm + ": identified edge has a different length");
                }
                if (expect >= 0 && P.src != expect) {
                    a2i.pass = false;
                    a2i.messages.push_back(nm + ": identified edges do not chain along the parent edge");
                }
                expect = P.dst;
                bool terminal_position = (k == 0 || k + 1 == static_cast<int>(subs.size()));
                if (s.terminal != terminal_position) {
                    a2ii.pass = false;
                    a2ii.messages.push_back(nm + ": terminal flag disagrees with its position");
                }
                if (s.is_circle()) {
                    const Edge& O = gj.edge(s.opposite);
                    if (O.src != P.src || O.dst != P.dst) {
                        a2i.pass = false;
                        a2i.messages.push_back(nm + ": opposite edge " + std::to_string(s.opposite) +
                                               " does not share source and sink");
                    }
                    if (O.length != s.length) {
                        a4.pass = false;
                        a4.messages.push_back(nm + ": opposite edge is not isometric to the subedge");
                    }
                    if (terminal_position) {
                        a2ii.pass = false;
                        a2ii.messages.push_back(nm + ": terminal subedge is a circle");
                    }
                    Dyadic ht = circle_height(sys, i, e, k);
                    Rational ratio = ht.to_mpq() / s.length.to_mpq();
                    if (!lvl_alpha || ratio < *lvl_alpha) lvl_alpha = ratio;
                    if (alpha_thr && ratio < *alpha_thr) {
                        a5.pass = false;
                        a5.messages.push_back(nm + ": ht/|e'| = " + ratio.get_str() + " < alpha");
                    }
                    Dyadic expect_w = (gi.edge(e).weight).half();
                    if (gj.edge(s.primary).weight != expect_w || gj.edge(s.opposite).weight != expect_w) {
                        meas.pass = false;
                        meas.messages.push_back(nm + ": circle arcs must carry half the parent density");
                    }
                } else if (gj.edge(s.primary).weight != gi.edge(e).weight) {
                    meas.pass = false;
                    meas.messages.push_back(nm + ": interval must keep the parent density");
                }
            }
            if (pos != ed.length) {
                a2i.pass = false;
                a2i.messages.push_back(edge_name(i, e) + ": subedge lengths do not sum to the edge length");
            }
            try {
                if (expect >= 0 && expect != lift_vertex(sys, i, ed.dst)) {
                    a2i.pass = false;
                    a2i.messages.push_back(edge_name(i, e) + ": last subedge does not end at the lifted sink");
                }
            } catch (const std::exception& ex) {
                a2i.pass = false;
                a2i.messages.push_back(edge_name(i, e) + ": " + ex.what());
            }
        }
        rep.alpha_per_level.push_back(lvl_alpha);
        if (lvl_alpha && (!rep.achieved_alpha || *lvl_alpha < *rep.achieved_alpha)) rep.achieved_alpha = lvl_alpha;

        if (a2i.pass) {
            Dyadic b = min_circle_length(sys, i);
            rep.beta_per_level.push_back(b);
            if (!rep.achieved_beta || b < *rep.achieved_beta) rep.achieved_beta = b;
            if (b.is_zero()) {
                a6.pass = false;
                a6.messages.push_back("X_" + std::to_string(i) + "': some 0-1 path carries no circle (beta = 0)");
            } else if (beta_thr && b.to_mpq() < *beta_thr) {
                a6.pass = false;
                a6.messages.push_back("X_" + std::to_string(i) + "': some 0-1 path has circle length " + b.str() +
                                      " < beta");
            }
        } else {
            rep.beta_per_level.push_back(std::nullopt);
        }
    }
    if (!beta_thr) a6.messages.push_back("no beta declared; achieved value reported only");
    if (!alpha_thr) a5.messages.push_back("no alpha declared; achieved value reported only");

    for (int i = 0; i <= sys.top(); ++i) {
        std::string why;
        if (!directed_times(sys.graph(i), zero_vertex(sys, i), &why)) {
            a3.pass = false;
            a3.messages.push_back("X_" + std::to_string(i) + ": " + why);
        }
        if (sys.graph(i).total_measure() != Dyadic(1)) {
            meas.pass = false;
            meas.messages.push_back("X_" + std::to_string(i) + ": total measure " +
                                    sys.graph(i).total_measure().str());
        }
    }
    rep.results.push_back(a2i);
    rep.results.push_back(a2ii);
    rep.results.push_back(a3);
    rep.results.push_back(a4);
    rep.results.push_back(a5);
    rep.results.push_back(a6);
    rep.results.push_back(meas);
    return rep;
}

// ---------------------------------------------------------------------------
// deltas

DeltaReport compute_deltas(const InverseSystem& sys, int i) {
    DeltaReport rep;
    const auto& g = sys.graph(i);
    const auto& sub = sys.levels.at(static_cast<std::size_t>(i)).subdivision;
    rep.Delta_E = g.edge(0).length;
    for (const auto& e : g.edges()) rep.Delta_E = min(rep.Delta_E, e.length);
    for (EdgeId e = 0; e < g.num_edges(); ++e) {
        const auto& subs = sub.at(static_cast<std::size_t>(e));
        const Edge& ed = g.edge(e);
        Dyadic lo, hi;
        bool any = false;
        for (const auto& s : subs) {
            rep.max_subedge = max(rep.max_subedge, s.length);
            if (s.terminal) continue;
            if (!rep.max_nonterminal || *rep.max_nonterminal < s.length) rep.max_nonterminal = s.length;
            if (!any) lo = s.start;
            hi = s.start + s.length;
            any = true;
        }
        if (!any) continue;
        // X_i minus e touches e only at endpoints with other incident edges.
        std::vector<VertexId> exits;
        if (g.degree(ed.src) > 1) exits.push_back(ed.src);
        if (g.degree(ed.dst) > 1) exits.push_back(ed.dst);
        for (const Dyadic& off : {lo, hi}) {
            auto f = distances_from(g, GraphPoint{e, off});
            for (VertexId v : exits) {
                const auto& d = f.dist[static_cast<std::size_t>(v)];
                if (d && (!rep.Delta_d || *d < *rep.Delta_d)) rep.Delta_d = *d;
            }
        }
    }
    rep.delta_E = rep.max_subedge.to_mpq() / rep.Delta_E.to_mpq();
    if (rep.Delta_d && rep.max_nonterminal) rep.delta_d = rep.max_nonterminal->to_mpq() / rep.Delta_d->to_mpq();
    return rep;
}

// ---------------------------------------------------------------------------
// Lipschitz checks

std::vector<PointPair> all_vertex_pairs(const MetricGraph& g) {
    std::vector<PointPair> out;
    for (VertexId u = 0; u < g.num_vertices(); ++u)
        for (VertexId v = u + 1; v < g.num_vertices(); ++v)
            out.push_back({vertex_point(g, u), vertex_point(g, v)});
    return out;
}

namespace {

GraphPoint random_point(const MetricGraph& g, std::mt19937_64& rng, int bits) {
    std::uniform_int_distribution<int> pe(0, g.num_edges() - 1);
    EdgeId e = pe(rng);
    std::uniform_int_distribution<long long> po(0, (1LL << bits));
    Dyadic off = g.edge(e).length * Dyadic(po(rng)).ldexp(-bits);
    return canonical(g, GraphPoint{e, off});
}

}  // namespace

std::vector<PointPair> sample_pairs(const MetricGraph& g, int count, int sources, std::mt19937_64& rng,
                                    int offset_bits) {
    std::vector<GraphPoint> pool;
    for (int s = 0; s < std::max(1, sources); ++s) pool.push_back(random_point(g, rng, offset_bits));
    std::vector<PointPair> out;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int c = 0; c < count; ++c) out.push_back({pool[pick(rng)], random_point(g, rng, offset_bits)});
    return out;
}

bool on_opposite_open_edges(const InverseSystem& sys, int i, const GraphPoint& x, const GraphPoint& y) {
    const auto& g = sys.graph(i + 1);
    if (point_vertex(g, x) || point_vertex(g, y)) return false;
    if (x.edge == y.edge) return false;
    const Lift& a = sys.lifts[static_cast<std::size_t>(i)][static_cast<std::size_t>(x.edge)];
    const Lift& b = sys.lifts[static_cast<std::size_t>(i)][static_cast<std::size_t>(y.edge)];
    return a.parent == b.parent && a.sub == b.sub;
}

LipReport lip_bound_check(const InverseSystem& sys, int i, int j, const std::vector<PointPair>& pairs) {
    LipReport rep;
    const auto& gj = sys.graph(j);
    const auto& gi = sys.graph(i);
    std::map<std::pair<EdgeId, Dyadic>, std::vector<std::size_t>> by_source;
    for (std::size_t k = 0; k < pairs.size(); ++k) by_source[key(canonical(gj, pairs[k].x))].push_back(k);
    for (const auto& [src, idxs] : by_source) {
        GraphPoint x{src.first, src.second};
        auto fj = distances_from(gj, x);
        GraphPoint px = project(sys, i, j, x);
        auto fi = distances_from(gi, px);
        for (std::size_t k : idxs) {
            GraphPoint y = canonical(gj, pairs[k].y);
            if (y == x) {
                ++rep.skipped;
                continue;
            }
            Dyadic dj = *distance_to(gj, fj, y);
            Dyadic di = *distance_to(gi, fi, project(sys, i, j, y));
            Rational r = di.to_mpq() / dj.to_mpq();
            ++rep.pairs;
            if (r > rep.max_ratio) rep.max_ratio = r;
            bool opp = (j == i + 1) && on_opposite_open_edges(sys, i, x, y);
            if (opp) {
                ++rep.opposite_pairs;
                continue;
            }
            if (!rep.min_ratio_nonopposite || r < *rep.min_ratio_nonopposite) rep.min_ratio_nonopposite = r;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// fibers

namespace {

// All representations (edge, offset) of a canonical point.
std::vector<GraphPoint> representations(const MetricGraph& g, const GraphPoint& p) {
    if (auto v = point_vertex(g, p)) {
        std::vector<GraphPoint> out;
        for (EdgeId e : g.out_edges(*v)) out.push_back({e, Dyadic()});
        for (EdgeId e : g.in_edges(*v)) out.push_back({e, g.edge(e).length});
        return out;
    }
    return {p};
}

// Points of X_{k+1} over p in X_k, with the fraction of mass each receives.
std::vector<std::pair<GraphPoint, Dyadic>> step_fiber(const InverseSystem& sys, int k, const GraphPoint& p) {
    const auto& gk = sys.graph(k);
    const auto& gn = sys.graph(k + 1);
    std::map<std::pair<EdgeId, Dyadic>, GraphPoint> pts;
    bool split = false;
    for (const auto& r : representations(gk, canonical(gk, p))) {
        const auto& subs = sys.levels[static_cast<std::size_t>(k)].subdivision[static_cast<std::size_t>(r.edge)];
        for (const auto& s : subs) {
            if (r.offset < s.start || s.start + s.length < r.offset) continue;
            Dyadic off = r.offset - s.start;
            GraphPoint a = canonical(gn, {s.primary, off});
            pts[key(a)] = a;
            if (s.is_circle()) {
                GraphPoint b = canonical(gn, {s.opposite, off});
                pts[key(b)] = b;
                if (!(a == b)) split = true;
            }
        }
    }
    std::vector<std::pair<GraphPoint, Dyadic>> out;
    // Points of a circle pair share the mass equally; anything else is the
    // same point reached from adjacent subedges.
    Dyadic share = split ? Dyadic(1).ldexp(-1) : Dyadic(1);
    if (split && pts.size() != 2) {
        // Adjacent circles met at a subdivision vertex that splits in two
        // (generalized diamonds); spread the mass evenly.
        Dyadic n(static_cast<long long>(pts.size()));
        if ((pts.size() & (pts.size() - 1)) != 0) throw SystemError("fiber split into a non power-of-two count");
        int bits = 0;
        while ((std::size_t(1) << bits) < pts.size()) ++bits;
        share = Dyadic(1).ldexp(-bits);
    }
    for (auto& [kk, pt] : pts) out.push_back({pt, share});
    return out;
}

}  // namespace

std::vector<GraphPoint> fiber_points(const InverseSystem& sys, int i, int j, const GraphPoint& p) {
    std::vector<GraphPoint> cur{canonical(sys.graph(i), p)};
    for (int k = i; k < j; ++k) {
        std::map<std::pair<EdgeId, Dyadic>, GraphPoint> next;
        for (const auto& q : cur)
            for (auto& [pt, m] : step_fiber(sys, k, q)) next[key(pt)] = pt;
        cur.clear();
        for (auto& [kk, pt] : next) cur.push_back(pt);
    }
    return cur;
}

FiberMeasure fiber_measure(const InverseSystem& sys, int i, const GraphPoint& p, int J) {
    FiberMeasure cur{{canonical(sys.graph(i), p), Dyadic(1)}};
    for (int k = i; k < J; ++k) {
        std::map<std::pair<EdgeId, Dyadic>, FiberAtom> next;
        for (const auto& atom : cur)
            for (auto& [pt, share] : step_fiber(sys, k, atom.point)) {
                auto& slot = next[key(pt)];
                slot.point = pt;
                slot.mass += atom.mass * share;
            }
        cur.clear();
        for (auto& [kk, a] : next) cur.push_back(a);
    }
    return cur;
}

std::vector<GraphPoint> subdivision_points(const InverseSystem& sys, int i) {
    const auto& g = sys.graph(i);
    std::map<std::pair<EdgeId, Dyadic>, GraphPoint> pts;
    for (EdgeId e = 0; e < g.num_edges(); ++e) {
        for (const auto& s : sys.levels[static_cast<std::size_t>(i)].subdivision[static_cast<std::size_t>(e)]) {
            for (const Dyadic& off : {s.start, s.start + s.length.half(), s.start + s.length}) {
                GraphPoint p = canonical(g, {e, off});
                pts[key(p)] = p;
            }
        }
    }
    std::vector<GraphPoint> out;
    for (auto& [k, p] : pts) out.push_back(p);
    return out;
}

FiberDiameterReport fiber_diameter_check(const InverseSystem& sys, int i, int j,
                                         const std::vector<GraphPoint>& base_points) {
    FiberDiameterReport rep;
    const auto& gj = sys.graph(j);
    for (const auto& b : base_points) {
        ++rep.base_points;
        auto fib = fiber_points(sys, i, j, b);
        Dyadic diam;
        for (std::size_t a = 0; a + 1 < fib.size(); ++a) {
            auto f = distances_from(gj, fib[a]);
            for (std::size_t c = a + 1; c < fib.size(); ++c) diam = max(diam, *distance_to(gj, f, fib[c]));
        }
        Dyadic scale = natural_scale(sys, i, i, b);
        Rational r = diam.to_mpq() / scale.to_mpq();
        if (r > rep.max_ratio) {
            rep.max_ratio = r;
            rep.argmax = b;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// deep points, circle sets, Alberti

DeepPointReport deep_point_report(const InverseSystem& sys, int J) {
    DeepPointReport rep;
    for (int i = 0; i < std::min(J, sys.top()); ++i) {
        const auto& gi = sys.graph(i);
        const auto& gn = sys.graph(i + 1);
        Dyadic m;
        for (EdgeId e = 0; e < gi.num_edges(); ++e)
            for (const auto& s : sys.levels[static_cast<std::size_t>(i)].subdivision[static_cast<std::size_t>(e)])
                if (s.terminal) m += gn.edge_measure(s.primary);
        rep.terminal_measure.push_back(m);
        rep.bound.push_back(2 * compute_deltas(sys, i).delta_E);
        rep.cumulative += m;
    }
    return rep;
}

Dyadic circle_set_measure(const InverseSystem& sys, int i) {
    const auto& gi = sys.graph(i);
    Dyadic m;
    for (EdgeId e = 0; e < gi.num_edges(); ++e)
        for (const auto& s : sys.levels[static_cast<std::size_t>(i)].subdivision[static_cast<std::size_t>(e)])
            if (s.is_circle()) m += gi.edge(e).weight * s.length;
    return m;
}

PathMeasure alberti_representation(const InverseSystem& sys, int i) {
    PathMeasure cur{{{0}, Dyadic(1)}};
    for (int k = 0; k < i; ++k) {
        PathMeasure next;
        for (const auto& wp : cur) {
            std::vector<EdgeId> P, Pop;
            bool differs = false;
            for (EdgeId e : wp.edges) {
                for (const auto& s : sys.levels[static_cast<std::size_t>(k)].subdivision[static_cast<std::size_t>(e)]) {
                    P.push_back(s.primary);
                    Pop.push_back(s.opposite);
                    differs = differs || s.is_circle();
                }
            }
            if (differs) {
                next.push_back({P, wp.probability.half()});
                next.push_back({Pop, wp.probability.half()});
            } else {
                next.push_back({P, wp.probability});
            }
        }
        cur = std::move(next);
    }
    return cur;
}

Dyadic alberti_measure(const InverseSystem& sys, int i, const PathMeasure& pm, const SegmentSet& a) {
    (void)sys;
    (void)i;
    Dyadic total;
    for (const auto& wp : pm) {
        std::set<EdgeId> on(wp.edges.begin(), wp.edges.end());
        Dyadic len;
        for (const auto& [e, iv] : a.pieces())
            if (on.count(e)) len += iv.b - iv.a;
        total += wp.probability * len;
    }
    return total;
}

// ---------------------------------------------------------------------------
// rescaled balls

RescaledBall rescaled_ball(const InverseSystem& sys, int j, const GraphPoint& x, int i, const Dyadic& R) {
    RescaledBall rb;
    GraphPoint xi = project(sys, i, j, x);
    const auto& g = sys.graph(i);
    rb.scale = natural_scale(sys, i, i, xi);
    Dyadic radius = R * rb.scale;
    auto f = distances_from(g, xi);
    SegmentSet B = ball(g, f, radius);
    Rational s = rb.scale.to_mpq();
    std::map<std::pair<EdgeId, Dyadic>, GraphPoint> pts;
    for (const auto& [e, iv] : B.pieces())
        for (const Dyadic& t : {iv.a, (iv.a + iv.b).half(), iv.b}) {
            GraphPoint p = canonical(g, {e, t});
            pts[key(p)] = p;
        }
    for (auto& [k, p] : pts) rb.points.push_back({p, distance_to(g, f, p)->to_mpq() / s});
    if (i >= 1) {
        GraphPoint xp = project(sys, i - 1, i, xi);
        auto parents = edges_at(sys.graph(i - 1), xp);
        rb.inside_edge_preimage = false;
        for (EdgeId pe : parents) {
            bool inside = true;
            for (const auto& [e, iv] : B.pieces()) {
                // Walk the piece's edge down to level i-1.
                const Lift& l = sys.lifts[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(e)];
                if (l.parent != pe) {
                    inside = false;
                    break;
                }
            }
            if (inside) rb.inside_edge_preimage = true;
        }
        if (!point_vertex(g, xi)) {
            const Lift& l = sys.lifts[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(xi.edge)];
            const SubEdge& se = sys.subedge(i - 1, l.parent, l.sub);
            if (se.is_circle()) {
                rb.normalized_circle_height = circle_height(sys, i - 1, l.parent, l.sub).to_mpq() / s;
                GraphPoint op = opposite_point(sys, i - 1, xi);
                rb.normalized_opposite_distance = distance_to(g, f, op)->to_mpq() / s;
            }
        }
    }
    return rb;
}

std::vector<std::vector<EdgeId>> enumerate_paths(const MetricGraph& g, VertexId from, VertexId to,
                                                 std::size_t limit) {
    std::vector<std::vector<EdgeId>> out;
    std::vector<EdgeId> cur;
    std::function<void(VertexId)> rec = [&](VertexId v) {
        if (out.size() >= limit) throw SystemError("enumerate_paths: path limit exceeded");
        if (v == to) {
            out.push_back(cur);
            return;
        }
        for (EdgeId e : g.out_edges(v)) {
            cur.push_back(e);
            rec(g.edge(e).dst);
            cur.pop_back();
        }
    };
    rec(from);
    return out;
}

}  // namespace invsys
