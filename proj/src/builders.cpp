// SPDX-License-Identifier: MIT
#include "invsys/builders.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>

namespace invsys {

std::size_t edge_budget() {
    if (const char* env = std::getenv("INVSYS_EDGE_BUDGET")) {
        try {
            long long v = std::stoll(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
        throw BudgetError(std::string("INVSYS_EDGE_BUDGET is not a positive integer: ") + env);
    }
    return std::size_t(1) << 21;
}

// ---------------------------------------------------------------------------
// Laakso system

InverseSystem build_laakso(int levels) {
    if (levels < 0) throw PreconditionError("build_laakso: levels must be >= 0");
    std::size_t budget = edge_budget();
    if (levels > 30 || (std::size_t(1) << (2 * levels)) > budget)
        throw BudgetError("build_laakso: level " + std::to_string(levels) + " has 4^" + std::to_string(levels) +
                          " edges, above the edge budget " + std::to_string(budget) +
                          " (set INVSYS_EDGE_BUDGET to raise it)");
    InverseSystem sys;
    sys.name = "laakso";
    Level l0;
    l0.graph.add_vertex();
    l0.graph.add_vertex();
    l0.graph.add_edge(0, 1, Dyadic(1), Dyadic(1));
    sys.levels.push_back(std::move(l0));
    for (int i = 0; i < levels; ++i) {
        Level& cur = sys.levels.back();
        Level next;
        for (VertexId v = 0; v < cur.graph.num_vertices(); ++v) next.graph.add_vertex();
        cur.subdivision.assign(static_cast<std::size_t>(cur.graph.num_edges()), {});
        for (const Edge& e : cur.graph.edges()) {
            Dyadic q = e.length.ldexp(-2);
            Dyadic h = e.length.half();
            VertexId p = next.graph.add_vertex();
            VertexId r = next.graph.add_vertex();
            EdgeId el = next.graph.add_edge(e.src, p, q, e.weight);
            EdgeId a0 = next.graph.add_edge(p, r, h, e.weight.half());
            EdgeId a1 = next.graph.add_edge(p, r, h, e.weight.half());
            EdgeId er = next.graph.add_edge(r, e.dst, q, e.weight);
            cur.subdivision[static_cast<std::size_t>(e.id)] = {
                SubEdge{Dyadic(), q, true, el, el},
                SubEdge{q, h, false, a0, a1},
                SubEdge{q + h, q, true, er, er},
            };
        }
        sys.levels.push_back(std::move(next));
    }
    sys.levels.back().subdivision.clear();
    sys.rebuild_lifts();
    sys.constants.alpha = Rational(1);
    sys.constants.beta = Rational(1, 2);
    for (int i = 0; i < levels; ++i) {
        DeltaReport d = compute_deltas(sys, i);
        sys.constants.delta_E.push_back(d.delta_E);
        sys.constants.delta_d.push_back(d.delta_d);
    }
    return sys;
}

std::string laakso_address(const InverseSystem& sys, int i, EdgeId e) {
    std::string out;
    for (int k = i - 1; k >= 0; --k) {
        const Lift& l = sys.lifts.at(static_cast<std::size_t>(k)).at(static_cast<std::size_t>(e));
        char ch = l.sub == 0 ? 'L' : (l.sub == 2 ? 'R' : (l.opposite ? '1' : '0'));
        out.push_back(ch);
        e = l.parent;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// host

bool Member::touches(const std::string& node) const {
    auto it = flipped.lower_bound(node);
    return it != flipped.end() && it->compare(0, node.size(), node) == 0;
}

Member Member::with_flip(const std::string& node) const {
    Member m = *this;
    if (!m.flipped.erase(node)) m.flipped.insert(node);
    return m;
}

void Partition::check() const {
    if (times.size() < 2) throw PreconditionError("partition needs at least its two endpoints");
    for (std::size_t k = 0; k + 1 < times.size(); ++k)
        if (!(times[k] < times[k + 1])) throw PreconditionError("partition times must increase strictly");
}

namespace {

struct Node {
    std::string addr;
    Dyadic a;
    Dyadic b;
    Dyadic len() const { return b - a; }
    Dyadic c() const { return a + len().ldexp(-2); }
    Dyadic d() const { return b - len().ldexp(-2); }
    Node left() const { return {addr + 'L', a, c()}; }
    Node right() const { return {addr + 'R', d(), b}; }
    Node arc(bool bit) const { return {addr + (bit ? '1' : '0'), c(), d()}; }
};

Node root() { return {"", Dyadic(), Dyadic(1)}; }

// Circles where two members first choose different arcs; they have disjoint
// interiors and the members coincide outside them.
void diff_circles(const Member& w1, const Member& w2, const Node& n, std::vector<HostCircle>& out) {
    if (!w1.touches(n.addr) && !w2.touches(n.addr)) return;
    bool b1 = w1.bit(n.addr), b2 = w2.bit(n.addr);
    if (b1 != b2)
        out.push_back({n.addr, n.c(), n.d()});
    else
        diff_circles(w1, w2, n.arc(b1), out);
    diff_circles(w1, w2, n.left(), out);
    diff_circles(w1, w2, n.right(), out);
}

Dyadic absdiff(const Dyadic& x, const Dyadic& y) { return x < y ? y - x : x - y; }

}  // namespace

Dyadic LaaksoOracle::distance(const Member& w1, const Dyadic& s1, const Member& w2, const Dyadic& s2) const {
    if (s1 < Dyadic() || Dyadic(1) < s1 || s2 < Dyadic() || Dyadic(1) < s2)
        throw PreconditionError("host time outside [0,1]");
    Node n = root();
    for (;;) {
        if (!w1.touches(n.addr) && !w2.touches(n.addr)) return absdiff(s1, s2);
        Dyadic c = n.c(), d = n.d();
        auto region = [&](const Dyadic& s) { return s < c ? 0 : (s == c ? 1 : (s < d ? 2 : (s == d ? 3 : 4))); };
        int r1 = region(s1), r2 = region(s2);
        if (r1 != r2 || r1 == 1 || r1 == 3) return absdiff(s1, s2);
        if (r1 == 0) {
            n = n.left();
        } else if (r1 == 4) {
            n = n.right();
        } else {
            bool b1 = w1.bit(n.addr), b2 = w2.bit(n.addr);
            if (b1 != b2) {
                // Leave through one end of the circle and come back on the other arc.
                Dyadic via_c = (s1 - c) + (s2 - c);
                Dyadic via_d = (d - s1) + (d - s2);
                return min(via_c, via_d);
            }
            n = n.arc(b1);
        }
    }
}

Dyadic LaaksoOracle::resolution(const Dyadic& edge_length) const { return edge_length.ldexp(-2 * depth_); }

std::vector<HostCircle> LaaksoOracle::circles_along(const Member& w, const Dyadic& a, const Dyadic& b,
                                                    const Dyadic& edge_length) const {
    std::vector<HostCircle> out;
    Dyadic res = resolution(edge_length);
    std::vector<Node> stack{root()};
    while (!stack.empty()) {
        Node n = stack.back();
        stack.pop_back();
        if (!(res < n.len())) continue;
        if (!(a < n.b) || !(n.a < b)) continue;
        Dyadic c = n.c(), d = n.d();
        if (!(c < a) && !(b < d)) out.push_back({n.addr, c, d});
        stack.push_back(n.right());
        stack.push_back(n.arc(w.bit(n.addr)));
        stack.push_back(n.left());
    }
    return out;
}

DeviationRecord deviation(const LaaksoOracle& oracle, const Member& gamma, const Member& gamma_tilde,
                          const Partition& T) {
    T.check();
    for (const auto& t : T.times)
        if (oracle.distance(gamma, t, gamma_tilde, t) != Dyadic())
            throw PreconditionError("deviation: curves differ at partition time " + t.str());
    DeviationRecord rec;
    rec.partition = T;
    rec.gamma_tilde = gamma_tilde;
    std::vector<HostCircle> diffs;
    diff_circles(gamma, gamma_tilde, root(), diffs);
    // d(gamma(s), gamma_tilde(s)) is a tent over each differing circle and
    // zero elsewhere, so the maximum on a gap sits at the gap ends or at the
    // clamped tent apex.
    for (std::size_t k = 0; k + 1 < T.times.size(); ++k) {
        const Dyadic& t0 = T.times[k];
        const Dyadic& t1 = T.times[k + 1];
        std::vector<Dyadic> cand{t0, t1};
        for (const auto& hc : diffs) {
            if (!(hc.c < t1) || !(t0 < hc.d)) continue;
            Dyadic mid = (hc.c + hc.d).half();
            cand.push_back(max(t0, min(t1, mid)));
        }
        Dyadic best;
        for (const auto& s : cand) best = max(best, oracle.distance(gamma, s, gamma_tilde, s));
        rec.gap_max.push_back(best);
        rec.total += best;
    }
    for (const auto& hc : diffs)
        if (!(hc.d < T.times.front()) && !(T.times.back() < hc.c)) rec.flipped.push_back(hc);
    return rec;
}

DeviationRecord select_sup2(const LaaksoOracle& oracle, const HostSegment& e, const Partition& T,
                            const Sup2Options& opt) {
    T.check();
    if (T.times.front() != e.a || T.times.back() != e.b)
        throw PreconditionError("select_sup2: partition must span the segment");
    if (!oracle.thick()) return deviation(oracle, e.member, e.member, T);
    auto circles = oracle.circles_along(e.member, e.a, e.b, opt.reference_length.value_or(e.length()));
    std::vector<HostCircle> eligible;
    for (const auto& hc : circles) {
        if (opt.max_span && *opt.max_span < hc.span()) continue;
        if (opt.min_span && hc.span() < *opt.min_span) continue;
        bool blocked = false;
        for (const auto& t : T.times)
            if (hc.c < t && t < hc.d) blocked = true;
        if (!blocked) eligible.push_back(hc);
    }
    // Circles along one member are nested or have disjoint interiors, and the
    // circles nested in one of span S fit into an arc of length S, so their
    // spans sum to less than S. Taking the longest available circle first
    // therefore maximises the total deviation.
    std::sort(eligible.begin(), eligible.end(), [](const HostCircle& x, const HostCircle& y) {
        if (x.span() != y.span()) return y.span() < x.span();
        return x.c < y.c;
    });
    std::vector<HostCircle> chosen;
    Member tilde = e.member;
    for (const auto& hc : eligible) {
        bool inside = false;
        for (const auto& ch : chosen)
            if (!(hc.c < ch.c) && !(ch.d < hc.d)) inside = true;
        if (inside) continue;
        chosen.push_back(hc);
        tilde = tilde.with_flip(hc.node);
    }
    std::vector<Dyadic> times = T.times;
    for (const auto& hc : chosen) {
        times.push_back(hc.c);
        times.push_back(hc.d);
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    return deviation(oracle, e.member, tilde, Partition{times});
}

namespace {

// Members of the battery used to measure thickness.
std::vector<Member> thickness_members() {
    return {Member{}, Member{{""}}, Member{{"", "1"}}, Member{{"0L", "R"}}};
}

std::vector<Partition> thickness_partitions() {
    std::vector<Partition> out;
    out.push_back({{Dyadic(), Dyadic(1)}});
    for (int k = 1; k <= 3; ++k) {
        Partition p;
        for (int j = 0; j <= (1 << k); ++j) p.times.push_back(Dyadic(j).ldexp(-k));
        out.push_back(p);
    }
    out.push_back({{Dyadic(), Dyadic::parse("5/16"), Dyadic::parse("11/16"), Dyadic(1)}});
    out.push_back({{Dyadic(), Dyadic::parse("3/8"), Dyadic::parse("1/2"), Dyadic::parse("5/8"), Dyadic(1)}});
    return out;
}

}  // namespace

Rational LaaksoOracle::raw_thickness() const {
    std::optional<Dyadic> best;
    for (const auto& m : thickness_members())
        for (const auto& p : thickness_partitions()) {
            Dyadic d = select_sup2(*this, HostSegment{m, Dyadic(), Dyadic(1)}, p).total;
            if (!best || d < *best) best = d;
        }
    return best->to_mpq();
}

Dyadic LaaksoOracle::measured_alpha() const {
    Rational raw = raw_thickness();
    if (raw <= 0) return Dyadic();
    Dyadic a = Dyadic::parse("1/2");
    while (raw < a.to_mpq()) a = a.half();
    return a;
}

// ---------------------------------------------------------------------------
// thick system

namespace {

struct Piece {
    Dyadic s0;
    Dyadic s1;
    bool terminal = false;
    std::optional<HostCircle> circle;
};

Dyadic pow2_floor(const Dyadic& x) {
    Dyadic p(1);
    while (x < p) p = p.half();
    while (!(x < p.ldexp(1))) p = p.ldexp(1);
    return p;
}

// Split [x, y] (a multiple of g) into grid pieces of length at most cap.
void split_region(const Dyadic& x, const Dyadic& y, const Dyadic& g, const Dyadic& cap, std::vector<Piece>& out) {
    Dyadic step = g;
    while (!(cap < step.ldexp(1))) step = step.ldexp(1);  // largest power of two multiple of g <= cap
    Dyadic s = x;
    while (s < y) {
        Dyadic t = min(y, s + step);
        out.push_back({s, t, false, std::nullopt});
        s = t;
    }
}

}  // namespace

InverseSystem build_thick_system(const LaaksoOracle& oracle, const std::vector<Dyadic>& delta_prime, int levels,
                                 ThickBuildReport* report) {
    if (levels < 1) throw PreconditionError("build_thick_system: levels must be >= 1");
    if (static_cast<int>(delta_prime.size()) < levels - 1)
        throw PreconditionError("build_thick_system: need one delta' per refined level");
    for (const auto& d : delta_prime)
        if (!(Dyadic() < d)) throw PreconditionError("build_thick_system: delta' must be positive");
    if (!delta_prime.empty() && !(delta_prime[0] < Dyadic::parse("1/2")))
        throw PreconditionError("build_thick_system: delta'_0 must be < 1/2");
    const std::size_t budget = edge_budget();

    Dyadic alpha_prime = oracle.measured_alpha();
    Dyadic beta = alpha_prime.ldexp(-3);
    Rational alpha_r = alpha_prime.to_mpq() / 4;
    ThickBuildReport rep;
    rep.alpha_prime = alpha_prime;

    InverseSystem sys;
    sys.name = "thick";
    Level l0;
    l0.graph.add_vertex();
    l0.graph.add_vertex();
    l0.graph.add_edge(0, 1, Dyadic(1), Dyadic(1));
    sys.levels.push_back(std::move(l0));
    std::vector<HostSegment> geo{HostSegment{Member{}, Dyadic(), Dyadic(1)}};
    rep.edges.push_back(1);

    for (int i = 0; i + 1 < levels; ++i) {
        const MetricGraph& g = sys.levels.back().graph;
        const Dyadic dp = delta_prime[static_cast<std::size_t>(i)];
        Dyadic dE = g.edge(0).length;
        for (const auto& e : g.edges()) dE = min(dE, e.length);

        auto exits = [&](const Edge& e) { return g.degree(e.src) > 1 || g.degree(e.dst) > 1; };
        auto min_tau = [&](const std::vector<Dyadic>& tau) {
            std::optional<Dyadic> m;
            for (const auto& e : g.edges())
                if (exits(e) && (!m || tau[static_cast<std::size_t>(e.id)] < *m)) m = tau[static_cast<std::size_t>(e.id)];
            return m;
        };
        // Terminal cut lengths before and after snapping to the grid. A point
        // at distance tau inside e reaches the nearer endpoint in exactly tau,
        // because every edge is geodesic for the time coordinate.
        std::vector<Dyadic> tau0;
        // A family without thickness has beta = 0; the cut then falls back to delta' Delta^E.
        for (const auto& e : g.edges())
            tau0.push_back(beta.is_zero() ? dp * dE : min(beta.half() * e.length, dp * dE));
        auto dd0 = min_tau(tau0);
        Dyadic eps0 = dp * (dd0 ? min(dE, *dd0) : dE);
        Dyadic grid = pow2_floor(eps0.ldexp(-3));
        int gbits = grid.log2_denominator();
        std::vector<Dyadic> tau;
        for (const auto& t : tau0) tau.push_back(t.floor_to(gbits));
        auto dd = min_tau(tau);
        Dyadic eps = dp * (dd ? min(dE, *dd) : dE);
        rep.epsilon.push_back(eps);
        rep.grid.push_back(grid);

        std::vector<std::vector<Piece>> plan(static_cast<std::size_t>(g.num_edges()));
        std::size_t new_edges = 0;
        int circles = 0;
        for (const auto& e : g.edges()) {
            const HostSegment& seg = geo[static_cast<std::size_t>(e.id)];
            const Dyadic& t = tau[static_cast<std::size_t>(e.id)];
            Dyadic lo = seg.a + t, hi = seg.b - t;
            Dyadic res = oracle.resolution(e.length);
            if (oracle.thick() && !(res < eps.ldexp(1))) {
                int need = oracle.depth();
                while (!(oracle.resolution(e.length).ldexp(-2 * (need - oracle.depth())) < eps.ldexp(1))) ++need;
                throw PreconditionError("build_thick_system: host depth " + std::to_string(oracle.depth()) +
                                        " cannot resolve circles of span <= " + eps.str() + " on an edge of length " +
                                        e.length.str() + "; increase host depth to at least " + std::to_string(need));
            }
            // Circles are chosen inside the window only, so terminal subedges
            // stay intervals; resolution stays relative to the full edge.
            Sup2Options opt;
            opt.max_span = eps;
            opt.min_span = grid.ldexp(1);
            opt.reference_length = e.length;
            DeviationRecord rec = select_sup2(oracle, HostSegment{seg.member, lo, hi}, Partition{{lo, hi}}, opt);
            auto& pieces = plan[static_cast<std::size_t>(e.id)];
            pieces.push_back({seg.a, lo, true, std::nullopt});
            Dyadic cursor = lo;
            std::vector<HostCircle> fl = rec.flipped;
            std::sort(fl.begin(), fl.end(), [](const HostCircle& x, const HostCircle& y) { return x.c < y.c; });
            for (const auto& hc : fl) {
                split_region(cursor, hc.c, grid, eps, pieces);
                // Height of the bubble measured in the host.
                Dyadic mid = (hc.c + hc.d).half();
                Dyadic ht = oracle.distance(seg.member, mid, seg.member.with_flip(hc.node), mid);
                if (!(ht.to_mpq() < alpha_r * hc.span().to_mpq())) {
                    pieces.push_back({hc.c, hc.d, false, hc});
                    ++circles;
                } else {
                    pieces.push_back({hc.c, hc.d, false, std::nullopt});
                }
                cursor = hc.d;
            }
            split_region(cursor, hi, grid, eps, pieces);
            pieces.push_back({hi, seg.b, true, std::nullopt});
            for (const auto& p : pieces) new_edges += p.circle ? 2 : 1;
            if (new_edges > budget)
                throw BudgetError("build_thick_system: level " + std::to_string(i + 1) + " exceeds the edge budget " +
                                  std::to_string(budget) + " (set INVSYS_EDGE_BUDGET to raise it)");
        }
        rep.circles.push_back(circles);

        Level next;
        std::vector<HostSegment> next_geo;
        for (VertexId v = 0; v < g.num_vertices(); ++v) next.graph.add_vertex();
        auto& sub = sys.levels.back().subdivision;
        sub.assign(static_cast<std::size_t>(g.num_edges()), {});
        for (const auto& e : g.edges()) {
            const HostSegment& seg = geo[static_cast<std::size_t>(e.id)];
            const auto& pieces = plan[static_cast<std::size_t>(e.id)];
            VertexId prev = e.src;
            for (std::size_t k = 0; k < pieces.size(); ++k) {
                const Piece& p = pieces[k];
                VertexId nv = (k + 1 == pieces.size()) ? e.dst : next.graph.add_vertex();
                Dyadic len = p.s1 - p.s0;
                SubEdge s;
                s.start = p.s0 - seg.a;
                s.length = len;
                s.terminal = p.terminal;
                if (p.circle) {
                    s.primary = next.graph.add_edge(prev, nv, len, e.weight.half());
                    next_geo.push_back({seg.member, p.s0, p.s1});
                    s.opposite = next.graph.add_edge(prev, nv, len, e.weight.half());
                    next_geo.push_back({seg.member.with_flip(p.circle->node), p.s0, p.s1});
                } else {
                    s.primary = s.opposite = next.graph.add_edge(prev, nv, len, e.weight);
                    next_geo.push_back({seg.member, p.s0, p.s1});
                }
                sub[static_cast<std::size_t>(e.id)].push_back(s);
                prev = nv;
            }
        }
        sys.levels.push_back(std::move(next));
        geo = std::move(next_geo);
        rep.edges.push_back(static_cast<std::size_t>(sys.levels.back().graph.num_edges()));
    }
    sys.rebuild_lifts();
    sys.constants.alpha = alpha_r;
    sys.constants.beta = beta.to_mpq();
    Rational L = 1;
    for (int i = 0; i + 1 < levels; ++i) {
        const Dyadic& d = delta_prime[static_cast<std::size_t>(i)];
        sys.constants.delta_prime.push_back(d);
        L /= (1 - 2 * d.to_mpq());
        DeltaReport dr = compute_deltas(sys, i);
        sys.constants.delta_E.push_back(dr.delta_E);
        sys.constants.delta_d.push_back(dr.delta_d);
    }
    sys.constants.L = L;
    if (report) *report = rep;
    return sys;
}

}  // namespace invsys
