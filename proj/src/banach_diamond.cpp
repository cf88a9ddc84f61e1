// SPDX-License-Identifier: MIT

#include "invsys/banach_diamond.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>

#include "invsys/builders.hpp"

namespace invsys {

namespace {

Rational q(const Dyadic& d) { return d.to_mpq(); }

std::string coord_str(const Coord& c) {
    std::ostringstream os;
    os << "(";
    for (std::size_t k = 0; k < c.size(); ++k) os << (k ? ", " : "") << c[k].get_str();
    os << ")";
    return os.str();
}

Coord sub(const Coord& a, const Coord& b) {
    Coord r(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) r[k] = a[k] - b[k];
    return r;
}

NormedPoint direction(const Coord& c) { return {c, Rational(1)}; }

constexpr int kMaxMessages = 5;

void fail(AxiomResult& r, const std::string& msg) {
    r.pass = false;
    if (static_cast<int>(r.messages.size()) < kMaxMessages) r.messages.push_back(msg);
}

}  // namespace

// ---- points ------------------------------------------------------------------

Rational sup_norm(const Coord& c) {
    Rational m = 0;
    for (const auto& x : c) m = std::max<Rational>(m, abs(x));
    return m;
}

Rational NormedPoint::norm() const { return std::max<Rational>(sup_norm(b), abs(t)); }

NormedPoint NormedPoint::operator+(const NormedPoint& o) const {
    NormedPoint r{b, t + o.t};
    for (std::size_t k = 0; k < b.size(); ++k) r.b[k] += o.b[k];
    return r;
}

NormedPoint NormedPoint::operator-(const NormedPoint& o) const {
    NormedPoint r{b, t - o.t};
    for (std::size_t k = 0; k < b.size(); ++k) r.b[k] -= o.b[k];
    return r;
}

NormedPoint NormedPoint::scaled(const Rational& s) const {
    NormedPoint r{b, t * s};
    for (auto& x : r.b) x *= s;
    return r;
}

Rational distance(const NormedPoint& x, const NormedPoint& y) { return (x - y).norm(); }

// ---- witnesses -------------------------------------------------------------------

void ConvexWitness::validate() const {
    const std::string tag = "witness for c = " + coord_str(c) + ": ";
    if (n_c < 1) throw WitnessError(tag + "n_c >= 1 fails");
    if (branches.size() != (std::size_t{1} << n_c))
        throw WitnessError(tag + "number of branches != 2^n_c");
    if (!(delta_c > 0) || delta_c > Rational(1, 2)) throw WitnessError(tag + "0 < delta_c <= 1/2 fails");
    if (sup_norm(c) > 1) throw WitnessError(tag + "||c|| <= 1 fails");
    Coord sum(c.size(), Rational(0));
    for (std::size_t j = 0; j < branches.size(); ++j) {
        const Coord& cj = branches[j];
        if (cj.size() != c.size()) throw WitnessError(tag + "branch dimension mismatch");
        if (sup_norm(cj) > 1) throw WitnessError(tag + "||c_" + std::to_string(j + 1) + "|| <= 1 fails");
        if (sup_norm(sub(c, cj)) < 4 * delta_c)
            throw WitnessError(tag + "||c - c_" + std::to_string(j + 1) + "|| >= 4 delta_c fails");
        for (std::size_t k = 0; k < c.size(); ++k) sum[k] += cj[k];
    }
    for (std::size_t k = 0; k < c.size(); ++k)
        if (sum[k] != c[k] * Rational(static_cast<long>(branches.size())))
            throw WitnessError(tag + "c = 2^{-n_c} sum c_j fails");
}

ConvexWitness ConvexWitness::padded(int n) const {
    if (n < n_c) throw WitnessError("cannot pad a witness to a smaller exponent");
    ConvexWitness w = *this;
    w.n_c = n;
    w.branches.clear();
    std::size_t rep = std::size_t{1} << (n - n_c);
    for (const auto& cj : branches)
        for (std::size_t r = 0; r < rep; ++r) w.branches.push_back(cj);
    return w;
}

WitnessProvider coordinate_splitting_provider(int m, const Rational& lambda) {
    return [m, lambda](const Coord& c) {
        if (static_cast<int>(c.size()) != m) throw WitnessError("direction has the wrong dimension");
        for (int k = 0; k < m; ++k) {
            if (c[static_cast<std::size_t>(k)] != 0) continue;
            ConvexWitness w;
            w.c = c;
            w.n_c = 1;
            w.delta_c = lambda / 4;
            Coord plus = c;
            Coord minus = c;
            plus[static_cast<std::size_t>(k)] += lambda;
            minus[static_cast<std::size_t>(k)] -= lambda;
            w.branches = {plus, minus};
            return w;
        }
        throw WitnessError("coordinate splitting: no zero coordinate left in " + coord_str(c));
    };
}

WitnessProvider table_provider(std::vector<ConvexWitness> table) {
    return [table = std::move(table)](const Coord& c) {
        for (const auto& w : table)
            if (w.c == c) return w;
        throw WitnessError("no witness for c = " + coord_str(c));
    };
}

// ---- model graph -------------------------------------------------------------

ModelGraph build_model_graph(const ConvexWitness& w, const Dyadic& scale, const NormedPoint& origin) {
    w.validate();
    if (origin.b.size() != w.c.size()) throw WitnessError("origin dimension mismatch");
    ModelGraph mg;
    mg.subedge_length = scale.ldexp(-(w.n_c + 1));
    const Rational step = q(mg.subedge_length);
    const NormedPoint dc = direction(w.c).scaled(step);
    auto add_vertex = [&](const NormedPoint& p) {
        mg.coords.push_back(p);
        return mg.graph.add_vertex();
    };
    auto add_edge = [&](VertexId a, VertexId b, int k, bool g1) {
        EdgeId e = mg.graph.add_edge(a, b, mg.subedge_length, Dyadic(1).half());
        mg.subedge.push_back(k);
        mg.on_gamma1.push_back(g1);
        (g1 ? mg.gamma1 : mg.gamma0).push_back(e);
        return e;
    };
    VertexId cur = add_vertex(origin);
    mg.start = cur;
    const int K = 1 << w.n_c;
    for (int j = 0; j < K; ++j) {
        const NormedPoint dj = direction(w.branches[static_cast<std::size_t>(j)]).scaled(step);
        const NormedPoint base = mg.coords[static_cast<std::size_t>(cur)];
        VertexId vp = add_vertex(base + dc);
        VertexId wp = add_vertex(base + dj);
        VertexId next = add_vertex(base + dc + dj);
        add_edge(cur, vp, 2 * j, false);
        add_edge(cur, wp, 2 * j, true);
        add_edge(vp, next, 2 * j + 1, false);
        add_edge(wp, next, 2 * j + 1, true);
        cur = next;
    }
    mg.end = cur;
    if (!(mg.coords[static_cast<std::size_t>(cur)] == origin + direction(w.c).scaled(q(scale))))
        throw WitnessError("model graph does not close at (c, 1)");
    return mg;
}

NormedPoint parallelogram_point(const ConvexWitness& w, int j, int edge, const Rational& s) {
    const NormedPoint a = direction(w.c);
    const NormedPoint b = direction(w.branches.at(static_cast<std::size_t>(j)));
    switch (edge) {
    case 1: return a.scaled(s);
    case 2: return b.scaled(s);
    case 3: return a + b.scaled(s);
    case 4: return b + a.scaled(s);
    default: throw std::invalid_argument("parallelogram edges are numbered 1..4");
    }
}

Rational parallelogram_intrinsic(int edge_x, const Rational& sx, int edge_y, const Rational& sy) {
    auto theta = [](int e, const Rational& s) -> Rational {
        switch (e) {
        case 1: return s;
        case 3: return 1 + s;
        case 4: return 3 - s;
        case 2: return s == 0 ? Rational(0) : Rational(4 - s);
        default: throw std::invalid_argument("parallelogram edges are numbered 1..4");
        }
    };
    Rational d = abs(theta(edge_x, sx) - theta(edge_y, sy));
    return std::min<Rational>(d, 4 - d);
}

ParallelogramReport certify_parallelogram(const ConvexWitness& w, int j, int samples) {
    w.validate();
    if (j < 0 || j >= static_cast<int>(w.branches.size())) throw std::invalid_argument("branch index out of range");
    auto sweep = [&](int g) {
        ParallelogramReport r;
        bool first = true;
        for (int ex = 1; ex <= 4; ++ex)
            for (int ey = ex; ey <= 4; ++ey)
                for (int a = 0; a <= g; ++a)
                    for (int b = 0; b <= g; ++b) {
                        Rational sx(a, g);
                        Rational sy(b, g);
                        sx.canonicalize();
                        sy.canonicalize();
                        Rational din = parallelogram_intrinsic(ex, sx, ey, sy);
                        if (din == 0) {
                            ++r.skipped;
                            continue;
                        }
                        Rational ratio =
                            distance(parallelogram_point(w, j, ex, sx), parallelogram_point(w, j, ey, sy)) / din;
                        ++r.evaluated;
                        if (first || ratio < r.min_ratio) {
                            r.min_ratio = ratio;
                            r.argmin_edges = {ex, ey};
                            first = false;
                        }
                    }
        return r;
    };
    // ten edge pairs times a (g+1)^2 grid; grow g until `samples` pairs are evaluated
    int g = std::max(1, static_cast<int>(std::ceil(std::sqrt(std::max(samples, 1) / 10.0))) - 1);
    ParallelogramReport r = sweep(g);
    while (r.evaluated < samples) r = sweep(++g);
    return r;
}

// ---- generalized diamond -----------------------------------------------------

int subdivision_exponent(const Rational& delta, const Rational& delta_i) {
    if (!(delta_i > delta)) throw std::invalid_argument("delta_i must exceed delta");
    Rational dp = (delta + delta_i) / 2;
    Rational bound = (delta_i - dp) / 4;
    int N = 0;
    Rational p = 1;
    while (p > bound) {
        p /= 2;
        ++N;
    }
    return N;
}

NormedPoint GeneralizedDiamondSystem::point(int i, const GraphPoint& p) const {
    const MetricGraph& g = sys.graph(i);
    check_point(g, p);
    const Edge& e = g.edge(p.edge);
    const auto& cs = coords.at(static_cast<std::size_t>(i));
    const NormedPoint& a = cs[static_cast<std::size_t>(e.src)];
    const NormedPoint& b = cs[static_cast<std::size_t>(e.dst)];
    return a + (b - a).scaled(q(p.offset) / q(e.length));
}

GeneralizedDiamondSystem build_generalized_diamond(int m, const WitnessProvider& provider, const Rational& delta,
                                                   int levels, const Rational& delta_0) {
    if (m < 1) throw std::invalid_argument("space dimension must be positive");
    if (levels < 1) throw std::invalid_argument("at least one level is required");
    if (!(delta > 0)) throw std::invalid_argument("delta must be positive");
    if (!(delta_0 > delta) || delta_0 > 1) throw std::invalid_argument("need delta < delta_0 <= 1");
    GeneralizedDiamondSystem d;
    d.m = m;
    d.delta = delta;
    d.sys.name = "diamond";
    {
        Level l0;
        VertexId a = l0.graph.add_vertex();
        VertexId b = l0.graph.add_vertex();
        l0.graph.add_edge(a, b, Dyadic(1), Dyadic(1));
        d.sys.levels.push_back(std::move(l0));
        d.coords.push_back({NormedPoint{Coord(static_cast<std::size_t>(m), Rational(0)), Rational(0)},
                            NormedPoint{Coord(static_cast<std::size_t>(m), Rational(0)), Rational(1)}});
        d.n.push_back(0);
        d.delta_i.push_back(delta_0);
    }
    for (int i = 0; i + 1 < levels; ++i) {
        const MetricGraph& G = d.sys.graph(i);
        const auto& cs = d.coords[static_cast<std::size_t>(i)];
        const int ni = d.n[static_cast<std::size_t>(i)];
        const Rational di = d.delta_i[static_cast<std::size_t>(i)];
        // direction and witness of every edge
        std::map<Coord, ConvexWitness> cache;
        std::vector<Coord> dir(static_cast<std::size_t>(G.num_edges()));
        int nc = 1;
        Rational min_dc = 1;
        for (const Edge& e : G.edges()) {
            NormedPoint v = cs[static_cast<std::size_t>(e.dst)] - cs[static_cast<std::size_t>(e.src)];
            if (v.t != q(e.length)) throw SystemError("edge is not parallel to a vector (c, 1)");
            Coord c = v.b;
            for (auto& x : c) x /= v.t;
            dir[static_cast<std::size_t>(e.id)] = c;
            if (cache.count(c)) continue;
            ConvexWitness w = provider(c);
            if (w.c != c) throw WitnessError("provider returned a witness for " + coord_str(w.c) + " instead of " + coord_str(c));
            w.validate();
            if (!(w.delta_c > delta))
                throw WitnessError("witness for c = " + coord_str(c) + ": delta_c > delta fails");
            nc = std::max(nc, w.n_c);
            min_dc = std::min(min_dc, w.delta_c);
            cache.emplace(c, std::move(w));
        }
        std::vector<ConvexWitness> used;
        for (auto& [c, w] : cache) {
            w = w.padded(nc);
            used.push_back(w);
        }
        const Rational dp = (delta + di) / 2;
        const int N = subdivision_exponent(delta, di);
        const int mi = N + nc + 2;
        const int n1 = ni + mi;
        {
            long double per_edge = std::ldexp(1.0L, N + nc + 2) + std::ldexp(1.0L, mi - 1);
            long double total = per_edge * G.num_edges();
            if (total > static_cast<long double>(edge_budget()))
                throw BudgetError("diamond level " + std::to_string(i + 1) + " needs " +
                                  std::to_string(static_cast<long long>(total)) + " edges, budget " +
                                  std::to_string(edge_budget()));
        }
        const Dyadic sublen = Dyadic::pow2(n1);
        const Dyadic block_scale = Dyadic::pow2(ni + 1 + N);
        const int terminal = 1 << (mi - 2);
        const int blocks = 1 << N;
        Level next;
        std::vector<NormedPoint> ncs = cs;
        std::vector<int> block_of;
        for (VertexId v = 0; v < G.num_vertices(); ++v) next.graph.add_vertex();
        Level& cur_level = d.sys.levels[static_cast<std::size_t>(i)];
        cur_level.subdivision.assign(static_cast<std::size_t>(G.num_edges()), {});
        int block_counter = 0;
        for (const Edge& e : G.edges()) {
            const Coord& c = dir[static_cast<std::size_t>(e.id)];
            const ConvexWitness& w = cache.at(c);
            const NormedPoint step = direction(c).scaled(q(sublen));
            auto& subs = cur_level.subdivision[static_cast<std::size_t>(e.id)];
            VertexId cur = e.src;
            int k = 0;
            auto add_vertex = [&](const NormedPoint& p) {
                ncs.push_back(p);
                return next.graph.add_vertex();
            };
            auto terminal_run = [&](bool last) {
                for (int t = 0; t < terminal; ++t) {
                    NormedPoint p = ncs[static_cast<std::size_t>(cur)] + step;
                    VertexId nv;
                    if (last && t == terminal - 1) {
                        nv = e.dst;
                        if (!(ncs[static_cast<std::size_t>(nv)] == p)) throw SystemError("terminal run misses the edge end");
                    } else {
                        nv = add_vertex(p);
                    }
                    EdgeId E = next.graph.add_edge(cur, nv, sublen, e.weight);
                    block_of.push_back(-1);
                    subs.push_back({sublen * Dyadic(k), sublen, true, E, E});
                    ++k;
                    cur = nv;
                }
            };
            terminal_run(false);
            for (int b = 0; b < blocks; ++b) {
                ModelGraph mg = build_model_graph(w, block_scale, ncs[static_cast<std::size_t>(cur)]);
                std::vector<VertexId> vmap(static_cast<std::size_t>(mg.graph.num_vertices()));
                for (VertexId v = 0; v < mg.graph.num_vertices(); ++v)
                    vmap[static_cast<std::size_t>(v)] = v == mg.start ? cur : add_vertex(mg.coords[static_cast<std::size_t>(v)]);
                const int K = 2 << nc;
                std::vector<EdgeId> prim(static_cast<std::size_t>(K));
                std::vector<EdgeId> opp(static_cast<std::size_t>(K));
                for (const Edge& me : mg.graph.edges()) {
                    EdgeId E = next.graph.add_edge(vmap[static_cast<std::size_t>(me.src)], vmap[static_cast<std::size_t>(me.dst)],
                                                   sublen, e.weight.half());
                    block_of.push_back(block_counter);
                    int s = mg.subedge[static_cast<std::size_t>(me.id)];
                    (mg.on_gamma1[static_cast<std::size_t>(me.id)] ? opp : prim)[static_cast<std::size_t>(s)] = E;
                }
                for (int s = 0; s < K; ++s) {
                    subs.push_back({sublen * Dyadic(k), sublen, false, prim[static_cast<std::size_t>(s)],
                                    opp[static_cast<std::size_t>(s)]});
                    ++k;
                }
                cur = vmap[static_cast<std::size_t>(mg.end)];
                ++block_counter;
            }
            terminal_run(true);
            if (k != (1 << mi)) throw SystemError("subdivision count mismatch");
        }
        d.sys.levels.push_back(std::move(next));
        d.coords.push_back(std::move(ncs));
        d.n.push_back(n1);
        d.N.push_back(N);
        d.n_c.push_back(nc);
        d.m_i.push_back(mi);
        d.delta_prime.push_back(dp);
        d.delta_i.push_back(std::min(dp, min_dc));
        d.block.resize(static_cast<std::size_t>(i + 2));
        d.block[static_cast<std::size_t>(i + 1)] = std::move(block_of);
        d.witnesses.push_back(std::move(used));
    }
    d.block.resize(d.sys.levels.size());
    d.sys.levels.back().subdivision.assign(static_cast<std::size_t>(d.sys.levels.back().graph.num_edges()), {});
    d.sys.rebuild_lifts();
    return d;
}

// ---- certificates --------------------------------------------------------------

QuasiconvexityReport certify_quasiconvexity(const GeneralizedDiamondSystem& d, int i, int samples,
                                            std::mt19937_64& rng) {
    if (i < 0 || i > d.sys.top()) throw std::invalid_argument("level out of range");
    const MetricGraph& G = d.sys.graph(i);
    QuasiconvexityReport r;
    if (samples <= 0) return r;
    const int sources = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(samples))));
    const int per_source = (samples + sources - 1) / sources;
    std::vector<int> parent(static_cast<std::size_t>(G.num_edges()), -1);
    std::map<int, std::vector<EdgeId>> by_parent;
    std::map<int, std::vector<EdgeId>> by_block;
    const std::vector<int>* blocks = i >= 1 ? &d.block[static_cast<std::size_t>(i)] : nullptr;
    for (EdgeId e = 0; e < G.num_edges(); ++e) {
        if (i >= 1) parent[static_cast<std::size_t>(e)] = d.sys.lifts[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(e)].parent;
        by_parent[parent[static_cast<std::size_t>(e)]].push_back(e);
        if (blocks && (*blocks)[static_cast<std::size_t>(e)] >= 0) by_block[(*blocks)[static_cast<std::size_t>(e)]].push_back(e);
    }
    std::uniform_int_distribution<EdgeId> any_edge(0, G.num_edges() - 1);
    std::uniform_int_distribution<int> offset(0, 16);
    auto random_point = [&](EdgeId e) { return GraphPoint{e, G.edge(e).length * Dyadic::from_parts(offset(rng), 4)}; };
    auto pick = [&](const std::vector<EdgeId>& v) {
        std::uniform_int_distribution<std::size_t> u(0, v.size() - 1);
        return v[u(rng)];
    };
    auto classify = [&](EdgeId ex, EdgeId ey) -> std::string {
        if (i == 0) return "segment";
        int bx = (*blocks)[static_cast<std::size_t>(ex)];
        int by = (*blocks)[static_cast<std::size_t>(ey)];
        if (bx >= 0 && bx == by) return "same-block";
        if (parent[static_cast<std::size_t>(ex)] == parent[static_cast<std::size_t>(ey)]) return "same-parent";
        if (bx < 0 && by < 0) return "different-parent/terminal";
        return "different-parent/middle";
    };
    bool first = true;
    // coincident draws are skipped and replaced, so `samples` pairs are evaluated
    for (int s = 0; r.evaluated < samples && s < 4 * sources; ++s) {
        EdgeId ex = any_edge(rng);
        GraphPoint x = random_point(ex);
        DistanceField f = distances_from(G, x);
        NormedPoint px = d.point(i, x);
        for (int t = 0; t < per_source && r.evaluated < samples; ++t) {
            EdgeId ey;
            int bx = blocks ? (*blocks)[static_cast<std::size_t>(ex)] : -1;
            switch (t % 4) {
            case 0: ey = bx >= 0 ? pick(by_block[bx]) : pick(by_parent[parent[static_cast<std::size_t>(ex)]]); break;
            case 1: ey = pick(by_parent[parent[static_cast<std::size_t>(ex)]]); break;
            default: ey = any_edge(rng); break;
            }
            GraphPoint y = random_point(ey);
            auto dist = distance_to(G, f, y);
            if (!dist || dist->is_zero()) {
                ++r.skipped;
                continue;
            }
            Rational ratio = distance(px, d.point(i, y)) / q(*dist);
            ++r.evaluated;
            std::string key = classify(ex, ey);
            auto it = r.stratum_min.find(key);
            if (it == r.stratum_min.end()) r.stratum_min.emplace(key, ratio);
            else it->second = std::min(it->second, ratio);
            ++r.stratum_count[key];
            if (first || ratio < r.min_ratio) {
                r.min_ratio = ratio;
                r.argmin_x = x;
                r.argmin_y = y;
                first = false;
            }
        }
    }
    return r;
}

DistortionReport vertex_distortion(const GeneralizedDiamondSystem& d, int i, long long pair_budget,
                                   std::mt19937_64& rng) {
    const MetricGraph& G = d.sys.graph(i);
    const auto& cs = d.coords.at(static_cast<std::size_t>(i));
    const long long V = G.num_vertices();
    DistortionReport r;
    std::vector<VertexId> sources;
    if (V * (V - 1) / 2 <= pair_budget) {
        for (VertexId v = 0; v < V; ++v) sources.push_back(v);
    } else {
        r.sampled = true;
        long long count = std::max<long long>(1, pair_budget / std::max<long long>(1, V - 1));
        std::uniform_int_distribution<VertexId> u(0, static_cast<VertexId>(V - 1));
        for (long long k = 0; k < count; ++k) sources.push_back(u(rng));
    }
    for (VertexId s : sources) {
        DistanceField f = distances_from(G, vertex_point(G, s));
        for (VertexId v = 0; v < V; ++v) {
            if (!r.sampled && v <= s) continue;
            if (v == s) continue;
            const auto& dv = f.dist[static_cast<std::size_t>(v)];
            if (!dv) continue;
            Rational ratio = q(*dv) / distance(cs[static_cast<std::size_t>(s)], cs[static_cast<std::size_t>(v)]);
            r.max_ratio = std::max(r.max_ratio, ratio);
            ++r.pairs;
        }
    }
    return r;
}

bool DAxiomReport::pass() const {
    return std::all_of(results.begin(), results.end(), [](const AxiomResult& a) { return a.pass; });
}

const AxiomResult& DAxiomReport::get(const std::string& id) const {
    for (const auto& a : results)
        if (a.id == id) return a;
    throw std::out_of_range("no axiom result " + id);
}

DAxiomReport check_d_axioms(const GeneralizedDiamondSystem& d) {
    const InverseSystem& sys = d.sys;
    DAxiomReport rep;
    AxiomResult d1{"D1", true, {}}, d2{"D2", true, {}}, d3i{"D3(i)", true, {}}, d3ii{"D3(ii)", true, {}},
        d3iii{"D3(iii)", true, {}}, d3iv{"D3(iv)", true, {}}, d4{"D4", true, {}}, d5{"D5", true, {}},
        d6{"D6", true, {}}, d7{"D7", true, {}}, p1{"P1", true, {}}, p2{"P2", true, {}}, meas{"measure", true, {}},
        dl{"delta", true, {}};
    {
        const MetricGraph& g0 = sys.graph(0);
        if (g0.num_vertices() != 2 || g0.num_edges() != 1 || g0.edge(0).length != Dyadic(1))
            fail(d1, "X_0 is not a single edge of length 1");
        if (g0.num_edges() == 1 && g0.edge(0).weight != Dyadic(1)) fail(d4, "mu_0 is not Lebesgue measure");
    }
    for (int i = 0; i <= sys.top(); ++i) {
        const MetricGraph& G = sys.graph(i);
        const auto& cs = d.coords[static_cast<std::size_t>(i)];
        const std::string L = "level " + std::to_string(i) + ": ";
        if (G.total_measure() != Dyadic(1)) fail(meas, L + "total measure " + G.total_measure().str());
        if (!(d.delta_i[static_cast<std::size_t>(i)] > d.delta)) fail(dl, L + "delta_i > delta fails");
        if (i >= 1 && d.n[static_cast<std::size_t>(i)] < 1) fail(p2, L + "n_i >= 1 fails");
        for (const Edge& e : G.edges()) {
            if (!(e.weight > Dyadic(0))) fail(d5, L + "edge " + std::to_string(e.id) + " has nonpositive density");
            NormedPoint v = cs[static_cast<std::size_t>(e.dst)] - cs[static_cast<std::size_t>(e.src)];
            if (v.norm() != q(e.length)) fail(p1, L + "edge " + std::to_string(e.id) + " length differs from its chord");
            if (e.length != Dyadic::pow2(d.n[static_cast<std::size_t>(i)]) || v.t != q(e.length) ||
                sup_norm(v.b) > v.t)
                fail(p2, L + "edge " + std::to_string(e.id) + " is not 2^{-n_i} (c, 1) with ||c|| <= 1");
        }
        if (i == sys.top()) break;
        const MetricGraph& H = sys.graph(i + 1);
        const auto& hs = d.coords[static_cast<std::size_t>(i + 1)];
        const int mi = d.m_i[static_cast<std::size_t>(i)];
        // D2: vertices of X_i keep their position and lift to one vertex
        for (VertexId v = 0; v < G.num_vertices(); ++v) {
            auto fib = fiber_points(sys, i, i + 1, vertex_point(G, v));
            if (fib.size() != 1) {
                fail(d2, L + "vertex " + std::to_string(v) + " has " + std::to_string(fib.size()) + " preimages");
                continue;
            }
            auto w = point_vertex(H, fib[0]);
            if (!w || !(hs[static_cast<std::size_t>(*w)] == cs[static_cast<std::size_t>(v)]))
                fail(d2, L + "vertex " + std::to_string(v) + " does not lift to itself");
        }
        for (const Edge& e : G.edges()) {
            const auto& subs = sys.levels[static_cast<std::size_t>(i)].subdivision[static_cast<std::size_t>(e.id)];
            const std::string E = L + "edge " + std::to_string(e.id) + ": ";
            if (subs.size() != (std::size_t{1} << mi)) {
                fail(d3ii, E + "not subdivided into 2^m_i subedges");
                continue;
            }
            const Dyadic len = e.length.ldexp(-mi);
            std::vector<std::size_t> fiber(subs.size() + 1);
            for (std::size_t k = 0; k < subs.size(); ++k) {
                const SubEdge& s = subs[k];
                if (s.length != len || s.start != len * Dyadic(static_cast<long long>(k)))
                    fail(d3ii, E + "subedge " + std::to_string(k) + " has unequal length or position");
                std::set<VertexId> lo;
                std::set<VertexId> hi;
                for (EdgeId P : {s.primary, s.opposite}) {
                    const Edge& pe = H.edge(P);
                    if (pe.length != s.length) fail(d3iii, E + "preimage edge is not isometric to its subedge");
                    Rational t0 = cs[static_cast<std::size_t>(e.src)].t + q(s.start);
                    if (hs[static_cast<std::size_t>(pe.src)].t != t0 || hs[static_cast<std::size_t>(pe.dst)].t != t0 + q(s.length))
                        fail(d3iii, E + "preimage edge is not mapped onto its subedge");
                    lo.insert(pe.src);
                    hi.insert(pe.dst);
                    Dyadic want = s.is_circle() ? e.weight.half() : e.weight;
                    if (pe.weight != want) fail(d6, E + "preimage of subedge " + std::to_string(k) + " has the wrong measure");
                }
                if ((k == 0 || k + 1 == subs.size()) && s.is_circle())
                    fail(d3iv, E + "terminal subedge has two preimages");
                if (k == 0) fiber[0] = lo.size();
                else {
                    std::set<VertexId> at(lo);
                    // the vertex between subedges k-1 and k
                    const SubEdge& pr = subs[k - 1];
                    at.insert(H.edge(pr.primary).dst);
                    at.insert(H.edge(pr.opposite).dst);
                    fiber[k] = at.size();
                }
                if (k + 1 == subs.size()) fiber[k + 1] = hi.size();
            }
            for (std::size_t k = 0; k < fiber.size(); ++k) {
                if (fiber[k] < 1 || fiber[k] > 2) fail(d3i, E + "subdivision vertex " + std::to_string(k) + " has " + std::to_string(fiber[k]) + " preimages");
                if (k > 0 && fiber[k] == 2 && fiber[k - 1] == 2)
                    fail(d3i, E + "adjacent subdivision vertices " + std::to_string(k - 1) + ", " + std::to_string(k) + " both split");
            }
        }
        // D7: distance, in edges of X_{i+1}, from points over middle halves to degree-4 vertices
        std::vector<int> hops(static_cast<std::size_t>(H.num_vertices()), -1);
        std::deque<VertexId> queue;
        for (VertexId v = 0; v < H.num_vertices(); ++v)
            if (H.degree(v) == 4) {
                hops[static_cast<std::size_t>(v)] = 0;
                queue.push_back(v);
            }
        while (!queue.empty()) {
            VertexId v = queue.front();
            queue.pop_front();
            auto visit = [&](VertexId w) {
                if (hops[static_cast<std::size_t>(w)] < 0) {
                    hops[static_cast<std::size_t>(w)] = hops[static_cast<std::size_t>(v)] + 1;
                    queue.push_back(w);
                }
            };
            for (EdgeId e : H.out_edges(v)) visit(H.edge(e).dst);
            for (EdgeId e : H.in_edges(v)) visit(H.edge(e).src);
        }
        const auto& blk = d.block[static_cast<std::size_t>(i + 1)];
        for (const Edge& E : H.edges()) {
            if (blk[static_cast<std::size_t>(E.id)] < 0) continue;
            int a = hops[static_cast<std::size_t>(E.src)];
            int b = hops[static_cast<std::size_t>(E.dst)];
            if (a < 0 || b < 0) {
                fail(d7, L + "edge " + std::to_string(E.id) + " of X_{i+1} is far from every degree-4 vertex");
                continue;
            }
            Rational worst = std::abs(a - b) >= 1 ? Rational(std::min(a, b) + 1) : Rational(a + b + 1, 2);
            worst.canonicalize();
            rep.d7_worst = std::max(rep.d7_worst, worst);
            if (worst > 2) fail(d7, L + "edge " + std::to_string(E.id) + " is " + worst.get_str() + " edges from a degree-4 vertex");
        }
    }
    rep.results = {d1, d2, d3i, d3ii, d3iii, d3iv, d4, d5, d6, d7, p1, p2, meas, dl};
    return rep;
}

}  // namespace invsys
