// SPDX-License-Identifier: MIT

#include "invsys/checks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "invsys/builders.hpp"

namespace invsys {

namespace {

Rational q(const Dyadic& d) { return d.to_mpq(); }

long double ld(const Rational& r) { return static_cast<long double>(r.get_d()); }

int top_level(const InverseSystem& sys, const LemmaOptions& opt) {
    return opt.max_level ? std::min(sys.top(), *opt.max_level) : sys.top();
}

std::string level_tag(int i) { return "level " + std::to_string(i) + ": "; }

// Uniform dyadic point on edge e with 2^bits offset steps.
GraphPoint random_point(const MetricGraph& g, EdgeId e, std::mt19937_64& rng, int bits = 6) {
    std::uniform_int_distribution<long long> u(0, (1LL << bits));
    return canonical(g, GraphPoint{e, g.edge(e).length * Dyadic::from_parts(u(rng), bits)});
}

EdgeId random_edge(const MetricGraph& g, std::mt19937_64& rng) {
    std::uniform_int_distribution<EdgeId> u(0, g.num_edges() - 1);
    return u(rng);
}

SegmentSet random_segment_set(const MetricGraph& g, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pieces(1, 4);
    std::uniform_int_distribution<long long> u(0, 16);
    SegmentSet s;
    int n = pieces(rng);
    for (int k = 0; k < n; ++k) {
        EdgeId e = random_edge(g, rng);
        long long a = u(rng);
        long long b = u(rng);
        if (a > b) std::swap(a, b);
        const Dyadic& L = g.edge(e).length;
        s.add(e, L * Dyadic::from_parts(a, 4), L * Dyadic::from_parts(b, 4));
    }
    s.normalize();
    return s;
}

// Path metric distances for many pairs, sharing one distance field per source.
std::vector<Dyadic> pair_distances(const MetricGraph& g, const std::vector<PointPair>& pairs) {
    std::vector<Dyadic> out(pairs.size());
    std::map<std::pair<EdgeId, Dyadic>, std::vector<std::size_t>> by_source;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        GraphPoint x = canonical(g, pairs[k].x);
        by_source[{x.edge, x.offset}].push_back(k);
    }
    for (const auto& [src, idx] : by_source) {
        DistanceField f = distances_from(g, GraphPoint{src.first, src.second});
        for (std::size_t k : idx) out[k] = *distance_to(g, f, pairs[k].y);
    }
    return out;
}

// Number of directed 0-1 paths, saturating.
long double count_paths(const InverseSystem& sys, int i) {
    const MetricGraph& g = sys.graph(i);
    std::vector<long double> ways(static_cast<std::size_t>(g.num_vertices()), -1);
    VertexId one = one_vertex(sys, i);
    std::vector<int> indeg(static_cast<std::size_t>(g.num_vertices()), 0);
    for (const Edge& e : g.edges()) ++indeg[static_cast<std::size_t>(e.dst)];
    std::vector<VertexId> order;
    for (VertexId v = 0; v < g.num_vertices(); ++v)
        if (indeg[static_cast<std::size_t>(v)] == 0) order.push_back(v);
    for (std::size_t k = 0; k < order.size(); ++k)
        for (EdgeId e : g.out_edges(order[k]))
            if (--indeg[static_cast<std::size_t>(g.edge(e).dst)] == 0) order.push_back(g.edge(e).dst);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        VertexId v = *it;
        long double w = v == one ? 1 : 0;
        for (EdgeId e : g.out_edges(v)) w += ways[static_cast<std::size_t>(g.edge(e).dst)];
        ways[static_cast<std::size_t>(v)] = w;
    }
    return ways[static_cast<std::size_t>(zero_vertex(sys, i))];
}

std::vector<PointPair> mixed_pairs(const MetricGraph& g, int samples, std::mt19937_64& rng) {
    std::vector<PointPair> pairs;
    long long V = g.num_vertices();
    if (V * (V - 1) / 2 <= samples / 2) pairs = all_vertex_pairs(g);
    int rest = samples - static_cast<int>(pairs.size());
    if (rest > 0) {
        int sources = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(rest))));
        auto s = sample_pairs(g, rest, sources, rng);
        pairs.insert(pairs.end(), s.begin(), s.end());
    }
    return pairs;
}

// Edges of X_i lying over edge P of X_{i-1}, as a segment set.
SegmentSet edge_preimage(const InverseSystem& sys, int i, EdgeId P) {
    const MetricGraph& g = sys.graph(i);
    SegmentSet s;
    for (const Edge& e : g.edges())
        if (sys.lifts[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(e.id)].parent == P)
            s.add(e.id, Dyadic(0), e.length);
    s.normalize();
    return s;
}

std::vector<EdgeId> edges_over(const InverseSystem& sys, int i, EdgeId P) {
    std::vector<EdgeId> out;
    const auto& lifts = sys.lifts[static_cast<std::size_t>(i - 1)];
    for (EdgeId e = 0; e < static_cast<EdgeId>(lifts.size()); ++e)
        if (lifts[static_cast<std::size_t>(e)].parent == P) out.push_back(e);
    return out;
}

Rational lipschitz_ratio(const Vec& a, const Vec& b, const Dyadic& d, Norm n) {
    Vec diff(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) diff[k] = a[k] - b[k];
    return norm(diff, n) / q(d);
}

}  // namespace

// ---- reports ---------------------------------------------------------------------

Quantity quantity(const std::string& name, const Rational& v) { return {name, v.get_str(), ld(v)}; }
Quantity quantity(const std::string& name, const Dyadic& d) { return {name, d.str(), d.to_long_double()}; }
Quantity quantity_approx(const std::string& name, long double v) { return {name, "", v}; }

void CheckReport::fail(const std::string& msg) {
    pass = false;
    if (failures.size() < 20) failures.push_back(msg);
}

Json CheckReport::to_json() const {
    auto qs = [](const std::vector<Quantity>& v) {
        Json a = Json::array();
        for (const auto& x : v) {
            Json o{{"name", x.name}};
            o["exact"] = x.exact.empty() ? Json(nullptr) : Json(x.exact);
            o["decimal"] = static_cast<double>(x.decimal);
            a.push_back(std::move(o));
        }
        return a;
    };
    Json j;
    j["id"] = id;
    j["statement"] = statement;
    j["status"] = pass ? "pass" : "fail";
    j["achieved"] = qs(achieved);
    j["bounds"] = qs(bounds);
    j["margin"] = margin ? Json(static_cast<double>(*margin)) : Json(nullptr);
    j["samples"] = samples;
    j["seed"] = seed;
    j["failures"] = failures;
    j["warnings"] = warnings;
    return j;
}

std::string CheckReport::text() const {
    std::ostringstream os;
    os << (pass ? "PASS " : "FAIL ") << id << ": " << statement << '\n';
    auto show = [&](const char* label, const std::vector<Quantity>& v) {
        for (const auto& x : v) {
            os << "  " << label << ' ' << x.name << " = ";
            if (!x.exact.empty()) os << x.exact << " (" << static_cast<double>(x.decimal) << ")";
            else os << static_cast<double>(x.decimal);
            os << '\n';
        }
    };
    show("achieved", achieved);
    show("bound   ", bounds);
    if (margin) os << "  margin " << static_cast<double>(*margin) << '\n';
    os << "  samples " << samples << ", seed " << seed << '\n';
    for (const auto& w : warnings) os << "  warning: " << w << '\n';
    for (const auto& f : failures) os << "  failure: " << f << '\n';
    return os.str();
}

const std::vector<std::string>& lemma_names() {
    static const std::vector<std::string> names{
        "pushforward", "axioms",  "deltas",     "fiber-diameter", "lip",       "near-isometry",
        "deep",        "circle-set", "alberti", "doubling",       "condexp",   "martingale",
        "ftc",         "maximal", "covering",   "residual",       "daxioms",   "parallelogram",
        "quasiconvexity", "distortion", "diamond-fibers"};
    return names;
}

Rational delta_prime_or_achieved(const InverseSystem& sys, int i) {
    const auto& dp = sys.constants.delta_prime;
    if (static_cast<std::size_t>(i) < dp.size()) return q(dp[static_cast<std::size_t>(i)]);
    return compute_deltas(sys, i).delta_E;
}

// ---- system suites -------------------------------------------------------------

CheckReport check_pushforward(const InverseSystem& sys) {
    CheckReport r;
    r.id = "pushforward";
    r.statement = "(pi_i^{i+1})_# mu_{i+1} = mu_i on every subedge, exactly";
    for (int i = 0; i < sys.top(); ++i) {
        PushforwardReport p = pushforward_check(sys, i);
        r.samples += p.checked;
        if (!p.ok)
            for (const auto& d : p.discrepancies) r.fail(level_tag(i) + d);
    }
    for (int i = 0; i <= sys.top(); ++i)
        if (sys.graph(i).total_measure() != Dyadic(1))
            r.fail(level_tag(i) + "total mass " + sys.graph(i).total_measure().str());
    r.achieved.push_back(quantity_approx("subedges checked", static_cast<long double>(r.samples)));
    return r;
}

CheckReport check_axiom_suite(const InverseSystem& sys, const AxiomOptions& opt) {
    CheckReport r;
    r.id = "axioms";
    r.statement = "Axioms A1-A6 with the declared alpha and beta";
    AxiomReport a = check_axioms(sys, opt);
    for (const auto& res : a.results) {
        if (!res.pass) {
            if (res.messages.empty()) r.fail(res.id);
            for (const auto& m : res.messages) r.fail(res.id + ": " + m);
        }
    }
    if (a.achieved_alpha) r.achieved.push_back(quantity("alpha", *a.achieved_alpha));
    if (a.achieved_beta) r.achieved.push_back(quantity("beta", *a.achieved_beta));
    auto alpha = opt.alpha ? opt.alpha : sys.constants.alpha;
    auto beta = opt.beta ? opt.beta : sys.constants.beta;
    if (alpha) r.bounds.push_back(quantity("alpha (lower)", *alpha));
    if (beta) r.bounds.push_back(quantity("beta (lower)", *beta));
    if (sys.top() == 0) r.warnings.push_back("single level: A5 and A6 are vacuous");
    r.samples = static_cast<long long>(a.results.size());
    return r;
}

CheckReport check_deltas(const InverseSystem& sys) {
    CheckReport r;
    r.id = "deltas";
    r.statement = "delta_i^E, delta_i^d <= delta_i' at every refined level";
    for (int i = 0; i < sys.top(); ++i) {
        DeltaReport d = compute_deltas(sys, i);
        r.achieved.push_back(quantity("deltaE[" + std::to_string(i) + "]", d.delta_E));
        r.achieved.push_back(quantity("deltad[" + std::to_string(i) + "]", d.delta_d));
        const auto& dp = sys.constants.delta_prime;
        if (static_cast<std::size_t>(i) < dp.size()) {
            Rational b = q(dp[static_cast<std::size_t>(i)]);
            r.bounds.push_back(quantity("deltaPrime[" + std::to_string(i) + "]", b));
            if (d.delta_E > b) r.fail(level_tag(i) + "delta^E = " + d.delta_E.get_str() + " > " + b.get_str());
            if (d.delta_d > b) r.fail(level_tag(i) + "delta^d = " + d.delta_d.get_str() + " > " + b.get_str());
        }
    }
    if (sys.constants.delta_prime.empty()) r.warnings.push_back("no declared delta' targets; values reported only");
    return r;
}

CheckReport check_fiber_diameter(const InverseSystem& sys, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "fiber-diameter";
    r.statement = "diam((pi_i^j)^{-1}(x)) <= 2 delta_i' |e_i(x)|";
    r.seed = opt.seed;
    const int J = top_level(sys, opt);
    std::mt19937_64 rng(opt.seed);
    for (int i = 0; i < J; ++i) {
        std::vector<GraphPoint> base = subdivision_points(sys, i);
        if (static_cast<int>(base.size()) > opt.samples) {
            std::shuffle(base.begin(), base.end(), rng);
            base.resize(static_cast<std::size_t>(std::max(opt.samples, 0)));
        }
        FiberDiameterReport f = fiber_diameter_check(sys, i, J, base);
        Rational b = 2 * delta_prime_or_achieved(sys, i);
        r.achieved.push_back(quantity("ratio[" + std::to_string(i) + "," + std::to_string(J) + "]", f.max_ratio));
        r.bounds.push_back(quantity("2 delta'[" + std::to_string(i) + "]", b));
        r.samples += f.base_points;
        if (f.max_ratio > b) r.fail(level_tag(i) + "ratio " + f.max_ratio.get_str() + " > " + b.get_str());
    }
    if (sys.constants.delta_prime.empty()) r.warnings.push_back("delta' not declared; using the achieved delta^E");
    return r;
}

CheckReport check_lip_upper(const InverseSystem& sys, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "lip";
    r.statement = "Lip(pi_i^j) <= prod_{k=i}^{j-1} 1/(1 - 2 delta_k')";
    r.seed = opt.seed;
    std::mt19937_64 rng(opt.seed);
    const int J = top_level(sys, opt);
    std::vector<Rational> dk;
    for (int k = 0; k < J; ++k) dk.push_back(delta_prime_or_achieved(sys, k));
    bool warned = false;
    for (int j = 1; j <= J; ++j) {
        auto pairs = mixed_pairs(sys.graph(j), opt.samples / J, rng);
        for (int i = 0; i < j; ++i) {
            LipReport l = lip_bound_check(sys, i, j, pairs);
            r.samples += l.pairs;
            std::string tag = "[" + std::to_string(i) + "," + std::to_string(j) + "]";
            r.achieved.push_back(quantity("max ratio" + tag, l.max_ratio));
            std::optional<Rational> bound = Rational(1);
            for (int k = i; k < j; ++k) {
                if (dk[static_cast<std::size_t>(k)] * 2 >= 1) {
                    bound.reset();
                    break;
                }
                *bound /= 1 - 2 * dk[static_cast<std::size_t>(k)];
            }
            if (!bound) {
                if (!warned) r.warnings.push_back("delta_k >= 1/2 at some level: the product bound is vacuous");
                warned = true;
                continue;
            }
            r.bounds.push_back(quantity("bound" + tag, *bound));
            if (l.max_ratio > *bound) r.fail("pi" + tag + " ratio " + l.max_ratio.get_str() + " > " + bound->get_str());
        }
    }
    if (opt.samples <= 0) r.warnings.push_back("no samples drawn: vacuous pass");
    return r;
}

CheckReport check_near_isometry(const InverseSystem& sys, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "near-isometry";
    r.statement = "d_k(pi x, pi y) >= d_{k+1}(x, y) / (1 + delta_k') off opposite open edges";
    r.seed = opt.seed;
    std::mt19937_64 rng(opt.seed);
    const int J = top_level(sys, opt);
    for (int k = 0; k < J; ++k) {
        // draw until the per-level quota of non-opposite pairs is met
        const int quota = opt.samples / std::max(J, 1);
        LipReport l;
        for (int round = 0; round < 8; ++round) {
            const int have = l.pairs - l.opposite_pairs;
            if (have >= quota) break;
            auto pairs = round == 0 ? mixed_pairs(sys.graph(k + 1), quota, rng)
                                    : sample_pairs(sys.graph(k + 1), quota - have, 1, rng);
            LipReport more = lip_bound_check(sys, k, k + 1, pairs);
            l.pairs += more.pairs;
            l.skipped += more.skipped;
            l.opposite_pairs += more.opposite_pairs;
            l.max_ratio = std::max(l.max_ratio, more.max_ratio);
            if (more.min_ratio_nonopposite &&
                (!l.min_ratio_nonopposite || *more.min_ratio_nonopposite < *l.min_ratio_nonopposite))
                l.min_ratio_nonopposite = more.min_ratio_nonopposite;
        }
        r.samples += l.pairs - l.opposite_pairs;
        Rational b = 1 / (1 + delta_prime_or_achieved(sys, k));
        std::string tag = "[" + std::to_string(k) + "]";
        r.bounds.push_back(quantity("bound" + tag, b));
        if (l.min_ratio_nonopposite) {
            r.achieved.push_back(quantity("min ratio" + tag, *l.min_ratio_nonopposite));
            if (*l.min_ratio_nonopposite < b)
                r.fail(level_tag(k) + "ratio " + l.min_ratio_nonopposite->get_str() + " < " + b.get_str());
        }
    }
    if (sys.constants.delta_prime.empty()) r.warnings.push_back("delta' not declared; using the achieved delta^E");
    if (opt.samples <= 0) r.warnings.push_back("no samples drawn: vacuous pass");
    return r;
}

CheckReport check_deep_points(const InverseSystem& sys) {
    CheckReport r;
    r.id = "deep";
    r.statement = "mu_{i+1}(terminal intervals of X_i') <= 2 delta_i^E";
    DeepPointReport d = deep_point_report(sys, sys.top());
    for (std::size_t i = 0; i < d.terminal_measure.size(); ++i) {
        r.achieved.push_back(quantity("terminal[" + std::to_string(i) + "]", d.terminal_measure[i]));
        r.bounds.push_back(quantity("2 deltaE[" + std::to_string(i) + "]", d.bound[i]));
        if (q(d.terminal_measure[i]) > d.bound[i])
            r.fail(level_tag(static_cast<int>(i)) + "terminal measure " + d.terminal_measure[i].str());
    }
    r.achieved.push_back(quantity("cumulative", d.cumulative));
    return r;
}

CheckReport check_circle_set(const InverseSystem& sys) {
    CheckReport r;
    r.id = "circle-set";
    r.statement = "mu_i(union of circle subedges of X_i') >= beta";
    const auto& beta = sys.constants.beta;
    for (int i = 0; i < sys.top(); ++i) {
        Dyadic m = circle_set_measure(sys, i);
        r.achieved.push_back(quantity("circle measure[" + std::to_string(i) + "]", m));
        if (beta && q(m) < *beta) r.fail(level_tag(i) + "circle measure " + m.str() + " < beta");
        if (count_paths(sys, i) <= 4096) {
            SegmentSet circles;
            const MetricGraph& g = sys.graph(i);
            for (const Edge& e : g.edges())
                for (const SubEdge& s : sys.levels[static_cast<std::size_t>(i)].subdivision[static_cast<std::size_t>(e.id)])
                    if (s.is_circle()) circles.add(e.id, s.start, s.start + s.length);
            circles.normalize();
            Dyadic via = alberti_measure(sys, i, alberti_representation(sys, i), circles);
            if (via != m) r.fail(level_tag(i) + "path disintegration gives " + via.str());
        }
    }
    if (beta) r.bounds.push_back(quantity("beta", *beta));
    else r.warnings.push_back("beta not declared; values reported only");
    return r;
}

CheckReport check_alberti(const InverseSystem& sys, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "alberti";
    r.statement = "mu_i(A) = sum_P P(P) |A cap P| on random segment sets";
    r.seed = opt.seed;
    std::mt19937_64 rng(opt.seed);
    for (int i = 0; i <= top_level(sys, opt); ++i) {
        long double paths = count_paths(sys, i);
        if (paths > 4096) {
            r.warnings.push_back(level_tag(i) + "skipped, " + std::to_string(static_cast<double>(paths)) + " paths");
            continue;
        }
        PathMeasure pm = alberti_representation(sys, i);
        Dyadic total = 0;
        for (const auto& p : pm) total += p.probability;
        if (total != Dyadic(1)) r.fail(level_tag(i) + "probabilities sum to " + total.str());
        const MetricGraph& g = sys.graph(i);
        int per = std::min(opt.samples, 1000);
        for (int s = 0; s < per; ++s) {
            SegmentSet a = random_segment_set(g, rng);
            Dyadic lhs = measure(g, a);
            Dyadic rhs = alberti_measure(sys, i, pm, a);
            ++r.samples;
            if (lhs != rhs) r.fail(level_tag(i) + "mu = " + lhs.str() + ", disintegration = " + rhs.str());
        }
        r.achieved.push_back(quantity_approx("paths[" + std::to_string(i) + "]", static_cast<long double>(pm.size())));
    }
    if (opt.samples <= 0) r.warnings.push_back("no samples drawn: vacuous pass");
    return r;
}

CheckReport check_doubling(const InverseSystem& sys, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "doubling";
    r.statement = "mu_i on each edge preimage is 8-doubling and mu_i(B_r(x)) <= 4 mu_i([x,y]) for r = |x-y|";
    r.seed = opt.seed;
    std::mt19937_64 rng(opt.seed);
    const int J = top_level(sys, opt);
    Rational worst_doubling = 0;
    Rational worst_path = 0;
    long long path_samples = 0;
    for (int i = 1; i <= J; ++i) {
        const MetricGraph& g = sys.graph(i);
        const MetricGraph& parent = sys.graph(i - 1);
        Dyadic min_len = g.edge(0).length;
        for (const Edge& e : g.edges()) min_len = min(min_len, e.length);
        const int per_parent = std::max(1, opt.samples / (J * parent.num_edges()));
        for (const Edge& P : parent.edges()) {
            SegmentSet R = edge_preimage(sys, i, P.id);
            std::vector<EdgeId> over = edges_over(sys, i, P.id);
            std::vector<GraphPoint> centers;
            std::set<VertexId> seen;
            for (EdgeId e : over) {
                if (seen.insert(g.edge(e).src).second) centers.push_back(GraphPoint{e, Dyadic(0)});
                if (seen.insert(g.edge(e).dst).second) centers.push_back(GraphPoint{e, g.edge(e).length});
            }
            std::vector<Dyadic> radii;
            for (Dyadic rr = P.length; rr >= min_len.half(); rr = rr.half()) radii.push_back(rr);
            DoublingReport d = doubling_ratio(g, R, centers, radii);
            r.samples += d.evaluated;
            worst_doubling = std::max(worst_doubling, d.max_ratio);
            if (d.max_ratio > 8)
                r.fail(level_tag(i) + "doubling ratio " + d.max_ratio.get_str() + " at edge " +
                       std::to_string(d.argmax_center.edge));
            // shortest paths [x, y] inside the preimage
            for (int s = 0; s < per_parent; ++s) {
                GraphPoint x = s < static_cast<int>(centers.size()) ? centers[static_cast<std::size_t>(s)]
                                                                    : random_point(g, over[rng() % over.size()], rng);
                GraphPoint y = random_point(g, over[rng() % over.size()], rng);
                if (x == y) continue;
                DistanceField f = distances_from(g, x);
                Geodesic geo = shortest_path(g, f, y);
                if (!geo.path.subset_of(R)) continue;
                Dyadic ball_m = measure(g, ball(g, f, geo.length).intersect(R));
                Dyadic path_m = measure(g, geo.path);
                Rational ratio = q(ball_m) / q(path_m);
                ++path_samples;
                worst_path = std::max(worst_path, ratio);
                if (ratio > 4)
                    r.fail(level_tag(i) + "mu(B_r(x)) / mu([x,y]) = " + ratio.get_str());
            }
        }
    }
    r.samples += path_samples;
    r.achieved.push_back(quantity("max doubling ratio", worst_doubling));
    r.achieved.push_back(quantity("max ball/path ratio", worst_path));
    r.bounds.push_back(quantity("doubling", Rational(8)));
    r.bounds.push_back(quantity("ball/path", Rational(4)));
    if (worst_doubling > 0 && worst_path > 0)
        r.margin = std::min(8 / ld(worst_doubling), 4 / ld(worst_path));
    return r;
}

CheckReport check_condexp(const InverseSystem& sys, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "condexp";
    r.statement = "int phi E(h) dmu_i = int (phi o pi) h dmu_{i+1}; Lip(E(h)) <= (1 + delta_i') Lip(h)";
    r.seed = opt.seed;
    std::mt19937_64 rng(opt.seed);
    const int J = top_level(sys, opt);
    if (J == 0) {
        r.warnings.push_back("single level: nothing to average");
        return r;
    }
    Rational worst_amp = 0;
    int identities = 0;
    for (int f = 0; f < opt.functions * 10; ++f) {
        int i = f % J;
        const MetricGraph& gi = sys.graph(i);
        const MetricGraph& gj = sys.graph(i + 1);
        PLFunction h = random_pl(gj, i + 1, opt.k, rng);
        PLFunction e = cond_exp_step(sys, i, h);
        SegmentSet a = f % 10 == 0 ? full_set(gi) : random_segment_set(gi, rng);
        Vec lhs = integrate(gi, e, a);
        Vec rhs = integrate(gj, h, preimage(sys, i, i + 1, a));
        ++identities;
        if (lhs != rhs) r.fail(level_tag(i) + "identity fails on a test set");
    }
    r.achieved.push_back(quantity_approx("identity pairs", identities));
    for (int i = 0; i < J; ++i) {
        const MetricGraph& gi = sys.graph(i);
        const MetricGraph& gj = sys.graph(i + 1);
        auto pairs = mixed_pairs(gi, opt.samples / J, rng);
        auto dist = pair_distances(gi, pairs);
        PLFunction h = random_pl(gj, i + 1, opt.k, rng);
        PLFunction e = cond_exp_step(sys, i, h);
        Rational lip = lipschitz_constant(h, opt.norm);
        Rational bound = (1 + delta_prime_or_achieved(sys, i)) * lip;
        Rational level_worst = 0;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            if (dist[k].is_zero()) continue;
            Rational ratio = lipschitz_ratio(e.eval(gi, pairs[k].x), e.eval(gi, pairs[k].y), dist[k], opt.norm);
            ++r.samples;
            level_worst = std::max(level_worst, ratio);
            if (ratio > bound && norm_is_exact(opt.k, opt.norm))
                r.fail(level_tag(i) + "amplification " + Rational(ratio / lip).get_str());
        }
        if (lip > 0) worst_amp = std::max(worst_amp, Rational(level_worst / lip));
        r.bounds.push_back(quantity("1 + delta'[" + std::to_string(i) + "]", Rational(1 + delta_prime_or_achieved(sys, i))));
    }
    r.achieved.push_back(quantity("max Lip(E h) / Lip(h)", worst_amp));
    if (!norm_is_exact(opt.k, opt.norm)) r.warnings.push_back("inexact norm: amplification reported only");
    if (opt.samples <= 0) r.warnings.push_back("no pairs drawn for the Lipschitz part");
    return r;
}

CheckReport check_martingale(const InverseSystem& sys, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "martingale";
    r.statement = "E_i^{i+1}(h_{i+1}') = h_i' edge-wise for h_i = E_i(f)";
    r.seed = opt.seed;
    std::mt19937_64 rng(opt.seed);
    const int J = top_level(sys, opt);
    std::optional<Rational> L2;
    if (sys.constants.L) L2 = *sys.constants.L * *sys.constants.L;
    Rational worst_sup = 0;
    for (int f = 0; f < opt.functions; ++f) {
        PLFunction h = random_pl(sys.graph(J), J, opt.k, rng);
        MartingaleReport m = derivative_martingale(sys, h, J, opt.norm);
        ++r.samples;
        for (std::size_t i = 0; i < m.identity_holds.size(); ++i)
            if (!m.identity_holds[i]) r.fail(level_tag(static_cast<int>(i)) + "identity fails for function " + std::to_string(f));
        Rational lip = lipschitz_constant(h, opt.norm);
        for (const auto& s : m.sup_norms) {
            if (lip > 0) worst_sup = std::max(worst_sup, Rational(s / lip));
            if (L2 && s > *L2 * lip && m.exact) r.fail("sup norm of a derivative exceeds L^2 Lip(f)");
        }
    }
    r.achieved.push_back(quantity("max ||h_i'||_inf / Lip(f)", worst_sup));
    if (L2) r.bounds.push_back(quantity("L^2", *L2));
    if (opt.functions <= 0) r.warnings.push_back("no functions drawn: vacuous pass");
    return r;
}

CheckReport check_ftc(const InverseSystem& sys, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "ftc";
    r.statement = "||g(y) - g(x)|| <= 2 |y - x| avg_{[x,y]} E_i(||g'||) for x, y in one edge preimage";
    r.seed = opt.seed;
    r.bounds.push_back(quantity("ratio", Rational(1)));
    if (opt.samples <= 0 || opt.functions <= 0) {
        r.warnings.push_back("no samples drawn: vacuous pass");
        return r;
    }
    std::mt19937_64 rng(opt.seed);
    const int J = top_level(sys, opt);
    if (J == 0) {
        r.warnings.push_back("single level: no edge preimages");
        return r;
    }
    std::vector<std::vector<PointPair>> pairs(static_cast<std::size_t>(J + 1));
    for (int i = 1; i <= J; ++i) pairs[static_cast<std::size_t>(i)] = ftc_pairs(sys, i, std::max(1, opt.samples / J), rng);
    Rational worst = 0;
    int violations = 0;
    for (int f = 0; f < opt.functions; ++f) {
        PLFunction g = random_pl(sys.graph(J), J, opt.k, rng);
        for (int i = 1; i <= J; ++i) {
            FtcReport rep = ftc_check(sys, i, g, pairs[static_cast<std::size_t>(i)], opt.norm);
            r.samples += rep.evaluated;
            worst = std::max(worst, rep.max_ratio);
            violations += rep.violations;
            for (const auto& w : rep.warnings)
                if (std::find(r.warnings.begin(), r.warnings.end(), w) == r.warnings.end()) r.warnings.push_back(w);
        }
    }
    Rational pi_ratio = 0;
    PLFunction pi = height_function(sys, J);
    for (int i = 1; i <= J; ++i)
        pi_ratio = std::max(pi_ratio, ftc_check(sys, i, pi, pairs[static_cast<std::size_t>(i)], Norm::Sup).max_ratio);
    r.achieved.push_back(quantity("max ratio", worst));
    r.achieved.push_back(quantity("max ratio for g = pi", pi_ratio));
    if (violations > 0) r.fail(std::to_string(violations) + " pairs with ratio > 1");
    if (pi_ratio > Rational(1, 2)) r.fail("g = pi gives ratio " + pi_ratio.get_str() + " > 1/2");
    if (worst > 0) r.margin = 1 / ld(worst);
    return r;
}

CheckReport check_maximal(const InverseSystem& sys, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "maximal";
    r.statement = "sup_t t mu{M(||h||) > t} <= 256 p/(p-1) ||h||_p";
    r.seed = opt.seed;
    if (opt.functions <= 0 || opt.samples <= 0) {
        r.warnings.push_back("no functions drawn: vacuous pass");
        return r;
    }
    std::mt19937_64 rng(opt.seed);
    const int J = top_level(sys, opt);
    long double worst_margin = -1;
    for (int f = 0; f < opt.functions; ++f) {
        int level = J == 0 ? 0 : 1 + f % J;
        const MetricGraph& g = sys.graph(level);
        PLFunction h = random_pl(g, level, opt.k, rng);
        int cells = level >= 5 ? std::min(opt.cells, 2) : opt.cells;
        auto samples = maximal_samples(sys, h, cells, opt.grid);
        for (const auto& p : opt.p_values) {
            WeakReport w = weak_inequality_report(g, h, p, samples);
            r.samples += static_cast<long long>(w.samples);
            if (!w.pass)
                r.fail("function " + std::to_string(f) + ", p = " + p.get_str() + ": weak norm " +
                       w.weak_norm.get_str() + " > bound " + std::to_string(static_cast<double>(w.bound)));
            if (worst_margin < 0 || w.margin < worst_margin) worst_margin = w.margin;
        }
    }
    // constant function: M = 1 and the weak norm is exactly 1
    {
        const MetricGraph& g = sys.graph(J);
        std::vector<Vec> ones(static_cast<std::size_t>(g.num_vertices()), Vec(static_cast<std::size_t>(opt.k), Rational(0)));
        for (auto& v : ones) v[0] = 1;
        PLFunction one = PLFunction::from_vertex_values(g, J, ones);
        Rational wn = weak_norm(maximal_samples(sys, one, 1, 2));
        r.achieved.push_back(quantity("weak norm of M(1)", wn));
        if (wn != 1) r.fail("constant function: weak norm " + wn.get_str() + " != 1");
    }
    if (worst_margin >= 0) {
        r.margin = worst_margin;
        r.achieved.push_back(quantity_approx("min margin", worst_margin));
    }
    r.bounds.push_back(quantity("C", Rational(256)));
    return r;
}

std::vector<CoveringCandidate> random_covering_candidates(const InverseSystem& sys, int i, int count,
                                                          std::mt19937_64& rng) {
    if (i < 1) throw PreconditionError("covering candidates need a level >= 1");
    const MetricGraph& g = sys.graph(i);
    std::vector<CoveringCandidate> out;
    std::map<EdgeId, std::vector<EdgeId>> over;
    for (EdgeId e = 0; e < g.num_edges(); ++e)
        over[sys.lifts[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(e)].parent].push_back(e);
    std::vector<EdgeId> parents;
    for (const auto& [P, es] : over) parents.push_back(P);
    // cluster candidates in a few parent edges so that selections interact
    std::vector<EdgeId> hot;
    for (int k = 0; k < std::min<int>(3, static_cast<int>(parents.size())); ++k) hot.push_back(parents[rng() % parents.size()]);
    while (static_cast<int>(out.size()) < count) {
        EdgeId P = hot[rng() % hot.size()];
        const auto& es = over[P];
        GraphPoint p = random_point(g, es[rng() % es.size()], rng, 4);
        GraphPoint qq = random_point(g, es[rng() % es.size()], rng, 4);
        if (p == qq) continue;
        out.push_back({i, p, qq});
    }
    return out;
}

CheckReport check_covering(const InverseSystem& sys, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "covering";
    r.statement = "covering_select output is disjoint, covers the candidates and has enlargement ratio <= 256";
    r.seed = opt.seed;
    std::mt19937_64 rng(opt.seed);
    const int J = top_level(sys, opt);
    if (J == 0) {
        r.warnings.push_back("single level: no candidates");
        return r;
    }
    Rational worst = 0;
    for (int f = 0; f < opt.functions; ++f) {
        int i = 1 + f % J;
        auto cands = random_covering_candidates(sys, i, 50, rng);
        CoveringResult c = covering_select(sys, cands);
        r.samples += static_cast<long long>(cands.size());
        if (!c.disjoint) r.fail(level_tag(i) + "selected enlargements are not disjoint");
        if (!c.covers) r.fail(level_tag(i) + "enlargements do not cover the candidates");
        if (c.max_ratio > 256) r.fail(level_tag(i) + "ratio " + c.max_ratio.get_str());
        worst = std::max(worst, c.max_ratio);
    }
    r.achieved.push_back(quantity("max ratio", worst));
    r.bounds.push_back(quantity("C", Rational(256)));
    if (worst > 0) r.margin = 256 / ld(worst);
    return r;
}

CheckReport check_residual(const InverseSystem& sys, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "residual";
    r.statement = "differentiability residual: 0 for pi, 0 inside a lineage cell for frozen f, <= Lip(f) 4 delta_i' otherwise";
    r.seed = opt.seed;
    std::mt19937_64 rng(opt.seed);
    const int J = top_level(sys, opt);
    if (J == 0) {
        r.warnings.push_back("single level: no scales to test");
        return r;
    }
    const MetricGraph& G = sys.graph(J);
    auto deep_point = [&]() {
        for (int attempt = 0; attempt < 10000; ++attempt) {
            GraphPoint x = random_point(G, random_edge(G, rng), rng, 8);
            if (!point_vertex(G, x) && is_deep(sys, J, x, 0)) return x;
        }
        throw PreconditionError("no deep point found");
    };
    const Dyadic R = 1;
    PLFunction pi = height_function(sys, J);
    Rational pi_worst = 0;
    Rational worst_excess = 0;
    int cells_zero = 0;
    for (int f = 0; f < opt.functions; ++f) {
        GraphPoint x = deep_point();
        ResidualReport rp = differentiability_residual(sys, pi, x, R, 0, J, -1, Norm::Sup);
        for (const auto& v : rp.residual) pi_worst = std::max(pi_worst, v);
        int m = static_cast<int>(rng() % static_cast<unsigned>(J));
        PLFunction fm = random_pl(sys.graph(m), m, 1, rng);
        PLFunction fJ = pullback(sys, J, fm);
        Rational lip = lipschitz_constant(fJ, Norm::Sup);
        ResidualReport rf = differentiability_residual(sys, fJ, x, R, 0, J, m, Norm::Sup);
        r.samples += static_cast<long long>(rf.residual.size());
        for (std::size_t k = 0; k < rf.levels.size(); ++k) {
            int i = rf.levels[k];
            if (i <= m) continue;
            if (rf.in_cell[k]) {
                ++cells_zero;
                if (rf.residual[k] != 0)
                    r.fail(level_tag(i) + "nonzero residual " + rf.residual[k].get_str() + " inside one lineage cell");
            }
            Rational bound = lip * 4 * delta_prime_or_achieved(sys, i < J ? i : J - 1);
            if (rf.residual[k] > bound) r.fail(level_tag(i) + "residual " + rf.residual[k].get_str() + " > " + bound.get_str());
            if (bound > 0) worst_excess = std::max(worst_excess, Rational(rf.residual[k] / bound));
        }
    }
    if (pi_worst != 0) r.fail("f = pi has residual " + pi_worst.get_str());
    r.achieved.push_back(quantity("max residual for pi", pi_worst));
    r.achieved.push_back(quantity_approx("scales inside one cell", cells_zero));
    r.achieved.push_back(quantity("max residual / (4 Lip delta')", worst_excess));
    return r;
}

// ---- diamond suites --------------------------------------------------------------

CheckReport check_daxiom_suite(const GeneralizedDiamondSystem& d) {
    CheckReport r;
    r.id = "daxioms";
    r.statement = "D1-D7, P1, P2, total measure 1 and delta_i > delta";
    DAxiomReport a = check_d_axioms(d);
    for (const auto& res : a.results) {
        if (!res.pass) {
            if (res.messages.empty()) r.fail(res.id);
            for (const auto& m : res.messages) r.fail(res.id + ": " + m);
        }
    }
    r.achieved.push_back(quantity("D7 worst distance (edges)", a.d7_worst));
    r.bounds.push_back(quantity("D7", Rational(2)));
    for (std::size_t i = 0; i < d.delta_i.size(); ++i) r.achieved.push_back(quantity("delta_" + std::to_string(i), d.delta_i[i]));
    for (std::size_t i = 0; i < d.N.size(); ++i) r.achieved.push_back(quantity_approx("N_" + std::to_string(i), d.N[i]));
    r.bounds.push_back(quantity("delta", d.delta));
    r.samples = static_cast<long long>(a.results.size());
    return r;
}

CheckReport check_parallelograms(const GeneralizedDiamondSystem& d, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "parallelogram";
    r.statement = "every parallelogram of every witness is delta_c^{-1}-quasiconvex";
    r.seed = opt.seed;
    if (opt.samples <= 0) {
        r.warnings.push_back("no samples drawn: vacuous pass");
        return r;
    }
    std::optional<Rational> worst;
    std::set<Coord> seen;
    for (const auto& level : d.witnesses)
        for (const auto& w : level) {
            if (!seen.insert(w.c).second) continue;
            for (int j = 0; j < static_cast<int>(w.branches.size()); ++j) {
                ParallelogramReport p = certify_parallelogram(w, j, opt.samples);
                r.samples += p.evaluated;
                if (p.min_ratio < w.delta_c)
                    r.fail("c = witness " + std::to_string(seen.size()) + ", branch " + std::to_string(j) + ": ratio " +
                           p.min_ratio.get_str() + " < delta_c " + w.delta_c.get_str());
                Rational rel = p.min_ratio / w.delta_c;
                if (!worst || rel < *worst) worst = rel;
            }
        }
    if (worst) {
        r.achieved.push_back(quantity("min ratio / delta_c", *worst));
        r.margin = ld(*worst);
    }
    r.bounds.push_back(quantity("ratio / delta_c", Rational(1)));
    return r;
}

CheckReport check_quasiconvexity(const GeneralizedDiamondSystem& d, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "quasiconvexity";
    r.statement = "||x - y|| >= delta_i d_i(x, y) on stratified pairs";
    r.seed = opt.seed;
    if (opt.samples <= 0) {
        r.warnings.push_back("no samples drawn: vacuous pass");
        return r;
    }
    std::mt19937_64 rng(opt.seed);
    const int J = opt.max_level ? std::min(d.sys.top(), *opt.max_level) : d.sys.top();
    for (int i = 0; i <= J; ++i) {
        QuasiconvexityReport qr = certify_quasiconvexity(d, i, opt.samples, rng);
        r.samples += qr.evaluated;
        const Rational& di = d.delta_i[static_cast<std::size_t>(i)];
        r.achieved.push_back(quantity("min ratio[" + std::to_string(i) + "]", qr.min_ratio));
        r.bounds.push_back(quantity("delta_" + std::to_string(i), di));
        for (const auto& [k, v] : qr.stratum_min)
            r.achieved.push_back(quantity("  " + k + "[" + std::to_string(i) + "] (" +
                                              std::to_string(qr.stratum_count.at(k)) + " pairs)",
                                          v));
        if (qr.evaluated > 0 && qr.min_ratio < di)
            r.fail(level_tag(i) + "ratio " + qr.min_ratio.get_str() + " < delta_i " + di.get_str());
        if (qr.evaluated > 0) {
            long double m = ld(Rational(qr.min_ratio / di));
            r.margin = r.margin ? std::min(*r.margin, m) : m;
        }
    }
    return r;
}

CheckReport check_distortion(const GeneralizedDiamondSystem& d, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "distortion";
    r.statement = "d_i(u, v) <= delta_i^{-1} ||u - v|| over vertex pairs";
    r.seed = opt.seed;
    std::mt19937_64 rng(opt.seed);
    const int J = opt.max_level ? std::min(d.sys.top(), *opt.max_level) : d.sys.top();
    const long long budget = std::max<long long>(opt.samples, 0) * 20;
    for (int i = 0; i <= J; ++i) {
        DistortionReport dr = vertex_distortion(d, i, budget, rng);
        r.samples += dr.pairs;
        Rational b = 1 / d.delta_i[static_cast<std::size_t>(i)];
        r.achieved.push_back(quantity("max ratio[" + std::to_string(i) + "]", dr.max_ratio));
        r.bounds.push_back(quantity("1/delta_" + std::to_string(i), b));
        if (dr.sampled) r.warnings.push_back(level_tag(i) + "pair budget exceeded, sampled sources");
        if (dr.max_ratio > b) r.fail(level_tag(i) + "ratio " + dr.max_ratio.get_str() + " > " + b.get_str());
    }
    return r;
}

CheckReport check_diamond_fibers(const GeneralizedDiamondSystem& d, const LemmaOptions& opt) {
    CheckReport r;
    r.id = "diamond-fibers";
    r.statement = "||p - x|| <= 2^{-(n_i+1+N_i)} for p in the fiber of x under pi_i^{i+1}";
    r.seed = opt.seed;
    std::mt19937_64 rng(opt.seed);
    const int J = opt.max_level ? std::min(d.sys.top(), *opt.max_level) : d.sys.top();
    for (int i = 0; i < J; ++i) {
        std::vector<GraphPoint> base = subdivision_points(d.sys, i);
        if (static_cast<int>(base.size()) > opt.samples) {
            std::shuffle(base.begin(), base.end(), rng);
            base.resize(static_cast<std::size_t>(std::max(opt.samples, 0)));
        }
        Rational bound = q(Dyadic::pow2(d.n[static_cast<std::size_t>(i)] + 1 + d.N[static_cast<std::size_t>(i)]));
        Rational worst = 0;
        for (const GraphPoint& x : base) {
            NormedPoint px = d.point(i, x);
            for (const GraphPoint& p : fiber_points(d.sys, i, i + 1, x)) {
                Rational dist = distance(px, d.point(i + 1, p));
                worst = std::max(worst, dist);
                ++r.samples;
                if (dist > bound) r.fail(level_tag(i) + "fiber displacement " + dist.get_str());
            }
        }
        r.achieved.push_back(quantity("max displacement[" + std::to_string(i) + "]", worst));
        r.bounds.push_back(quantity("2^{-(n+1+N)}[" + std::to_string(i) + "]", bound));
    }
    return r;
}

CheckReport run_lemma(const std::string& name, const InverseSystem& sys, const GeneralizedDiamondSystem* diamond,
                      const LemmaOptions& opt) {
    auto need_diamond = [&]() -> const GeneralizedDiamondSystem& {
        if (!diamond) throw PreconditionError("check '" + name + "' needs a generalized diamond system");
        return *diamond;
    };
    CheckReport r;
    if (name == "pushforward") r = check_pushforward(sys);
    else if (name == "axioms") r = check_axiom_suite(sys);
    else if (name == "deltas") r = check_deltas(sys);
    else if (name == "fiber-diameter") r = check_fiber_diameter(sys, opt);
    else if (name == "lip") r = check_lip_upper(sys, opt);
    else if (name == "near-isometry") r = check_near_isometry(sys, opt);
    else if (name == "deep") r = check_deep_points(sys);
    else if (name == "circle-set") r = check_circle_set(sys);
    else if (name == "alberti") r = check_alberti(sys, opt);
    else if (name == "doubling") r = check_doubling(sys, opt);
    else if (name == "condexp") r = check_condexp(sys, opt);
    else if (name == "martingale") r = check_martingale(sys, opt);
    else if (name == "ftc") r = check_ftc(sys, opt);
    else if (name == "maximal") r = check_maximal(sys, opt);
    else if (name == "covering") r = check_covering(sys, opt);
    else if (name == "residual") r = check_residual(sys, opt);
    else if (name == "daxioms") r = check_daxiom_suite(need_diamond());
    else if (name == "parallelogram") r = check_parallelograms(need_diamond(), opt);
    else if (name == "quasiconvexity") r = check_quasiconvexity(need_diamond(), opt);
    else if (name == "distortion") r = check_distortion(need_diamond(), opt);
    else if (name == "diamond-fibers") r = check_diamond_fibers(need_diamond(), opt);
    else throw std::invalid_argument("unknown check '" + name + "'");
    r.seed = opt.seed;
    return r;
}

}  // namespace invsys
