// SPDX-License-Identifier: MIT

#include "invsys/io.hpp"

#include <algorithm>

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace invsys {

namespace {

std::string dy(const Dyadic& d) { return d.str(); }
std::string ra(const Rational& q) { return q.get_str(); }

Json opt_rational(const std::optional<Rational>& q) { return q ? Json(ra(*q)) : Json(nullptr); }

std::optional<Rational> opt_rational(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return json_rational(j);
}

Json coord_json(const Coord& c) {
    Json a = Json::array();
    for (const auto& x : c) a.push_back(ra(x));
    return a;
}

Coord coord_from(const Json& j) {
    if (!j.is_array()) throw FormatError("coordinate vector expected");
    Coord c;
    for (const auto& x : j) c.push_back(json_rational(x));
    return c;
}

template <class T>
T get_field(const Json& j, const char* key) {
    if (!j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("field '") + key + "': " + e.what());
    }
}

const Json& field(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
    return j.at(key);
}

}  // namespace

Rational json_rational(const Json& j) {
    try {
        if (j.is_string()) return parse_rational(j.get<std::string>());
        if (j.is_number_integer()) return Rational(std::to_string(j.get<long long>()), 10);
        if (j.is_number()) return parse_rational(j.dump());
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
    throw FormatError("number or string expected, got " + j.dump());
}

Dyadic json_dyadic(const Json& j) {
    try {
        if (j.is_string()) return Dyadic::parse(j.get<std::string>());
        if (j.is_number_integer()) return Dyadic(j.get<long long>());
        if (j.is_number()) return Dyadic::parse(j.dump());
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
    throw FormatError("dyadic expected, got " + j.dump());
}

// ---- graphs ------------------------------------------------------------------

Json graph_to_json(const MetricGraph& g) {
    Json j;
    j["vertices"] = g.num_vertices();
    Json edges = Json::array();
    for (const Edge& e : g.edges())
        edges.push_back(Json{{"id", e.id}, {"src", e.src}, {"dst", e.dst}, {"length", dy(e.length)},
                             {"weight", dy(e.weight)}, {"direction", "src->dst"}});
    j["edges"] = std::move(edges);
    return j;
}

MetricGraph graph_from_json(const Json& j) {
    MetricGraph g;
    const Json& v = field(j, "vertices");
    int nv = v.is_array() ? static_cast<int>(v.size()) : v.get<int>();
    for (int k = 0; k < nv; ++k) g.add_vertex();
    int expect = 0;
    for (const Json& e : field(j, "edges")) {
        if (get_field<int>(e, "id") != expect) throw FormatError("edge ids must be 0, 1, 2, ... in order");
        int src = get_field<int>(e, "src");
        int dst = get_field<int>(e, "dst");
        if (src < 0 || src >= nv || dst < 0 || dst >= nv)
            throw FormatError("edge " + std::to_string(expect) + " has an endpoint out of range");
        if (e.contains("direction") && e["direction"] == "dst->src") std::swap(src, dst);
        g.add_edge(src, dst, json_dyadic(field(e, "length")), json_dyadic(field(e, "weight")));
        ++expect;
    }
    return g;
}

// ---- systems -------------------------------------------------------------------

Json system_to_json(const InverseSystem& sys) {
    Json j;
    j["name"] = sys.name;
    Json levels = Json::array();
    Json subs = Json::array();
    Json pairings = Json::array();
    for (const Level& l : sys.levels) {
        levels.push_back(graph_to_json(l.graph));
        Json ls = Json::array();
        Json pairs = Json::object();
        for (const auto& row : l.subdivision) {
            Json r = Json::array();
            for (const SubEdge& s : row) {
                r.push_back(Json{{"start", dy(s.start)}, {"length", dy(s.length)}, {"terminal", s.terminal},
                                 {"primary", s.primary}, {"opposite", s.opposite}});
                if (s.is_circle()) pairs[std::to_string(s.primary)] = s.opposite;
            }
            ls.push_back(std::move(r));
        }
        // an unrefined level is written as [] however it is held in memory
        if (std::all_of(l.subdivision.begin(), l.subdivision.end(), [](const auto& row) { return row.empty(); }))
            ls = Json::array();
        subs.push_back(std::move(ls));
        pairings.push_back(std::move(pairs));
    }
    j["levels"] = std::move(levels);
    j["subdivisions"] = std::move(subs);
    j["pairings"] = std::move(pairings);
    const SystemConstants& c = sys.constants;
    Json cj;
    cj["alpha"] = opt_rational(c.alpha);
    cj["beta"] = opt_rational(c.beta);
    Json de = Json::array();
    for (const auto& x : c.delta_E) de.push_back(opt_rational(x));
    Json dd = Json::array();
    for (const auto& x : c.delta_d) dd.push_back(opt_rational(x));
    Json dp = Json::array();
    for (const auto& x : c.delta_prime) dp.push_back(dy(x));
    cj["deltaE"] = std::move(de);
    cj["deltad"] = std::move(dd);
    cj["deltaPrime"] = std::move(dp);
    cj["L"] = opt_rational(c.L);
    j["constants"] = std::move(cj);
    return j;
}

InverseSystem system_from_json(const Json& j) {
    InverseSystem sys;
    if (j.contains("name")) sys.name = j["name"].get<std::string>();
    const Json& levels = field(j, "levels");
    const Json& subs = field(j, "subdivisions");
    if (!levels.is_array() || levels.empty()) throw FormatError("'levels' must be a nonempty array");
    if (!subs.is_array() || subs.size() != levels.size())
        throw FormatError("'subdivisions' must have one entry per level");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        Level l;
        l.graph = graph_from_json(levels[i]);
        const Json& ls = subs[i];
        if (!ls.empty() && static_cast<int>(ls.size()) != l.graph.num_edges())
            throw FormatError("level " + std::to_string(i) + ": one subdivision row per edge expected");
        for (const Json& row : ls) {
            std::vector<SubEdge> r;
            for (const Json& s : row)
                r.push_back({json_dyadic(field(s, "start")), json_dyadic(field(s, "length")),
                             get_field<bool>(s, "terminal"), get_field<int>(s, "primary"),
                             get_field<int>(s, "opposite")});
            l.subdivision.push_back(std::move(r));
        }
        sys.levels.push_back(std::move(l));
    }
    if (j.contains("constants")) {
        const Json& cj = j["constants"];
        SystemConstants& c = sys.constants;
        if (cj.contains("alpha")) c.alpha = opt_rational(cj["alpha"]);
        if (cj.contains("beta")) c.beta = opt_rational(cj["beta"]);
        if (cj.contains("L")) c.L = opt_rational(cj["L"]);
        if (cj.contains("deltaE"))
            for (const auto& x : cj["deltaE"]) c.delta_E.push_back(opt_rational(x));
        if (cj.contains("deltad"))
            for (const auto& x : cj["deltad"]) c.delta_d.push_back(opt_rational(x));
        if (cj.contains("deltaPrime"))
            for (const auto& x : cj["deltaPrime"]) c.delta_prime.push_back(json_dyadic(x));
    }
    try {
        sys.rebuild_lifts();
    } catch (const SystemError& e) {
        throw FormatError(std::string("inconsistent subdivisions: ") + e.what());
    }
    return sys;
}

Json diamond_to_json(const GeneralizedDiamondSystem& d) {
    Json j = system_to_json(d.sys);
    Json dj;
    dj["m"] = d.m;
    dj["delta"] = ra(d.delta);
    dj["n"] = d.n;
    Json di = Json::array();
    for (const auto& x : d.delta_i) di.push_back(ra(x));
    dj["delta_i"] = std::move(di);
    dj["N"] = d.N;
    dj["n_c"] = d.n_c;
    dj["m_i"] = d.m_i;
    Json dp = Json::array();
    for (const auto& x : d.delta_prime) dp.push_back(ra(x));
    dj["delta_prime"] = std::move(dp);
    Json coords = Json::array();
    for (const auto& level : d.coords) {
        Json lc = Json::array();
        for (const auto& p : level) {
            Json pt = coord_json(p.b);
            pt.push_back(ra(p.t));
            lc.push_back(std::move(pt));
        }
        coords.push_back(std::move(lc));
    }
    dj["coords"] = std::move(coords);
    dj["block"] = d.block;
    Json ws = Json::array();
    for (const auto& level : d.witnesses) {
        WitnessFile wf{d.m, d.delta, level};
        ws.push_back(witnesses_to_json(wf)["entries"]);
    }
    dj["witnesses"] = std::move(ws);
    j["diamond"] = std::move(dj);
    return j;
}

GeneralizedDiamondSystem diamond_from_json(const Json& j) {
    GeneralizedDiamondSystem d;
    d.sys = system_from_json(j);
    const Json& dj = field(j, "diamond");
    d.m = get_field<int>(dj, "m");
    d.delta = json_rational(field(dj, "delta"));
    d.n = get_field<std::vector<int>>(dj, "n");
    for (const auto& x : field(dj, "delta_i")) d.delta_i.push_back(json_rational(x));
    d.N = get_field<std::vector<int>>(dj, "N");
    d.n_c = get_field<std::vector<int>>(dj, "n_c");
    d.m_i = get_field<std::vector<int>>(dj, "m_i");
    for (const auto& x : field(dj, "delta_prime")) d.delta_prime.push_back(json_rational(x));
    for (const auto& lc : field(dj, "coords")) {
        std::vector<NormedPoint> level;
        for (const auto& pt : lc) {
            Coord c = coord_from(pt);
            if (static_cast<int>(c.size()) != d.m + 1) throw FormatError("coordinate of wrong dimension");
            Rational t = c.back();
            c.pop_back();
            level.push_back({std::move(c), std::move(t)});
        }
        d.coords.push_back(std::move(level));
    }
    d.block = get_field<std::vector<std::vector<int>>>(dj, "block");
    for (const auto& level : field(dj, "witnesses")) {
        Json wrap{{"m", d.m}, {"delta", ra(d.delta)}, {"entries", level}};
        d.witnesses.push_back(witnesses_from_json(wrap).entries);
    }
    const std::size_t L = d.sys.levels.size();
    if (d.coords.size() != L || d.n.size() != L || d.delta_i.size() != L || d.block.size() != L ||
        d.N.size() + 1 != L || d.n_c.size() + 1 != L || d.m_i.size() + 1 != L || d.delta_prime.size() + 1 != L)
        throw FormatError("diamond parameters do not match the number of levels");
    for (std::size_t i = 0; i < L; ++i)
        if (static_cast<int>(d.coords[i].size()) != d.sys.levels[i].graph.num_vertices())
            throw FormatError("level " + std::to_string(i) + ": one coordinate per vertex expected");
    return d;
}

// ---- functions and witnesses -------------------------------------------------

Json function_to_json(const MetricGraph& g, const PLFunction& f) {
    Json j;
    j["level"] = f.level;
    j["k"] = f.k;
    Json vv = Json::object();
    auto values = f.vertex_values(g);
    for (std::size_t v = 0; v < values.size(); ++v) {
        Json a = Json::array();
        for (const auto& x : values[v]) a.push_back(ra(x));
        vv[std::to_string(v)] = std::move(a);
    }
    j["vertex_values"] = std::move(vv);
    bool interior = false;
    for (const auto& ks : f.edges) interior = interior || ks.size() > 2;
    if (interior) {
        Json edges = Json::array();
        for (const auto& ks : f.edges) {
            Json row = Json::array();
            for (const Knot& k : ks) {
                Json v = Json::array();
                for (const auto& x : k.v) v.push_back(ra(x));
                row.push_back(Json{{"t", ra(k.t)}, {"v", std::move(v)}});
            }
            edges.push_back(std::move(row));
        }
        j["knots"] = std::move(edges);
    }
    return j;
}

PLFunction function_from_json(const MetricGraph& g, const Json& j) {
    int level = get_field<int>(j, "level");
    int k = get_field<int>(j, "k");
    if (k < 1) throw FormatError("k must be positive");
    PLFunction f;
    if (j.contains("knots")) {
        f.level = level;
        f.k = k;
        for (const Json& row : j["knots"]) {
            std::vector<Knot> ks;
            for (const Json& kn : row) {
                Vec v;
                for (const auto& x : field(kn, "v")) v.push_back(json_rational(x));
                ks.push_back({json_rational(field(kn, "t")), std::move(v)});
            }
            f.edges.push_back(std::move(ks));
        }
    } else {
        std::vector<Vec> values(static_cast<std::size_t>(g.num_vertices()));
        std::vector<bool> seen(values.size(), false);
        const Json& vv = field(j, "vertex_values");
        auto put = [&](std::size_t v, const Json& val) {
            if (v >= values.size()) throw FormatError("vertex " + std::to_string(v) + " out of range");
            Vec x;
            if (val.is_array())
                for (const auto& c : val) x.push_back(json_rational(c));
            else
                x.push_back(json_rational(val));
            if (static_cast<int>(x.size()) != k) throw FormatError("vertex " + std::to_string(v) + " has the wrong arity");
            values[v] = std::move(x);
            seen[v] = true;
        };
        if (vv.is_array())
            for (std::size_t v = 0; v < vv.size(); ++v) put(v, vv[v]);
        else
            for (const auto& [key, val] : vv.items()) put(std::stoul(key), val);
        for (std::size_t v = 0; v < seen.size(); ++v)
            if (!seen[v]) throw FormatError("no value for vertex " + std::to_string(v));
        f = PLFunction::from_vertex_values(g, level, values);
    }
    try {
        f.validate(g);
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("function: ") + e.what());
    }
    return f;
}

WitnessFile witnesses_from_json(const Json& j) {
    WitnessFile w;
    w.m = get_field<int>(j, "m");
    w.delta = json_rational(field(j, "delta"));
    for (const Json& e : field(j, "entries")) {
        ConvexWitness cw;
        cw.c = coord_from(field(e, "c"));
        for (const auto& b : field(e, "branches")) cw.branches.push_back(coord_from(b));
        cw.n_c = get_field<int>(e, "n_c");
        cw.delta_c = json_rational(field(e, "delta_c"));
        if (static_cast<int>(cw.c.size()) != w.m) throw FormatError("witness direction of wrong dimension");
        w.entries.push_back(std::move(cw));
    }
    return w;
}

Json witnesses_to_json(const WitnessFile& w) {
    Json j;
    j["m"] = w.m;
    j["delta"] = ra(w.delta);
    Json entries = Json::array();
    for (const auto& e : w.entries) {
        Json b = Json::array();
        for (const auto& c : e.branches) b.push_back(coord_json(c));
        entries.push_back(Json{{"c", coord_json(e.c)}, {"branches", std::move(b)}, {"n_c", e.n_c},
                               {"delta_c", ra(e.delta_c)}});
    }
    j["entries"] = std::move(entries);
    return j;
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << j.dump(1) << '\n';
}

bool structurally_equal(const MetricGraph& a, const MetricGraph& b) {
    if (a.num_vertices() != b.num_vertices() || a.num_edges() != b.num_edges()) return false;
    for (EdgeId e = 0; e < a.num_edges(); ++e) {
        const Edge& x = a.edge(e);
        const Edge& y = b.edge(e);
        if (x.src != y.src || x.dst != y.dst || x.length != y.length || x.weight != y.weight) return false;
    }
    return true;
}

bool structurally_equal(const InverseSystem& a, const InverseSystem& b) {
    if (a.levels.size() != b.levels.size()) return false;
    for (std::size_t i = 0; i < a.levels.size(); ++i) {
        if (!structurally_equal(a.levels[i].graph, b.levels[i].graph)) return false;
        const auto& sa = a.levels[i].subdivision;
        const auto& sb = b.levels[i].subdivision;
        if (sa.size() != sb.size()) return false;
        for (std::size_t e = 0; e < sa.size(); ++e) {
            if (sa[e].size() != sb[e].size()) return false;
            for (std::size_t k = 0; k < sa[e].size(); ++k) {
                const SubEdge& x = sa[e][k];
                const SubEdge& y = sb[e][k];
                if (x.start != y.start || x.length != y.length || x.terminal != y.terminal ||
                    x.primary != y.primary || x.opposite != y.opposite)
                    return false;
            }
        }
    }
    const SystemConstants& x = a.constants;
    const SystemConstants& y = b.constants;
    return x.alpha == y.alpha && x.beta == y.beta && x.L == y.L && x.delta_E == y.delta_E &&
           x.delta_d == y.delta_d && x.delta_prime == y.delta_prime;
}

// ---- exports ---------------------------------------------------------------------

void export_dot(std::ostream& os, const InverseSystem& sys, int level) {
    const MetricGraph& g = sys.graph(level);
    os << "digraph X" << level << " {\n";
    for (VertexId v = 0; v < g.num_vertices(); ++v) os << "  v" << v << ";\n";
    for (const Edge& e : g.edges())
        os << "  v" << e.src << " -> v" << e.dst << " [id=\"e" << e.id << "\", length=\"" << e.length.str()
           << "\", weight=\"" << e.weight.str() << "\", label=\"" << std::setprecision(6) << e.length.to_double()
           << "\"];\n";
    os << "}\n";
}

void export_edges_csv(std::ostream& os, const InverseSystem& sys) {
    os << "level,edge,src,dst,length,weight,parent,subedge,opposite\n";
    for (int i = 0; i <= sys.top(); ++i)
        for (const Edge& e : sys.graph(i).edges()) {
            os << i << ',' << e.id << ',' << e.src << ',' << e.dst << ',' << e.length.str() << ',' << e.weight.str();
            if (i >= 1) {
                const Lift& l = sys.lifts[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(e.id)];
                os << ',' << l.parent << ',' << l.sub << ',' << (l.opposite ? 1 : 0);
            } else {
                os << ",,,";
            }
            os << '\n';
        }
}

void export_constants_csv(std::ostream& os, const InverseSystem& sys) {
    const SystemConstants& c = sys.constants;
    auto opt = [](const std::optional<Rational>& q) { return q ? q->get_str() : std::string(); };
    os << "level,deltaE,deltad,deltaPrime,alpha,beta,L\n";
    for (int i = 0; i <= sys.top(); ++i) {
        auto at = [&](const auto& v) -> std::string {
            if (static_cast<std::size_t>(i) >= v.size()) return {};
            return opt(v[static_cast<std::size_t>(i)]);
        };
        os << i << ',' << at(c.delta_E) << ',' << at(c.delta_d) << ',';
        if (static_cast<std::size_t>(i) < c.delta_prime.size()) os << c.delta_prime[static_cast<std::size_t>(i)].str();
        os << ',' << opt(c.alpha) << ',' << opt(c.beta) << ',' << opt(c.L) << '\n';
    }
}

void export_svg(std::ostream& os, const InverseSystem& sys, int level, int max_vertices) {
    const int nv = sys.graph(level).num_vertices();
    if (nv > max_vertices)
        throw FormatError("SVG refused: level " + std::to_string(level) + " has " + std::to_string(nv) +
                          " vertices, budget " + std::to_string(max_vertices));
    // x is the projection to X_0, y accumulates the lineage offsets of circles
    const MetricGraph& g0 = sys.graph(0);
    std::vector<std::pair<double, double>> pos(static_cast<std::size_t>(g0.num_vertices()), {0.0, 0.0});
    {
        DistanceField f = distances_from(g0, vertex_point(g0, zero_vertex(sys, 0)));
        for (VertexId v = 0; v < g0.num_vertices(); ++v) {
            const auto& d = f.dist[static_cast<std::size_t>(v)];
            pos[static_cast<std::size_t>(v)] = {d ? d->to_double() : 0.0, 0.0};
        }
    }
    std::vector<double> bow;  // per edge of the current level
    for (int i = 0; i < level; ++i) {
        const MetricGraph& G = sys.graph(i);
        const MetricGraph& H = sys.graph(i + 1);
        std::vector<std::pair<double, double>> next(static_cast<std::size_t>(H.num_vertices()));
        std::vector<bool> placed(next.size(), false);
        for (VertexId v = 0; v < G.num_vertices(); ++v) {
            VertexId w = lift_vertex(sys, i, v);
            next[static_cast<std::size_t>(w)] = pos[static_cast<std::size_t>(v)];
            placed[static_cast<std::size_t>(w)] = true;
        }
        bow.assign(static_cast<std::size_t>(H.num_edges()), 0.0);
        for (const Edge& E : H.edges()) {
            const Lift& l = sys.lifts[static_cast<std::size_t>(i)][static_cast<std::size_t>(E.id)];
            const Edge& P = G.edge(l.parent);
            const SubEdge& s = sys.subedge(i, l.parent, l.sub);
            const double L = P.length.to_double();
            const auto& a = pos[static_cast<std::size_t>(P.src)];
            const auto& b = pos[static_cast<std::size_t>(P.dst)];
            if (s.is_circle()) bow[static_cast<std::size_t>(E.id)] = (l.opposite ? 1.0 : -1.0) * 0.35 * s.length.to_double();
            for (auto [v, off] : {std::pair{E.src, s.start.to_double()}, std::pair{E.dst, (s.start + s.length).to_double()}}) {
                if (placed[static_cast<std::size_t>(v)]) continue;
                double u = off / L;
                next[static_cast<std::size_t>(v)] = {a.first + u * (b.first - a.first), a.second + u * (b.second - a.second)};
                placed[static_cast<std::size_t>(v)] = true;
            }
        }
        pos = std::move(next);
    }
    const MetricGraph& g = sys.graph(level);
    if (bow.empty()) bow.assign(static_cast<std::size_t>(g.num_edges()), 0.0);
    double ymin = -0.25;
    double ymax = 0.25;
    for (const auto& p : pos) {
        ymin = std::min(ymin, p.second - 0.25);
        ymax = std::max(ymax, p.second + 0.25);
    }
    const double W = 800.0;
    const double margin = 20.0;
    const double sx = W - 2 * margin;
    const double H = margin * 2 + sx * (ymax - ymin);
    auto X = [&](double x) { return margin + sx * x; };
    auto Y = [&](double y) { return margin + sx * (ymax - y); };
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
       << ' ' << H << "\">\n";
    os << "<g fill=\"none\" stroke=\"black\" stroke-width=\"1\">\n";
    for (const Edge& e : g.edges()) {
        const auto& a = pos[static_cast<std::size_t>(e.src)];
        const auto& b = pos[static_cast<std::size_t>(e.dst)];
        double mx = (a.first + b.first) / 2;
        double my = (a.second + b.second) / 2 + bow[static_cast<std::size_t>(e.id)];
        os << "<path id=\"e" << e.id << "\" d=\"M " << X(a.first) << ' ' << Y(a.second) << " Q " << X(mx) << ' '
           << Y(my) << ' ' << X(b.first) << ' ' << Y(b.second) << "\"/>\n";
    }
    os << "</g>\n<g fill=\"black\">\n";
    for (std::size_t v = 0; v < pos.size(); ++v)
        os << "<circle id=\"v" << v << "\" cx=\"" << X(pos[v].first) << "\" cy=\"" << Y(pos[v].second)
           << "\" r=\"2\"/>\n";
    os << "</g>\n</svg>\n";
}

}  // namespace invsys
