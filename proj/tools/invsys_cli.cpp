// SPDX-License-Identifier: MIT
//
// invsys-cli: build, check, analyze and export inverse systems of metric
// measure graphs.
//
// Exit status: 0 when every invoked check passes, 1 when a check fails,
// 2 on usage errors, 3 on unreadable or malformed input, 4 when the edge
// budget is exceeded, 5 on precondition failures, 6 on any other error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "invsys/banach_diamond.hpp"
#include "invsys/builders.hpp"
#include "invsys/calculus.hpp"
#include "invsys/checks.hpp"
#include "invsys/io.hpp"

using namespace invsys;

namespace {

enum Exit { kPass = 0, kCheckFailed = 1, kUsage = 2, kInput = 3, kBudget = 4, kPrecondition = 5, kOther = 6 };

struct Options {
    std::uint64_t seed = 42;
    int samples = 10000;
    int functions = 10;
    int grid = 64;
    int cells = 4;
    int max_level = -1;
    std::string norm = "euclidean";
    bool json = false;
    std::string report;
    std::string system = "system.json";
    std::string output;
};

struct Loaded {
    InverseSystem sys;
    std::optional<GeneralizedDiamondSystem> diamond;
    const InverseSystem& system() const { return diamond ? diamond->sys : sys; }
};

Loaded load_system(const std::string& path) {
    Json j = read_json_file(path);
    Loaded l;
    if (j.contains("diamond")) l.diamond = diamond_from_json(j);
    else l.sys = system_from_json(j);
    return l;
}

LemmaOptions lemma_options(const Options& o) {
    LemmaOptions lo;
    lo.samples = o.samples;
    lo.seed = o.seed;
    lo.functions = o.functions;
    lo.grid = o.grid;
    lo.cells = o.cells;
    lo.norm = parse_norm(o.norm);
    if (o.max_level >= 0) lo.max_level = o.max_level;
    return lo;
}

std::ostream& out_stream(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw FormatError("cannot open " + path + " for writing");
    return file;
}

std::string dec(const Rational& q) {
    std::ostringstream os;
    os.precision(17);
    os << q.get_d();
    return os.str();
}

std::string csv_field(std::string s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// A small table written as CSV or JSON depending on the report extension.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void write(const std::string& path) const {
        if (path.empty()) return;
        std::ofstream f(path);
        if (!f) throw FormatError("cannot open " + path + " for writing");
        if (std::filesystem::path(path).extension() == ".json") {
            Json a = Json::array();
            for (const auto& r : rows) {
                Json o = Json::object();
                for (std::size_t k = 0; k < header.size(); ++k) o[header[k]] = r[k];
                a.push_back(std::move(o));
            }
            f << a.dump(1) << '\n';
            return;
        }
        for (std::size_t k = 0; k < header.size(); ++k) f << (k ? "," : "") << header[k];
        f << '\n';
        for (const auto& r : rows) {
            for (std::size_t k = 0; k < r.size(); ++k) f << (k ? "," : "") << csv_field(r[k]);
            f << '\n';
        }
    }
};

void print_levels(const InverseSystem& sys) {
    for (int i = 0; i <= sys.top(); ++i)
        std::cout << "level " << i << ": " << sys.graph(i).num_vertices() << " vertices, " << sys.graph(i).num_edges()
                  << " edges\n";
}

std::vector<Dyadic> parse_dyadic_list(const std::string& s) {
    std::vector<Dyadic> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto b = item.find_first_not_of(" \t");
        auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        out.push_back(Dyadic::parse(item.substr(b, e - b + 1)));
    }
    return out;
}

int emit_reports(const std::vector<CheckReport>& reports, const Options& o) {
    bool pass = true;
    Json all = Json::array();
    for (const auto& r : reports) {
        pass = pass && r.pass;
        all.push_back(r.to_json());
        if (!o.json) std::cout << r.text();
    }
    if (o.json) std::cout << (reports.size() == 1 ? all[0] : all).dump(1) << '\n';
    if (!o.report.empty()) write_json_file(o.report, reports.size() == 1 ? all[0] : all);
    return pass ? kPass : kCheckFailed;
}

// ---- build -----------------------------------------------------------------------

int build_laakso_cmd(int levels, const Options& o) {
    InverseSystem sys = build_laakso(levels);
    write_json_file(o.output, system_to_json(sys));
    print_levels(sys);
    std::cout << "wrote " << o.output << '\n';
    return kPass;
}

int build_thick_cmd(const std::string& oracle, int depth, const std::string& dprime, int levels, bool thin,
                    const Options& o) {
    if (oracle != "laakso") throw PreconditionError("unknown oracle '" + oracle + "' (available: laakso)");
    std::vector<Dyadic> dp = parse_dyadic_list(dprime);
    if (dp.empty())
        for (int i = 0; i < levels; ++i) dp.push_back(Dyadic::pow2(i + 3));
    LaaksoOracle host(depth, !thin);
    ThickBuildReport rep;
    InverseSystem sys = build_thick_system(host, dp, levels, &rep);
    write_json_file(o.output, system_to_json(sys));
    print_levels(sys);
    std::cout << "measured alpha' = " << rep.alpha_prime.str() << '\n';
    if (sys.constants.alpha) std::cout << "alpha = " << sys.constants.alpha->get_str() << '\n';
    if (sys.constants.beta) std::cout << "beta = " << sys.constants.beta->get_str() << '\n';
    for (std::size_t i = 0; i < rep.circles.size(); ++i)
        std::cout << "refinement " << i << ": mesh " << rep.epsilon[i].str() << ", grid " << rep.grid[i].str() << ", "
                  << rep.circles[i] << " circle subedges\n";
    std::cout << "wrote " << o.output << '\n';
    return kPass;
}

int build_diamond_cmd(const std::string& space, const std::string& witnesses, int levels, const std::string& delta_s,
                      const std::string& lambda_s, const std::string& save_witnesses, const Options& o) {
    if (space.rfind("linf:", 0) != 0) throw PreconditionError("unsupported space '" + space + "' (expected linf:m)");
    int m = std::stoi(space.substr(5));
    if (m < 1) throw PreconditionError("space dimension must be positive");
    Rational delta = delta_s.empty() ? Rational(1, 16) : parse_rational(delta_s);
    WitnessProvider provider;
    if (!witnesses.empty()) {
        WitnessFile wf = witnesses_from_json(read_json_file(witnesses));
        if (wf.m != m) throw PreconditionError("witness file has m = " + std::to_string(wf.m) + ", space has m = " + std::to_string(m));
        if (delta_s.empty()) delta = wf.delta;
        provider = table_provider(wf.entries);
    } else {
        provider = coordinate_splitting_provider(m, lambda_s.empty() ? Rational(1) : parse_rational(lambda_s));
    }
    GeneralizedDiamondSystem d = build_generalized_diamond(m, provider, delta, levels);
    write_json_file(o.output, diamond_to_json(d));
    print_levels(d.sys);
    for (std::size_t i = 0; i < d.delta_i.size(); ++i)
        std::cout << "delta_" << i << " = " << d.delta_i[i].get_str() << " (" << dec(d.delta_i[i]) << ")\n";
    for (std::size_t i = 0; i < d.N.size(); ++i)
        std::cout << "refinement " << i << ": N = " << d.N[i] << ", n_c = " << d.n_c[i] << ", 2^" << d.m_i[i]
                  << " subedges per edge\n";
    if (!save_witnesses.empty()) {
        WitnessFile wf{m, delta, {}};
        std::set<Coord> seen;
        for (const auto& level : d.witnesses)
            for (const auto& w : level)
                if (seen.insert(w.c).second) wf.entries.push_back(w);
        write_json_file(save_witnesses, witnesses_to_json(wf));
    }
    std::cout << "wrote " << o.output << '\n';
    return kPass;
}

// ---- check -------------------------------------------------------------------------

int check_axioms_cmd(const std::string& alpha, const std::string& beta, const Options& o) {
    Loaded l = load_system(o.system);
    AxiomOptions ao;
    if (!alpha.empty()) ao.alpha = parse_rational(alpha);
    if (!beta.empty()) ao.beta = parse_rational(beta);
    return emit_reports({check_axiom_suite(l.system(), ao)}, o);
}

int check_daxioms_cmd(const Options& o) {
    Loaded l = load_system(o.system);
    if (!l.diamond) throw PreconditionError(o.system + " is not a generalized diamond system");
    return emit_reports({check_daxiom_suite(*l.diamond)}, o);
}

int check_lemma_cmd(const std::string& names_arg, const Options& o) {
    std::vector<std::string> names;
    Loaded l = load_system(o.system);
    if (names_arg == "all") {
        for (const auto& n : lemma_names()) {
            bool diamond_only = n == "daxioms" || n == "parallelogram" || n == "quasiconvexity" || n == "distortion" ||
                                n == "diamond-fibers";
            if (!diamond_only || l.diamond) names.push_back(n);
        }
    } else {
        std::stringstream ss(names_arg);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) names.push_back(item);
    }
    for (const auto& n : names)
        if (std::find(lemma_names().begin(), lemma_names().end(), n) == lemma_names().end())
            throw CLI::ValidationError("--name", "unknown check '" + n + "'");
    LemmaOptions lo = lemma_options(o);
    const GeneralizedDiamondSystem* d = l.diamond ? &*l.diamond : nullptr;
    std::vector<std::future<CheckReport>> jobs;
    for (const auto& n : names)
        jobs.push_back(std::async(std::launch::async, [&, n] { return run_lemma(n, l.system(), d, lo); }));
    std::vector<CheckReport> reports;
    for (auto& j : jobs) reports.push_back(j.get());
    return emit_reports(reports, o);
}

// ---- analyze -----------------------------------------------------------------------

struct AnalyzeInput {
    Loaded loaded;
    PLFunction f;
};

AnalyzeInput load_function(const std::string& path, const Options& o) {
    AnalyzeInput in{load_system(o.system), {}};
    Json j = read_json_file(path);
    int level = j.value("level", in.loaded.system().top());
    if (level < 0 || level > in.loaded.system().top())
        throw PreconditionError("function level " + std::to_string(level) + " is not a level of the system");
    in.f = function_from_json(in.loaded.system().graph(level), j);
    return in;
}

int analyze_derivative(const std::string& fn, const Options& o) {
    AnalyzeInput in = load_function(fn, o);
    const InverseSystem& sys = in.loaded.system();
    Norm n = parse_norm(o.norm);
    MartingaleReport m = derivative_martingale(sys, in.f, in.f.level, n);
    Table t{{"level", "edge", "t0", "t1", "component", "exact", "decimal"}, {}};
    bool pass = true;
    for (std::size_t i = 0; i < m.derivatives.size(); ++i) {
        const StepFunction& d = m.derivatives[i];
        for (std::size_t e = 0; e < d.edges.size(); ++e)
            for (const auto& piece : d.edges[e])
                for (std::size_t c = 0; c < piece.v.size(); ++c)
                    t.rows.push_back({std::to_string(i), std::to_string(e), piece.t0.get_str(), piece.t1.get_str(),
                                      std::to_string(c), piece.v[c].get_str(), dec(piece.v[c])});
        std::cout << "level " << i << ": sup |h'| = " << m.sup_norms[i].get_str() << " (" << dec(m.sup_norms[i]) << ")";
        if (i < m.identity_holds.size()) {
            std::cout << ", E(h_{i+1}') = h_i' " << (m.identity_holds[i] ? "holds" : "FAILS");
            pass = pass && m.identity_holds[i];
        }
        if (i < m.l1_increments.size())
            std::cout << ", L1 increment " << m.l1_increments[i].get_str() << " (" << dec(m.l1_increments[i]) << ")";
        std::cout << '\n';
    }
    if (!m.exact) std::cout << "warning: inexact norm, sup norms are approximations\n";
    t.write(o.report);
    return pass ? kPass : kCheckFailed;
}

int analyze_ftc(const std::string& fn, const Options& o) {
    AnalyzeInput in = load_function(fn, o);
    const InverseSystem& sys = in.loaded.system();
    const int J = in.f.level;
    Table t{{"level", "pairs", "max_ratio_exact", "max_ratio_decimal", "violations"}, {}};
    if (J == 0 || o.samples <= 0) {
        std::cout << "warning: no admissible pairs drawn; vacuous pass\n";
        t.write(o.report);
        return kPass;
    }
    std::mt19937_64 rng(o.seed);
    int violations = 0;
    for (int i = 1; i <= J; ++i) {
        auto pairs = ftc_pairs(sys, i, std::max(1, o.samples / J), rng);
        FtcReport r = ftc_check(sys, i, in.f, pairs, parse_norm(o.norm));
        violations += r.violations;
        t.rows.push_back({std::to_string(i), std::to_string(r.evaluated), r.max_ratio.get_str(), dec(r.max_ratio),
                          std::to_string(r.violations)});
        std::cout << "level " << i << ": " << r.evaluated << " pairs, max ratio " << r.max_ratio.get_str() << " ("
                  << dec(r.max_ratio) << "), " << r.violations << " violations\n";
        for (const auto& w : r.warnings) std::cout << "warning: " << w << '\n';
    }
    t.write(o.report);
    return violations == 0 ? kPass : kCheckFailed;
}

int analyze_maximal(const std::string& fn, const std::string& p_list, const Options& o) {
    AnalyzeInput in = load_function(fn, o);
    const InverseSystem& sys = in.loaded.system();
    std::vector<Rational> ps;
    std::stringstream ss(p_list);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) ps.push_back(parse_rational(item));
    auto samples = maximal_samples(sys, in.f, o.cells, o.grid);
    Table t{{"p", "weak_norm_exact", "weak_norm_decimal", "lp_norm", "bound", "margin", "samples", "status"}, {}};
    bool pass = true;
    for (const auto& p : ps) {
        WeakReport w = weak_inequality_report(sys.graph(in.f.level), in.f, p, samples);
        pass = pass && w.pass;
        std::ostringstream lp, b, mg;
        lp.precision(17);
        b.precision(17);
        mg.precision(17);
        lp << static_cast<double>(w.lp_norm);
        b << static_cast<double>(w.bound);
        mg << static_cast<double>(w.margin);
        t.rows.push_back({p.get_str(), w.weak_norm.get_str(), dec(w.weak_norm), lp.str(), b.str(), mg.str(),
                          std::to_string(w.samples), w.pass ? "pass" : "fail"});
        std::cout << "p = " << p.get_str() << ": weak norm " << w.weak_norm.get_str() << " (" << dec(w.weak_norm)
                  << "), bound " << b.str() << ", margin " << mg.str() << (w.pass ? "" : "  FAIL") << '\n';
    }
    t.write(o.report);
    return pass ? kPass : kCheckFailed;
}

int analyze_residual(const std::string& fn, int points, const std::string& radius, int frozen, const Options& o) {
    AnalyzeInput in = load_function(fn, o);
    const InverseSystem& sys = in.loaded.system();
    const int J = in.f.level;
    const MetricGraph& g = sys.graph(J);
    Dyadic R = radius.empty() ? Dyadic(1) : Dyadic::parse(radius);
    std::mt19937_64 rng(o.seed);
    std::uniform_int_distribution<EdgeId> pe(0, g.num_edges() - 1);
    std::uniform_int_distribution<long long> po(1, 255);
    Table t{{"point", "edge", "offset", "level", "scale", "residual_exact", "residual_decimal", "in_edge_preimage",
             "in_cell"},
            {}};
    bool pass = true;
    int found = 0;
    for (int attempt = 0; found < points && attempt < 100 * std::max(points, 1); ++attempt) {
        GraphPoint x{pe(rng), Dyadic()};
        x.offset = g.edge(x.edge).length * Dyadic::from_parts(po(rng), 8);
        if (!is_deep(sys, J, x, 0)) continue;
        ResidualReport r = differentiability_residual(sys, in.f, x, R, 0, J, frozen, parse_norm(o.norm));
        std::cout << "point " << found << " (edge " << x.edge << ", offset " << x.offset.str() << "):";
        for (std::size_t k = 0; k < r.levels.size(); ++k) {
            t.rows.push_back({std::to_string(found), std::to_string(x.edge), x.offset.str(), std::to_string(r.levels[k]),
                              r.scale[k].str(), r.residual[k].get_str(), dec(r.residual[k]),
                              r.in_edge_preimage[k] ? "1" : "0", r.in_cell[k] ? "1" : "0"});
            std::cout << ' ' << dec(r.residual[k]);
            if (frozen >= 0 && r.levels[k] > frozen && r.in_cell[k] && r.residual[k] != 0) pass = false;
        }
        std::cout << '\n';
        for (const auto& w : r.warnings) std::cout << "warning: " << w << '\n';
        ++found;
    }
    if (found < points) throw PreconditionError("found only " + std::to_string(found) + " deep points");
    t.write(o.report);
    return pass ? kPass : kCheckFailed;
}

// ---- export ------------------------------------------------------------------------

int export_cmd(const std::string& format, int level, const std::string& table, const Options& o) {
    Loaded l = load_system(o.system);
    const InverseSystem& sys = l.system();
    int lv = level < 0 ? sys.top() : level;
    if (lv > sys.top()) throw PreconditionError("level " + std::to_string(lv) + " is not built");
    std::ofstream file;
    if (format == "dot") {
        export_dot(out_stream(o.output, file), sys, lv);
    } else if (format == "svg") {
        export_svg(out_stream(o.output, file), sys, lv);
    } else if (format == "json") {
        std::ostream& os = out_stream(o.output, file);
        os << (l.diamond ? diamond_to_json(*l.diamond) : system_to_json(sys)).dump(1) << '\n';
    } else if (format == "csv") {
        if (table == "edges") {
            export_edges_csv(out_stream(o.output, file), sys);
        } else if (table == "constants") {
            export_constants_csv(out_stream(o.output, file), sys);
        } else if (o.output.empty() || o.output == "-") {
            export_edges_csv(std::cout, sys);
            std::cout << '\n';
            export_constants_csv(std::cout, sys);
        } else {
            std::filesystem::path p(o.output);
            std::string stem = (p.parent_path() / p.stem()).string();
            std::ofstream e(stem + "_edges.csv"), c(stem + "_constants.csv");
            if (!e || !c) throw FormatError("cannot write " + stem + "_*.csv");
            export_edges_csv(e, sys);
            export_constants_csv(c, sys);
        }
    } else {
        throw CLI::ValidationError("--format", "unknown export format '" + format + "'");
    }
    return kPass;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Build, check, analyze and export inverse systems of metric measure graphs"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--seed", o.seed, "Seed for every sampled quantity")->capture_default_str();
    app.add_option("--samples", o.samples, "Sample budget per check")->capture_default_str();
    app.add_option("--functions", o.functions, "Random functions per check")->capture_default_str();
    app.add_option("--grid", o.grid, "Radius grid of the maximal function (power of two)")->capture_default_str();
    app.add_option("--cells", o.cells, "Sample cells per edge for the maximal function")->capture_default_str();
    app.add_option("--max-level", o.max_level, "Restrict checks to levels <= this");
    app.add_option("--norm", o.norm, "Target norm: euclidean, sup or l1")->capture_default_str();
    app.add_flag("--json", o.json, "Print check reports as JSON");

    // build
    std::string build_output = "system.json";
    auto* build = app.add_subcommand("build", "Build a system and write it as JSON");
    build->require_subcommand(1);
    int levels = 2;
    auto* b_laakso = build->add_subcommand("laakso", "Laakso system X_0..X_N");
    b_laakso->add_option("--levels", levels, "N")->capture_default_str();
    b_laakso->add_option("-o,--output", build_output, "Output path")->capture_default_str();

    std::string oracle = "laakso", dprime;
    int depth = 6;
    bool thin = false;
    auto* b_thick = build->add_subcommand("thick", "Thick inverse system inside a host space");
    b_thick->add_option("--oracle", oracle, "Host oracle")->capture_default_str();
    b_thick->add_option("--depth", depth, "Host tree depth resolved below each edge")->capture_default_str();
    b_thick->add_option("--delta-prime", dprime, "Comma-separated targets delta'_i (default 2^{-i-3})");
    b_thick->add_option("--levels", levels, "Number of levels")->capture_default_str();
    b_thick->add_flag("--thin", thin, "Use the one-member geodesic family");
    b_thick->add_option("-o,--output", build_output, "Output path")->capture_default_str();

    std::string space = "linf:3", witnesses, delta_s, lambda_s, save_witnesses;
    auto* b_diamond = build->add_subcommand("diamond", "Generalized diamond in a normed space");
    b_diamond->add_option("--space", space, "Target space, linf:m")->capture_default_str();
    b_diamond->add_option("--witnesses", witnesses, "Witness table JSON (default: coordinate splitting)");
    b_diamond->add_option("--levels", levels, "Number of levels")->capture_default_str();
    b_diamond->add_option("--delta", delta_s, "Target quasiconvexity constant delta");
    b_diamond->add_option("--lambda", lambda_s, "Step of the coordinate-splitting witnesses");
    b_diamond->add_option("--save-witnesses", save_witnesses, "Write the witnesses used to this path");
    b_diamond->add_option("-o,--output", build_output, "Output path")->capture_default_str();

    // check
    auto* check = app.add_subcommand("check", "Run checks; exit 0 iff all pass");
    check->require_subcommand(1);
    check->add_option("--system", o.system, "System JSON")->capture_default_str();
    check->add_option("--report", o.report, "Write the JSON report here");
    std::string alpha, beta;
    auto* c_axioms = check->add_subcommand("axioms", "Axioms A1-A6");
    c_axioms->add_option("--alpha", alpha, "Thickness constant to test (default: declared)");
    c_axioms->add_option("--beta", beta, "Circle-set constant to test (default: declared)");
    auto* c_daxioms = check->add_subcommand("daxioms", "Generalized diamond axioms D1-D7, P1, P2");
    std::string lemma, lemma_pos;
    auto* c_lemma = check->add_subcommand("lemma", "Named check suite");
    c_lemma->add_option("id", lemma_pos, "Check name, comma-separated list or 'all'");
    c_lemma->add_option("--name", lemma, "Same as the positional id");
    c_lemma->add_option("--samples", o.samples, "Sample budget");
    c_lemma->add_option("--seed", o.seed, "Seed");
    c_lemma->footer("Checks: " + [] {
        std::string s;
        for (const auto& n : lemma_names()) s += (s.empty() ? "" : ", ") + n;
        return s;
    }());

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Analyze a PL function on a system");
    analyze->require_subcommand(1);
    std::string function;
    analyze->add_option("--system", o.system, "System JSON")->capture_default_str();
    analyze->add_option("--function", function, "Function JSON")->required();
    analyze->add_option("--report", o.report, "Write a CSV (or .json) report here");
    analyze->add_option("--seed", o.seed, "Seed");
    analyze->add_option("--grid", o.grid, "Radius grid of the maximal function");
    analyze->add_option("--samples", o.samples, "Sample budget");
    auto* a_derivative = analyze->add_subcommand("derivative", "Derivative martingale h_i' = E_i(f)'");
    auto* a_ftc = analyze->add_subcommand("ftc", "FTC inequality on admissible pairs");
    std::string p_list = "3/2,2,4";
    auto* a_maximal = analyze->add_subcommand("maximal", "Weak-type maximal inequality");
    a_maximal->add_option("--p", p_list, "Comma-separated exponents")->capture_default_str();
    int points = 10, frozen = -1;
    std::string radius;
    auto* a_residual = analyze->add_subcommand("residual", "Differentiability residual at random deep points");
    a_residual->add_option("--points", points, "Number of deep points")->capture_default_str();
    a_residual->add_option("--radius", radius, "Ball radius factor R (default 1)");
    a_residual->add_option("--frozen", frozen, "Level at which the function is frozen");

    // export
    auto* exp = app.add_subcommand("export", "Export a system");
    std::string format, format_pos;
    int level = -1;
    std::string table = "all";
    exp->add_option("kind", format_pos, "Export format: dot, svg, csv or json");
    exp->add_option("--format", format, "Same as the positional format");
    exp->add_option("--system", o.system, "System JSON")->capture_default_str();
    exp->add_option("--level", level, "Level for dot and svg (default: top)");
    exp->add_option("--table", table, "CSV table: edges, constants or all")->capture_default_str();
    exp->add_option("-o,--output", o.output, "Output path (default: stdout)");

    for (auto* sub : {build, check, analyze}) {
        sub->fallthrough();
        for (auto* leaf : sub->get_subcommands({})) leaf->fallthrough();
    }
    exp->fallthrough();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kPass : kUsage;
    }

    if (*build) o.output = build_output;
    try {
        if (*b_laakso) return build_laakso_cmd(levels, o);
        if (*b_thick) return build_thick_cmd(oracle, depth, dprime, levels, thin, o);
        if (*b_diamond) return build_diamond_cmd(space, witnesses, levels, delta_s, lambda_s, save_witnesses, o);
        if (*c_axioms) return check_axioms_cmd(alpha, beta, o);
        if (*c_daxioms) return check_daxioms_cmd(o);
        if (*c_lemma) {
            if (lemma.empty()) lemma = lemma_pos;
            if (lemma.empty()) throw CLI::ValidationError("lemma", "a check name is required");
            return check_lemma_cmd(lemma, o);
        }
        if (*a_derivative) return analyze_derivative(function, o);
        if (*a_ftc) return analyze_ftc(function, o);
        if (*a_maximal) return analyze_maximal(function, p_list, o);
        if (*a_residual) return analyze_residual(function, points, radius, frozen, o);
        if (*exp) {
            if (format.empty()) format = format_pos;
            if (format.empty()) throw CLI::ValidationError("--format", "an export format is required");
            return export_cmd(format, level, table, o);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error (usage): " << e.what() << '\n';
        return kUsage;
    } catch (const BudgetError& e) {
        std::cerr << "error (budget): " << e.what() << '\n';
        return kBudget;
    } catch (const PreconditionError& e) {
        std::cerr << "error (precondition): " << e.what() << '\n';
        return kPrecondition;
    } catch (const WitnessError& e) {
        std::cerr << "error (precondition): " << e.what() << '\n';
        return kPrecondition;
    } catch (const FormatError& e) {
        std::cerr << "error (parse): " << e.what() << '\n';
        return kInput;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error (parse): " << e.what() << '\n';
        return kInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error (parse): " << e.what() << '\n';
        return kInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kOther;
    }
    return kUsage;
}
