// SPDX-License-Identifier: MIT
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.

#include <chrono>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "invsys/banach_diamond.hpp"
#include "invsys/builders.hpp"
#include "invsys/calculus.hpp"
#include "invsys/checks.hpp"
#include "invsys/io.hpp"
#include "invsys/system.hpp"

using namespace invsys;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
    void absorb(const CheckReport& r) {
        if (!r.pass) {
            pass = false;
            detail << " [" << r.id << " failed";
            for (const auto& f : r.failures) detail << "; " << f;
            detail << "]";
        }
    }
};

std::string str(const Rational& q) { return q.get_str(); }

// Directed 0-1 paths, depth first.
void dfs_paths(const MetricGraph& g, VertexId v, VertexId target, std::vector<EdgeId>& cur,
               std::vector<std::vector<EdgeId>>& out) {
    if (v == target) {
        out.push_back(cur);
        return;
    }
    for (EdgeId e : g.out_edges(v)) {
        cur.push_back(e);
        dfs_paths(g, g.edge(e).dst, target, cur, out);
        cur.pop_back();
    }
}

const InverseSystem& laakso5() {
    static const InverseSystem l = build_laakso(5);
    return l;
}

std::vector<Dyadic> thick_targets() { return {Dyadic::pow2(3), Dyadic::pow2(4)}; }

struct Thick {
    InverseSystem sys;
    ThickBuildReport report;
    double build_seconds = 0;
};
std::unique_ptr<Thick> thick;

LemmaOptions options(int samples, int functions, std::optional<int> max_level) {
    LemmaOptions o;
    o.samples = samples;
    o.functions = functions;
    o.max_level = max_level;
    return o;
}

// ---- criteria ------------------------------------------------------------------

void pushforward(Outcome& o) {
    auto t0 = Clock::now();
    InverseSystem l = build_laakso(5);
    std::size_t discrepancies = 0;
    bool ok = true;
    for (int i = 0; i < 5; ++i) {
        PushforwardReport r = pushforward_check(l, i);
        ok = ok && r.ok;
        discrepancies += r.discrepancies.size();
    }
    double t = seconds_since(t0);
    o.require(ok && discrepancies == 0, "pushforward discrepancy");
    o.require(t < 5, "runtime");
    o.detail << "levels 0-5, discrepancies " << discrepancies << ", " << t << " s (limit 5 s)";
}

void axioms(Outcome& o) {
    const InverseSystem& l = laakso5();
    AxiomReport rep = check_axioms(l);
    o.require(rep.pass(), "axiom report");
    for (int i = 0; i < l.top(); ++i) {
        const auto& a = rep.alpha_per_level[static_cast<std::size_t>(i)];
        const auto& b = rep.beta_per_level[static_cast<std::size_t>(i)];
        o.require(a && *a == 1, "alpha at level " + std::to_string(i));
        o.require(b && *b == Dyadic::pow2(1), "beta at level " + std::to_string(i));
    }
    // independent beta: minimum circle length over every directed path
    for (int i = 0; i <= 2; ++i) {
        const MetricGraph& g = l.graph(i);
        std::vector<std::vector<EdgeId>> paths;
        std::vector<EdgeId> cur;
        dfs_paths(g, zero_vertex(l, i), one_vertex(l, i), cur, paths);
        std::optional<Dyadic> beta;
        for (const auto& p : paths) {
            Dyadic c = 0;
            for (EdgeId e : p)
                for (const SubEdge& s : l.levels[static_cast<std::size_t>(i)].subdivision[static_cast<std::size_t>(e)])
                    if (s.is_circle()) c += s.length;
            if (!beta || c < *beta) beta = c;
        }
        o.require(beta && *beta == Dyadic::pow2(1), "enumerated beta at level " + std::to_string(i));
    }
    o.detail << "alpha = " << str(*rep.achieved_alpha) << ", beta = " << rep.achieved_beta->str()
             << " at levels 0-4; enumeration agrees at levels 0-2";
}

void thick_pipeline(Outcome& o) {
    auto t0 = Clock::now();
    thick = std::make_unique<Thick>();
    LaaksoOracle host(6);
    thick->sys = build_thick_system(host, thick_targets(), 3, &thick->report);
    thick->build_seconds = seconds_since(t0);
    const InverseSystem& s = thick->sys;
    o.require(s.top() == 2, "level count");
    for (int i = 0; i < s.top(); ++i) {
        DeltaReport d = compute_deltas(s, i);
        const Rational target = thick_targets()[static_cast<std::size_t>(i)].to_mpq();
        o.require(d.delta_E <= target, "delta^E at level " + std::to_string(i));
        o.require(d.delta_d <= target, "delta^d at level " + std::to_string(i));
        o.detail << "delta_" << i << "^E = " << str(d.delta_E) << ", delta_" << i << "^d = " << str(d.delta_d)
                 << " <= " << str(target) << "; ";
    }
    AxiomReport a = check_axioms(s);
    o.require(a.pass(), "axioms");
    const Rational ap = thick->report.alpha_prime.to_mpq();
    o.require(s.constants.alpha && *s.constants.alpha == ap / 4, "alpha = alpha'/4");
    o.require(s.constants.beta && *s.constants.beta == ap / 8, "beta = alpha'/8");
    double t = seconds_since(t0);
    o.require(t < 120, "runtime");
    o.detail << "alpha' = " << str(ap) << ", alpha = " << str(*s.constants.alpha) << ", beta = " << str(*s.constants.beta)
             << ", edges";
    for (int i = 0; i <= s.top(); ++i) o.detail << " " << s.graph(i).num_edges();
    o.detail << ", " << t << " s (limit 120 s)";
}

void lipschitz(Outcome& o) {
    const InverseSystem& l = laakso5();
    Rational worst = 0;
    long long pairs = 0;
    for (int j = 1; j <= 4; ++j) {
        auto all = all_vertex_pairs(l.graph(j));
        pairs += static_cast<long long>(all.size());
        for (int i = 0; i < j; ++i) {
            LipReport r = lip_bound_check(l, i, j, all);
            o.require(r.max_ratio == 1, "Laakso ratio for pi_" + std::to_string(i) + "^" + std::to_string(j));
            worst = std::max(worst, r.max_ratio);
        }
    }
    o.detail << "Laakso max ratio " << str(worst) << " over " << pairs << " vertex pairs; ";
    if (!thick) {
        o.require(false, "thick system unavailable");
        return;
    }
    CheckReport up = check_lip_upper(thick->sys, options(10000, 10, std::nullopt));
    CheckReport lo = check_near_isometry(thick->sys, options(10000, 10, std::nullopt));
    o.absorb(up);
    o.absorb(lo);
    o.require(up.samples >= 10000 && lo.samples >= 10000, "sample count");
    o.detail << "thick: max ratio " << up.achieved.front().exact << ", non-opposite min ratio " << lo.achieved.front().exact
             << " (" << up.samples << " / " << lo.samples << " pairs)";
}

void conditional_expectation(Outcome& o) {
    if (!thick) {
        o.require(false, "thick system unavailable");
        return;
    }
    CheckReport ce = check_condexp(thick->sys, options(10000, 10, std::nullopt));
    o.absorb(ce);
    CheckReport mg = check_martingale(laakso5(), options(10000, 20, 5));
    o.absorb(mg);
    o.require(mg.samples == 20, "martingale function count");
    o.detail << "identity on 100 pairs and " << ce.achieved.back().name << " = " << ce.achieved.back().exact
             << " on the thick system; martingale identity exact for " << mg.samples
             << " functions on Laakso levels 0-5";
}

void ftc(Outcome& o) {
    const InverseSystem& l = laakso5();
    CheckReport r = check_ftc(l, options(10000, 10, 4));
    o.absorb(r);
    o.require(r.samples >= 10 * 10000 * 9 / 10, "sample count");
    // g = pi attains 1/2 on directed pairs
    std::mt19937_64 rng(7);
    Rational pi_max = 0;
    PLFunction pi = height_function(l, 4);
    for (int i = 1; i <= 4; ++i) pi_max = std::max(pi_max, ftc_check(l, i, pi, ftc_pairs(l, i, 500, rng)).max_ratio);
    o.require(pi_max == Rational(1, 2), "pi ratio");
    o.detail << "max ratio " << r.achieved.front().exact << " over " << r.samples << " evaluations; g = pi gives "
             << str(pi_max);
}

void maximal(Outcome& o) {
    const InverseSystem& l = laakso5();
    CheckReport m = check_maximal(l, options(10000, 10, 5));
    o.absorb(m);
    CheckReport c = check_covering(l, options(10000, 10, 4));
    o.absorb(c);
    o.detail << "10 functions, p in {3/2, 2, 4}";
    if (m.margin) o.detail << ", min margin " << static_cast<double>(*m.margin);
    o.detail << "; covering on " << c.samples << " candidates, " << c.achieved.front().name << " "
             << c.achieved.front().decimal << " <= 256";
}

void residual(Outcome& o) {
    if (!thick) {
        o.require(false, "thick system unavailable");
        return;
    }
    CheckReport r = check_residual(thick->sys, options(10000, 10, std::nullopt));
    o.absorb(r);
    CheckReport l = check_residual(laakso5(), options(10000, 10, 5));
    o.absorb(l);
    o.detail << "thick: ";
    for (const auto& q : r.achieved) o.detail << q.name << " " << (q.exact.empty() ? std::to_string(q.decimal) : q.exact) << "; ";
    o.detail << "Laakso: " << l.achieved.front().name << " " << l.achieved.front().exact;
}

void diamond(Outcome& o) {
    auto t0 = Clock::now();
    o.require(subdivision_exponent(Rational(1, 5), Rational(1, 4)) == 8, "N(1/5, 1/4) = 8");
    WitnessFile wf = witnesses_from_json(read_json_file(std::string(INVSYS_FIXTURES) + "/linf3_witnesses.json"));
    Rational para = 1;
    for (const auto& w : wf.entries)
        for (int j = 0; j < static_cast<int>(w.branches.size()); ++j) {
            ParallelogramReport p = certify_parallelogram(w, j, 10000);
            o.require(p.min_ratio >= w.delta_c, "parallelogram ratio");
            o.require(p.evaluated >= 10000, "parallelogram sample count");
            para = std::min(para, Rational(p.min_ratio / w.delta_c));
        }
    GeneralizedDiamondSystem d = build_generalized_diamond(wf.m, table_provider(wf.entries), wf.delta, 3);
    DAxiomReport ax = check_d_axioms(d);
    o.require(ax.pass(), "D1-D7");
    std::mt19937_64 rng(42);
    QuasiconvexityReport q = certify_quasiconvexity(d, 2, 10000, rng);
    o.require(q.min_ratio >= d.delta_i[2], "quasiconvexity ratio");
    o.require(q.evaluated >= 10000, "quasiconvexity sample count");
    double t = seconds_since(t0);
    o.require(t < 120, "runtime");
    o.detail << "N = 8; min parallelogram ratio / delta_c = " << str(para) << "; level 2 quasiconvexity min "
             << str(q.min_ratio) << " >= delta_2 = " << str(d.delta_i[2]) << " over " << q.evaluated
             << " pairs; D1-D7 pass; " << t << " s (limit 120 s)";
}

void doubling(Outcome& o) {
    CheckReport r = check_doubling(laakso5(), options(10000, 10, 4));
    o.absorb(r);
    o.detail << "levels 0-4, " << r.samples << " balls;";
    for (const auto& q : r.achieved) o.detail << " " << q.name << " " << q.exact << ";";
}

}  // namespace

int main() {
    std::cout << std::unitbuf;
    struct Criterion {
        int id;
        std::string title;
        std::function<void(Outcome&)> run;
    };
    const std::vector<Criterion> criteria{
        {1, "exact pushforward on Laakso", pushforward},
        {2, "Laakso axiom constants", axioms},
        {3, "thick system pipeline", thick_pipeline},
        {4, "Lipschitz bounds for projections", lipschitz},
        {5, "conditional expectation and martingale identity", conditional_expectation},
        {6, "fundamental theorem inequality", ftc},
        {7, "maximal inequality and covering", maximal},
        {8, "differentiability residual", residual},
        {9, "generalized diamond geometry", diamond},
        {10, "doubling", doubling},
    };
    int failed = 0;
    auto start = Clock::now();
    for (const auto& c : criteria) {
        Outcome o;
        auto t0 = Clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title << "): " << o.detail.str()
                  << " [" << seconds_since(t0) << " s]\n";
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << " in "
              << seconds_since(start) << " s\n";
    return failed == 0 ? 0 : 1;
}
