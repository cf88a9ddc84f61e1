// SPDX-License-Identifier: MIT
//
// Named check suites over inverse systems and generalized diamonds. Every
// suite returns a CheckReport carrying exact achieved values, the bound they
// are compared against and the sampling metadata, so reports are reproducible
// from the seed.

#ifndef INVSYS_CHECKS_HPP
#define INVSYS_CHECKS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "invsys/banach_diamond.hpp"
#include "invsys/calculus.hpp"
#include "invsys/io.hpp"
#include "invsys/system.hpp"

namespace invsys {

/// A value reported both exactly and as a decimal.
struct Quantity {
    std::string name;
    std::string exact;   // empty when the value is only known approximately
    long double decimal = 0;
};
Quantity quantity(const std::string& name, const Rational& q);
Quantity quantity(const std::string& name, const Dyadic& d);
Quantity quantity_approx(const std::string& name, long double v);

struct CheckReport {
    std::string id;
    std::string statement;
    bool pass = true;
    std::vector<Quantity> achieved;
    std::vector<Quantity> bounds;
    std::optional<long double> margin;  // bound / achieved (or achieved / bound for lower bounds)
    long long samples = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> failures;
    std::vector<std::string> warnings;

    void fail(const std::string& msg);
    Json to_json() const;
    std::string text() const;
};

struct LemmaOptions {
    int samples = 10000;
    std::uint64_t seed = 42;
    int functions = 10;  // random functions per suite
    int grid = 64;       // maximal-function grid (power of two)
    int cells = 4;       // maximal-function sample cells per edge (power of two)
    int k = 1;           // target dimension of random functions
    Norm norm = Norm::Euclidean;
    std::vector<Rational> p_values{Rational(3, 2), Rational(2), Rational(4)};
    std::optional<int> max_level;  // restrict suites to levels <= this
};

/// Names accepted by run_lemma.
const std::vector<std::string>& lemma_names();

/// Declared target delta'_i when present, otherwise the achieved delta^E_i.
Rational delta_prime_or_achieved(const InverseSystem& sys, int i);

CheckReport check_pushforward(const InverseSystem& sys);
CheckReport check_axiom_suite(const InverseSystem& sys, const AxiomOptions& opt = {});
CheckReport check_deltas(const InverseSystem& sys);
CheckReport check_fiber_diameter(const InverseSystem& sys, const LemmaOptions& opt);
CheckReport check_lip_upper(const InverseSystem& sys, const LemmaOptions& opt);
CheckReport check_near_isometry(const InverseSystem& sys, const LemmaOptions& opt);
CheckReport check_deep_points(const InverseSystem& sys);
CheckReport check_circle_set(const InverseSystem& sys);
CheckReport check_alberti(const InverseSystem& sys, const LemmaOptions& opt);
CheckReport check_doubling(const InverseSystem& sys, const LemmaOptions& opt);
CheckReport check_condexp(const InverseSystem& sys, const LemmaOptions& opt);
CheckReport check_martingale(const InverseSystem& sys, const LemmaOptions& opt);
CheckReport check_ftc(const InverseSystem& sys, const LemmaOptions& opt);
CheckReport check_maximal(const InverseSystem& sys, const LemmaOptions& opt);
CheckReport check_covering(const InverseSystem& sys, const LemmaOptions& opt);
CheckReport check_residual(const InverseSystem& sys, const LemmaOptions& opt);

/// Random candidates [p, q] with p, q in one edge preimage of X_i.
std::vector<CoveringCandidate> random_covering_candidates(const InverseSystem& sys, int i, int count,
                                                          std::mt19937_64& rng);

CheckReport check_daxiom_suite(const GeneralizedDiamondSystem& d);
CheckReport check_parallelograms(const GeneralizedDiamondSystem& d, const LemmaOptions& opt);
CheckReport check_quasiconvexity(const GeneralizedDiamondSystem& d, const LemmaOptions& opt);
CheckReport check_distortion(const GeneralizedDiamondSystem& d, const LemmaOptions& opt);
/// Fiber displacement of pi_i^{i+1} at most 2^{-(n_i+1+N_i)}.
CheckReport check_diamond_fibers(const GeneralizedDiamondSystem& d, const LemmaOptions& opt);

/// Dispatch by name; throws std::invalid_argument for unknown names and
/// PreconditionError when a diamond-only suite is asked of a plain system.
CheckReport run_lemma(const std::string& name, const InverseSystem& sys, const GeneralizedDiamondSystem* diamond,
                      const LemmaOptions& opt);

}  // namespace invsys

#endif
