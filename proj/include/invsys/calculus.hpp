// SPDX-License-Identifier: MIT
//
// Functions on the levels of an inverse system: piecewise-linear maps into
// R^k, conditional expectation, derivatives, the fundamental-theorem
// inequality, the maximal operator, the covering selection and the
// differentiability residual.

#ifndef INVSYS_CALCULUS_HPP
#define INVSYS_CALCULUS_HPP

#include <random>
#include <string>
#include <vector>

#include "invsys/system.hpp"

namespace invsys {

using Vec = std::vector<Rational>;

enum class Norm { Euclidean, Sup, L1 };

/// Norm of a vector. Exact except for the Euclidean norm in dimension > 1,
/// which goes through a long double square root.
Rational norm(const Vec& v, Norm n);
bool norm_is_exact(int k, Norm n);
Norm parse_norm(const std::string& s);

struct Knot {
    Rational t;  // offset along the edge (rational so sign changes can be knots)
    Vec v;
};

/// Continuous map X_i -> R^k, affine between consecutive knots of each edge.
/// Every edge carries knots at offset 0 and at its length.
struct PLFunction {
    int level = 0;
    int k = 1;
    std::vector<std::vector<Knot>> edges;

    static PLFunction from_vertex_values(const MetricGraph& g, int level, const std::vector<Vec>& values);
    Vec eval(const MetricGraph& g, const GraphPoint& p) const;
    Vec eval_on_edge(EdgeId e, const Rational& t) const;
    /// Throws std::invalid_argument when knots are unsorted, miss an endpoint,
    /// or disagree at a shared vertex.
    void validate(const MetricGraph& g) const;
    std::vector<Vec> vertex_values(const MetricGraph& g) const;
};

struct StepPiece {
    Rational t0;
    Rational t1;
    Vec v;
};

/// Function constant on consecutive pieces of each edge (a.e. defined).
struct StepFunction {
    int level = 0;
    int k = 1;
    std::vector<std::vector<StepPiece>> edges;
    Vec eval_on_edge(EdgeId e, const Rational& t) const;  // right-continuous; left value at the edge end
};

// ---- construction ------------------------------------------------------------

/// pi_0 restricted to X_i.
PLFunction height_function(const InverseSystem& sys, int i);
/// Random vertex values with entries in [-1, 1] on the grid 2^-bits.
PLFunction random_pl(const MetricGraph& g, int level, int k, std::mt19937_64& rng, int bits = 4);
/// h o pi_i^j as a function on X_j.
PLFunction pullback(const InverseSystem& sys, int j, const PLFunction& h);
StepFunction pullback(const InverseSystem& sys, int j, const StepFunction& h);
/// |h| for scalar h, with knots inserted at sign changes.
PLFunction pl_abs(const PLFunction& h);

// ---- conditional expectation -------------------------------------------------

/// (h(p) + h(p^op)) / 2 for h on X_{i+1}; the result lives on X_i.
PLFunction cond_exp_step(const InverseSystem& sys, int i, const PLFunction& h);
StepFunction cond_exp_step(const InverseSystem& sys, int i, const StepFunction& h);
/// Composition of steps from f's level down to i.
PLFunction cond_exp_from_top(const InverseSystem& sys, int i, const PLFunction& f);
StepFunction cond_exp_from_top(const InverseSystem& sys, int i, const StepFunction& f);

// ---- integration ---------------------------------------------------------------

/// Integral of h over A with respect to mu (componentwise).
Vec integrate(const MetricGraph& g, const PLFunction& h, const SegmentSet& a);
Vec integrate(const MetricGraph& g, const StepFunction& h, const SegmentSet& a);
/// Integral of |h|^p d mu for scalar h; exact for integer p, long double otherwise.
long double integrate_power(const MetricGraph& g, const PLFunction& h, const Rational& p);
Rational integrate_power_exact(const MetricGraph& g, const PLFunction& h, unsigned p);
/// Preimage of a segment set of X_i in X_j.
SegmentSet preimage(const InverseSystem& sys, int i, int j, const SegmentSet& a);

// ---- derivatives ----------------------------------------------------------------

/// Slope along the direction of each edge, piece by piece.
StepFunction derivative_level(const PLFunction& h);
/// x -> ||h(x)|| as a scalar step function.
StepFunction norm_of(const StepFunction& h, Norm n);
Rational sup_norm(const StepFunction& h, Norm n);
/// Lipschitz constant for the path metric: max slope norm over all pieces.
Rational lipschitz_constant(const PLFunction& h, Norm n);
/// Equality as a.e. functions (compared on the common refinement).
bool step_equal(const StepFunction& a, const StepFunction& b);
/// int || a - b || d mu.
Rational l1_distance(const MetricGraph& g, const StepFunction& a, const StepFunction& b, Norm n);

struct MartingaleReport {
    std::vector<StepFunction> derivatives;   // h_i' for i = 0..i_max
    std::vector<bool> identity_holds;        // E_i^{i+1}(h_{i+1}') == h_i'
    std::vector<Rational> l1_increments;     // || h_{i+1}' - h_i' o pi ||_{L^1(mu_{i+1})}
    std::vector<Rational> sup_norms;         // || h_i' ||_inf
    bool exact = true;
};
MartingaleReport derivative_martingale(const InverseSystem& sys, const PLFunction& f, int i_max,
                                       Norm n = Norm::Euclidean);

// ---- fundamental theorem ------------------------------------------------------

struct FtcReport {
    Rational max_ratio = 0;  // LHS / RHS, 0 when both vanish
    int evaluated = 0;
    int skipped = 0;
    int violations = 0;      // ratio > 1, or LHS > 0 = RHS
    bool exact = true;
    std::vector<std::string> warnings;
};
/// Pairs of points of X_i lying over one edge of X_{i-1} (i >= 1).
std::vector<PointPair> ftc_pairs(const InverseSystem& sys, int i, int count, std::mt19937_64& rng,
                                 int offset_bits = 6);
/// True when x and y both lie in the preimage of one edge of X_{i-1}.
bool in_one_edge_preimage(const InverseSystem& sys, int i, const GraphPoint& x, const GraphPoint& y);
FtcReport ftc_check(const InverseSystem& sys, int i, const PLFunction& g, const std::vector<PointPair>& pairs,
                    Norm n = Norm::Euclidean);

// ---- maximal operator --------------------------------------------------------

/// u_i = E_i^J(u) for i = 0..i_max, shared by many evaluations of M(u).
struct MaximalContext {
    std::vector<PLFunction> levels;
    /// prefix[i][e][c]: integral of u_i along edge e from 0 to knot c (unweighted).
    std::vector<std::vector<std::vector<Rational>>> prefix;
    /// Integral of u_i over a segment set of X_i with respect to mu_i.
    Rational integral(const MetricGraph& g, int i, const SegmentSet& a) const;
};
MaximalContext maximal_context(const InverseSystem& sys, const PLFunction& u, int i_max);

struct MaximalEntry {
    Rational value = 0;              // M(u)(x), max over levels
    Rational doob = 0;               // max over levels of u_i(x_i)
    std::vector<Rational> per_level; // M_i(u_i)(x_i)
};
/// M(u)(x) for a nonnegative scalar u on X_J and a non-vertex x of X_J. The
/// inner sup runs over the vertices of the edge preimage and `grid` equally
/// spaced points on each of its edges (grid a power of two).
MaximalEntry maximal_function(const InverseSystem& sys, const PLFunction& u, const GraphPoint& x, int i_max,
                              int grid);
MaximalEntry maximal_function(const InverseSystem& sys, const MaximalContext& ctx, int J, const GraphPoint& x,
                              int grid);

struct WeakReport {
    Rational weak_norm = 0;   // sampled sup_t t mu{M > t}
    long double lp_norm = 0;  // ||h||_p
    long double bound = 0;    // 256 p / (p - 1) ||h||_p
    long double margin = 0;   // bound / weak_norm
    bool pass = false;
    std::size_t samples = 0;
};
/// Stratified sample: `cells` equal cells per edge of X_J, evaluated at cell
/// midpoints, each weighted by its measure.
WeakReport weak_inequality_check(const InverseSystem& sys, const PLFunction& h, const Rational& p, int cells,
                                 int grid);
/// The samples (M(|h|)(x), weight) behind the check; they do not depend on p.
std::vector<std::pair<Rational, Dyadic>> maximal_samples(const InverseSystem& sys, const PLFunction& h, int cells,
                                                         int grid);
WeakReport weak_inequality_report(const MetricGraph& g, const PLFunction& h, const Rational& p,
                                  std::vector<std::pair<Rational, Dyadic>> samples);

/// Weak norm of a scalar function from weighted samples: max over sample
/// values v of v * (weight of samples >= v).
Rational weak_norm(std::vector<std::pair<Rational, Dyadic>> samples);

struct CoveringCandidate {
    int level = 1;
    GraphPoint p;
    GraphPoint q;
};
struct CoveringResult {
    std::vector<int> selected;
    std::vector<SegmentSet> paths;         // [p, q] for every candidate
    std::vector<SegmentSet> enlargements;  // B_{5r}(p) for every selected candidate
    bool disjoint = true;
    bool covers = true;
    Rational max_ratio = 0;                // mu(B_{5r}(p)) / mu([p, q])
};
/// Atom grouping followed by greedy 5r-Vitali selection inside each atom. All
/// candidates must lie on one level i >= 1, each path inside the preimage of
/// one edge of X_{i-1}.
CoveringResult covering_select(const InverseSystem& sys, const std::vector<CoveringCandidate>& cands);

// ---- differentiability residual -------------------------------------------------

/// True when x_{i+1} avoids the terminal subedges of X_i' for i0 <= i < J.
bool is_deep(const InverseSystem& sys, int J, const GraphPoint& x, int i0);

struct ResidualReport {
    std::vector<int> levels;
    std::vector<Rational> residual;
    std::vector<Dyadic> scale;               // r_i(x)
    std::vector<bool> in_edge_preimage;      // ball inside (pi_{i-1}^J)^{-1}(e_{i-1}(x))
    std::vector<bool> in_cell;               // ball inside (pi_m^J)^{-1}(e_m(x)) for the frozen level m
    int derivative_level = 0;
    bool deep = true;
    bool exact = true;
    std::vector<std::string> warnings;
};
/// sup over y in B_{R r_i(x)}(x) of ||f(y) - f(x) - f'(x)(pi(y) - pi(x))|| / r_i(x)
/// for f on X_J and non-vertex x in X_J. The sup is exact: on every ball piece
/// the expression is the norm of an affine map between knots.
ResidualReport differentiability_residual(const InverseSystem& sys, const PLFunction& f, const GraphPoint& x,
                                          const Dyadic& R, int i0, int i1, int frozen_level = -1,
                                          Norm n = Norm::Euclidean);

}  // namespace invsys

#endif
