// SPDX-License-Identifier: MIT
//
// Generalized diamond systems inside the sup-norm space l_inf^m (+)_inf R:
// convex witnesses, the model graph Gamma(c), quasiconvexity certificates and
// the structural axioms D1-D7.

#ifndef INVSYS_BANACH_DIAMOND_HPP
#define INVSYS_BANACH_DIAMOND_HPP

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "invsys/system.hpp"

namespace invsys {

using Coord = std::vector<Rational>;

/// Point (b, t) of l_inf^m (+)_inf R.
struct NormedPoint {
    Coord b;
    Rational t;
    Rational norm() const;
    NormedPoint operator+(const NormedPoint& o) const;
    NormedPoint operator-(const NormedPoint& o) const;
    NormedPoint scaled(const Rational& s) const;
    friend bool operator==(const NormedPoint&, const NormedPoint&) = default;
};

Rational sup_norm(const Coord& c);
Rational distance(const NormedPoint& x, const NormedPoint& y);

class WitnessError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// c = 2^{-n_c} sum_j c_j with ||c - c_j|| >= 4 delta_c.
struct ConvexWitness {
    Coord c;
    std::vector<Coord> branches;
    int n_c = 1;
    Rational delta_c;
    /// Throws WitnessError naming the first failing inequality.
    void validate() const;
    /// Same witness with every branch repeated so that n_c becomes n.
    ConvexWitness padded(int n) const;
};

using WitnessProvider = std::function<ConvexWitness(const Coord& c)>;

/// Splits c along its first zero coordinate k: branches c + lambda e_k and
/// c - lambda e_k, delta_c = lambda / 4.
WitnessProvider coordinate_splitting_provider(int m, const Rational& lambda);
/// Exact lookup in a fixed table; throws WitnessError for unknown directions.
WitnessProvider table_provider(std::vector<ConvexWitness> table);

// ---- model graph -----------------------------------------------------------------

struct ModelGraph {
    MetricGraph graph;
    std::vector<NormedPoint> coords;   // per vertex
    std::vector<EdgeId> gamma0;        // edges of gamma_0 in order
    std::vector<EdgeId> gamma1;
    std::vector<int> subedge;          // pi_c: edge -> index of the subedge of [origin, origin + scale (c,1)]'
    std::vector<bool> on_gamma1;       // per edge
    Dyadic subedge_length;
    VertexId start = 0;                // origin
    VertexId end = 0;                  // origin + scale (c, 1)
};

/// scale * Gamma(c) + origin.
ModelGraph build_model_graph(const ConvexWitness& w, const Dyadic& scale, const NormedPoint& origin);

struct ParallelogramReport {
    Rational min_ratio;
    int evaluated = 0;
    int skipped = 0;  // x = y
    std::pair<int, int> argmin_edges{0, 0};
};
/// Normalized parallelogram (0,0), (c,1), (c_j,1), (c+c_j,2); e1 = [(0,0),(c,1)],
/// e2 = [(0,0),(c_j,1)], e3 = [(c,1),(c+c_j,2)], e4 = [(c_j,1),(c+c_j,2)].
/// Points are parameterized by s in [0,1] from the lower endpoint.
NormedPoint parallelogram_point(const ConvexWitness& w, int j, int edge, const Rational& s);
Rational parallelogram_intrinsic(int edge_x, const Rational& sx, int edge_y, const Rational& sy);
/// min ||x - y|| / d_in(x, y) over a grid of roughly `samples` pairs spread over
/// all edge pairs.
ParallelogramReport certify_parallelogram(const ConvexWitness& w, int j, int samples);

// ---- generalized diamond ------------------------------------------------------

/// Minimal N with 2^{-N} <= (delta_i - delta') / 4 where delta' = (delta + delta_i) / 2.
int subdivision_exponent(const Rational& delta, const Rational& delta_i);

struct GeneralizedDiamondSystem {
    InverseSystem sys;
    int m = 1;
    Rational delta;
    std::vector<std::vector<NormedPoint>> coords;  // per level, per vertex
    std::vector<int> n;                             // edges of X_i have length 2^{-n_i}
    std::vector<Rational> delta_i;                  // quasiconvexity constants
    std::vector<int> N;                             // per refinement
    std::vector<int> n_c;                           // common witness exponent per refinement
    std::vector<int> m_i;                           // each edge of X_i splits into 2^{m_i} subedges
    std::vector<Rational> delta_prime;
    std::vector<std::vector<int>> block;            // per level >= 1: Gamma block of each edge, -1 on terminal parts
    std::vector<std::vector<ConvexWitness>> witnesses;  // distinct witnesses used per refinement

    NormedPoint point(int i, const GraphPoint& p) const;
};

/// X_0, ..., X_{levels-1}. delta_0 is the quasiconvexity constant assigned to X_0.
GeneralizedDiamondSystem build_generalized_diamond(int m, const WitnessProvider& provider, const Rational& delta,
                                                   int levels, const Rational& delta_0 = Rational(1, 2));

struct QuasiconvexityReport {
    Rational min_ratio;
    int evaluated = 0;
    int skipped = 0;
    std::map<std::string, Rational> stratum_min;  // per case of the quasiconvexity argument
    std::map<std::string, int> stratum_count;
    GraphPoint argmin_x;
    GraphPoint argmin_y;
};
/// min ||x - y|| / d_i(x, y) over stratified random pairs at level i.
QuasiconvexityReport certify_quasiconvexity(const GeneralizedDiamondSystem& d, int i, int samples,
                                            std::mt19937_64& rng);

struct DistortionReport {
    Rational max_ratio = 0;  // d_i(u, v) / ||u - v||
    long long pairs = 0;
    bool sampled = false;
};
DistortionReport vertex_distortion(const GeneralizedDiamondSystem& d, int i, long long pair_budget,
                                   std::mt19937_64& rng);

struct DAxiomReport {
    std::vector<AxiomResult> results;  // D1..D7, P1, P2, measure, quasiconvexity constants
    Rational d7_worst = 0;             // worst distance to a degree-4 vertex, in edge lengths
    bool pass() const;
    const AxiomResult& get(const std::string& id) const;
};
DAxiomReport check_d_axioms(const GeneralizedDiamondSystem& d);

}  // namespace invsys

#endif
