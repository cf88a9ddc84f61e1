// SPDX-License-Identifier: MIT
//
// Inverse systems X_0 <- X_1 <- ... of metric measure graphs.
//
// Level i owns the graph X_i and, when a finer level exists, the subdivision
// X_i' of every edge together with the one or two edges of X_{i+1} lying over
// each subedge. The projection X_{i+1} -> X_i' is implicit: an edge of X_{i+1}
// maps onto its subedge preserving offsets.

#ifndef INVSYS_SYSTEM_HPP
#define INVSYS_SYSTEM_HPP

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "invsys/graph.hpp"

namespace invsys {

struct SubEdge {
    Dyadic start;   // offset of the subedge inside its parent edge
    Dyadic length;
    bool terminal = false;
    EdgeId primary = -1;   // the edge of X_{i+1} identified with this subedge
    EdgeId opposite = -1;  // equals primary for an interval
    bool is_circle() const { return opposite != primary; }
};

struct Level {
    MetricGraph graph;
    // subdivision[e] lists the subedges of edge e in order; empty on the top level.
    std::vector<std::vector<SubEdge>> subdivision;
};

/// Where an edge of X_{i+1} sits over X_i.
struct Lift {
    EdgeId parent = -1;
    int sub = -1;
    bool opposite = false;
};

struct SystemConstants {
    std::optional<Rational> alpha;
    std::optional<Rational> beta;
    std::vector<Dyadic> delta_prime;       // declared targets, may be empty
    std::vector<std::optional<Rational>> delta_E;
    std::vector<std::optional<Rational>> delta_d;  // nullopt = not computed
    std::optional<Rational> L;
};

class SystemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InverseSystem {
public:
    std::vector<Level> levels;
    std::vector<std::vector<Lift>> lifts;  // lifts[i][E] for E in E(X_{i+1})
    SystemConstants constants;
    std::string name;

    int top() const { return static_cast<int>(levels.size()) - 1; }
    const MetricGraph& graph(int i) const { return levels.at(static_cast<std::size_t>(i)).graph; }
    const SubEdge& subedge(int i, EdgeId e, int k) const {
        return levels.at(static_cast<std::size_t>(i)).subdivision.at(static_cast<std::size_t>(e)).at(static_cast<std::size_t>(k));
    }

    /// Recompute lifts from the subdivision tables; throws SystemError when an
    /// edge of X_{i+1} is claimed twice or not at all.
    void rebuild_lifts();

    /// Locate the subedge of X_i' containing a point at level i. Vertices of
    /// X_i' resolve to the subedge starting there when one exists.
    int subedge_index(int i, const GraphPoint& p) const;
};

// ---- projections -----------------------------------------------------------

/// pi_i^j(p) for p at level j; the result is canonical.
GraphPoint project(const InverseSystem& sys, int i, int j, const GraphPoint& p);
/// Opposite point of p at level i+1 (p itself on intervals).
GraphPoint opposite_point(const InverseSystem& sys, int i, const GraphPoint& p);
/// Image in X_{j} of a point of X_i (levels nest: X_i is a subset of X_j).
GraphPoint embed(const InverseSystem& sys, int i, int j, const GraphPoint& p);
/// Vertex of X_{i+1} corresponding to a vertex of X_i.
VertexId lift_vertex(const InverseSystem& sys, int i, VertexId v);

/// Edges of X_i containing p (two or more only at vertices).
std::vector<EdgeId> edges_at(const MetricGraph& g, const GraphPoint& p);
/// Natural scale r_i(x) = |e_i(x)|, minimum over incident edges at vertices.
Dyadic natural_scale(const InverseSystem& sys, int i, int j, const GraphPoint& x);

// ---- measure ---------------------------------------------------------------

struct PushforwardReport {
    bool ok = true;
    int checked = 0;
    std::vector<std::string> discrepancies;
    Dyadic total_mass_lower;
    Dyadic total_mass_upper;
};
PushforwardReport pushforward_check(const InverseSystem& sys, int i);

// ---- axioms ----------------------------------------------------------------

struct AxiomResult {
    std::string id;
    bool pass = true;
    std::vector<std::string> messages;
};

struct AxiomReport {
    std::vector<AxiomResult> results;
    std::optional<Rational> achieved_alpha;  // min ht/|e'| over circle subedges
    std::optional<Dyadic> achieved_beta;     // min circle length over 0-1 paths
    std::vector<std::optional<Dyadic>> beta_per_level;
    std::vector<std::optional<Rational>> alpha_per_level;
    bool pass() const;
    const AxiomResult& get(const std::string& id) const;
};

struct AxiomOptions {
    std::optional<Rational> alpha;  // thresholds; default to the declared constants
    std::optional<Rational> beta;
};

AxiomReport check_axioms(const InverseSystem& sys, const AxiomOptions& opt = {});

/// ht(e') for a circle subedge, maximised over endpoints, midpoint and the
/// vertices of both arcs in X_{i+1}.
Dyadic circle_height(const InverseSystem& sys, int i, EdgeId e, int k);
/// Minimum over directed 0-1 paths of X_i' of the total circle length.
Dyadic min_circle_length(const InverseSystem& sys, int i);

// ---- constants -------------------------------------------------------------

struct DeltaReport {
    Dyadic Delta_E;                     // min edge length of X_i
    Dyadic max_subedge;                 // max |e'| over all subedges
    Rational delta_E;
    std::optional<Dyadic> Delta_d;      // nullopt = +infinity
    std::optional<Dyadic> max_nonterminal;
    Rational delta_d = 0;
};
DeltaReport compute_deltas(const InverseSystem& sys, int i);

// ---- lemma checks ----------------------------------------------------------

struct PointPair {
    GraphPoint x;
    GraphPoint y;
};

struct LipReport {
    Rational max_ratio = 0;
    std::optional<Rational> min_ratio_nonopposite;
    int pairs = 0;
    int skipped = 0;
    int opposite_pairs = 0;
};
/// Ratios d_i(pi x, pi y) / d_j(x, y) for pairs of points at level j.
LipReport lip_bound_check(const InverseSystem& sys, int i, int j, const std::vector<PointPair>& pairs);
/// All vertex pairs of X_j.
std::vector<PointPair> all_vertex_pairs(const MetricGraph& g);
/// Pairs with random dyadic offsets on random edges; sources are drawn from a
/// pool of `sources` points so distance fields can be shared.
std::vector<PointPair> sample_pairs(const MetricGraph& g, int count, int sources, std::mt19937_64& rng,
                                    int offset_bits = 6);
/// True when x and y lie in the open opposite edges of one circle of X_{i+1}.
bool on_opposite_open_edges(const InverseSystem& sys, int i, const GraphPoint& x, const GraphPoint& y);

struct FiberDiameterReport {
    Rational max_ratio = 0;
    int base_points = 0;
    GraphPoint argmax;
};
/// max over base points x_i of diam((pi_i^j)^{-1}(x_i)) / |e_i(x_i)|.
FiberDiameterReport fiber_diameter_check(const InverseSystem& sys, int i, int j,
                                         const std::vector<GraphPoint>& base_points);
/// Vertices of X_i' plus midpoints of every subedge.
std::vector<GraphPoint> subdivision_points(const InverseSystem& sys, int i);
/// Every point of X_j lying over p in X_i.
std::vector<GraphPoint> fiber_points(const InverseSystem& sys, int i, int j, const GraphPoint& p);

struct DeepPointReport {
    std::vector<Dyadic> terminal_measure;  // mu_{i+1} of terminal intervals of X_i'
    std::vector<Rational> bound;           // 2 delta_i^E
    Dyadic cumulative;
};
DeepPointReport deep_point_report(const InverseSystem& sys, int J);

/// mu_i of the union of circle subedges of X_i'.
Dyadic circle_set_measure(const InverseSystem& sys, int i);

struct WeightedPath {
    std::vector<EdgeId> edges;  // directed 0-1 edge path in X_i
    Dyadic probability;
};
using PathMeasure = std::vector<WeightedPath>;
PathMeasure alberti_representation(const InverseSystem& sys, int i);
/// sum_P P(P) |A cap P|
Dyadic alberti_measure(const InverseSystem& sys, int i, const PathMeasure& pm, const SegmentSet& a);

struct FiberAtom {
    GraphPoint point;
    Dyadic mass;
};
using FiberMeasure = std::vector<FiberAtom>;
FiberMeasure fiber_measure(const InverseSystem& sys, int i, const GraphPoint& p, int J);

struct SnapshotPoint {
    GraphPoint point;
    Rational normalized_distance;  // d(x, point) / r_i(x)
};
struct RescaledBall {
    Dyadic scale;                  // r_i(x)
    std::vector<SnapshotPoint> points;
    bool inside_edge_preimage = false;
    std::optional<Rational> normalized_circle_height;  // when x lies on a circle
    std::optional<Rational> normalized_opposite_distance;
};
/// Ball of radius R r_i(x) around x (a point of level j >= i) in X_j.
RescaledBall rescaled_ball(const InverseSystem& sys, int j, const GraphPoint& x, int i, const Dyadic& R);

/// Directed 0-1 paths of X_i enumerated exhaustively (small levels only).
std::vector<std::vector<EdgeId>> enumerate_paths(const MetricGraph& g, VertexId from, VertexId to,
                                                 std::size_t limit);

/// The zero and one vertices of X_i.
VertexId zero_vertex(const InverseSystem& sys, int i);
VertexId one_vertex(const InverseSystem& sys, int i);

/// X_i' materialised as a graph: vertices of X_i plus interior subdivision
/// points; edge k of the result corresponds to subedge_order[k].
struct SubdividedGraph {
    MetricGraph graph;
    std::vector<std::pair<EdgeId, int>> subedge_of;  // (parent edge, index)
};
SubdividedGraph subdivided_graph(const InverseSystem& sys, int i);

}  // namespace invsys

#endif
