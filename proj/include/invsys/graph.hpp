// SPDX-License-Identifier: MIT
//
// Directed metric measure graphs with exact dyadic lengths.
//
// A graph is a list of directed edges; each edge carries a length and a
// measure density (weight per unit length). Points are (edge, offset) pairs.
// Distances are path-metric distances computed by Dijkstra over the vertex
// set augmented with the query points.

#ifndef INVSYS_GRAPH_HPP
#define INVSYS_GRAPH_HPP

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "invsys/dyadic.hpp"

namespace invsys {

using VertexId = int;
using EdgeId = int;

struct Edge {
    EdgeId id = -1;
    VertexId src = -1;
    VertexId dst = -1;
    Dyadic length;
    Dyadic weight;  // measure per unit length
};

class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MetricGraph {
public:
    VertexId add_vertex();
    EdgeId add_edge(VertexId src, VertexId dst, Dyadic length, Dyadic weight);

    int num_vertices() const { return static_cast<int>(out_.size()); }
    int num_edges() const { return static_cast<int>(edges_.size()); }
    const Edge& edge(EdgeId e) const { return edges_.at(static_cast<std::size_t>(e)); }
    const std::vector<Edge>& edges() const { return edges_; }
    Edge& mutable_edge(EdgeId e) { return edges_.at(static_cast<std::size_t>(e)); }

    const std::vector<EdgeId>& out_edges(VertexId v) const { return out_[static_cast<std::size_t>(v)]; }
    const std::vector<EdgeId>& in_edges(VertexId v) const { return in_[static_cast<std::size_t>(v)]; }
    int degree(VertexId v) const {
        return static_cast<int>(out_edges(v).size() + in_edges(v).size());
    }

    Dyadic edge_measure(EdgeId e) const { return edge(e).weight * edge(e).length; }
    Dyadic total_measure() const;
    Dyadic total_length() const;

    /// Throws GraphError when a length is not positive, an endpoint is out of
    /// range, or the underlying undirected graph is disconnected.
    void validate() const;

private:
    std::vector<Edge> edges_;
    std::vector<std::vector<EdgeId>> out_;
    std::vector<std::vector<EdgeId>> in_;
};

struct GraphPoint {
    EdgeId edge = -1;
    Dyadic offset;

    friend bool operator==(const GraphPoint&, const GraphPoint&) = default;
};

/// Canonical form: a vertex is represented on its lowest-id incident edge,
/// with offset 0 when it is that edge's source and the edge length otherwise.
GraphPoint canonical(const MetricGraph& g, const GraphPoint& p);
GraphPoint vertex_point(const MetricGraph& g, VertexId v);
/// Vertex id when p sits on a vertex.
std::optional<VertexId> point_vertex(const MetricGraph& g, const GraphPoint& p);
void check_point(const MetricGraph& g, const GraphPoint& p);

struct Interval {
    Dyadic a;
    Dyadic b;
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Finite union of closed sub-intervals of edges.
class SegmentSet {
public:
    SegmentSet() = default;
    void add(EdgeId e, Dyadic a, Dyadic b);
    /// Merge overlapping pieces and sort by (edge, a).
    void normalize();
    const std::vector<std::pair<EdgeId, Interval>>& pieces() const { return pieces_; }
    bool empty() const { return pieces_.empty(); }

    SegmentSet intersect(const SegmentSet& o) const;
    SegmentSet unite(const SegmentSet& o) const;
    /// True when every point of this set lies in o (both normalized).
    bool subset_of(const SegmentSet& o) const;
    bool contains(const GraphPoint& p) const;
    /// Total length of the pieces (ignores weights).
    Dyadic length() const;

    friend bool operator==(const SegmentSet&, const SegmentSet&) = default;

private:
    std::vector<std::pair<EdgeId, Interval>> pieces_;
};

/// Whole graph as a segment set.
SegmentSet full_set(const MetricGraph& g);

/// Single-source distances from a point to every vertex; std::nullopt marks
/// unreachable vertices. pred_edge records the last edge of a shortest path,
/// ties broken by lower edge id.
struct DistanceField {
    GraphPoint source;
    std::vector<std::optional<Dyadic>> dist;
    std::vector<EdgeId> pred_edge;
};

DistanceField distances_from(const MetricGraph& g, const GraphPoint& p);
/// Distance from the field's source to q.
std::optional<Dyadic> distance_to(const MetricGraph& g, const DistanceField& f, const GraphPoint& q);

/// Exact path-metric distance; throws GraphError("unreachable") when p and q
/// lie in different components.
Dyadic shortest_path_distance(const MetricGraph& g, const GraphPoint& p, const GraphPoint& q);

/// Distance together with a shortest path [p,q] as a segment set.
struct Geodesic {
    Dyadic length;
    SegmentSet path;
};
Geodesic shortest_path(const MetricGraph& g, const GraphPoint& p, const GraphPoint& q);
/// Same, reusing a field already computed from p.
Geodesic shortest_path(const MetricGraph& g, const DistanceField& f, const GraphPoint& q);

/// Closed ball B_r(center).
SegmentSet ball(const MetricGraph& g, const GraphPoint& center, const Dyadic& r);
SegmentSet ball(const MetricGraph& g, const DistanceField& f, const Dyadic& r);

/// Sum over pieces of weight times length.
Dyadic measure(const MetricGraph& g, const SegmentSet& s);

struct DoublingReport {
    Rational max_ratio = 0;
    int evaluated = 0;
    int skipped = 0;  // zero-measure small balls
    GraphPoint argmax_center;
    Dyadic argmax_radius;
};

/// max of mu(B_2r(x) cap R) / mu(B_r(x) cap R) over the given samples.
DoublingReport doubling_ratio(const MetricGraph& g, const SegmentSet& restriction,
                              const std::vector<GraphPoint>& centers,
                              const std::vector<Dyadic>& radii);

}  // namespace invsys

#endif
