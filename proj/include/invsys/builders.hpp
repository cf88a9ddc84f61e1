// SPDX-License-Identifier: MIT
//
// Constructors for inverse systems: the Laakso system and the thick-system
// construction driven by a geodesic-family oracle over the Laakso space.

#ifndef INVSYS_BUILDERS_HPP
#define INVSYS_BUILDERS_HPP

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "invsys/system.hpp"

namespace invsys {

class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PreconditionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Maximum number of edges any builder may create on one level. Read from the
/// INVSYS_EDGE_BUDGET environment variable; defaults to 2^21.
std::size_t edge_budget();

/// Laakso system with levels X_0..X_levels. Every edge is replaced by a
/// terminal quarter, a circle of two arcs of half the edge length, and a
/// terminal quarter.
InverseSystem build_laakso(int levels);

/// Address of the Laakso tree node carried by edge e of X_i in a system
/// returned by build_laakso: one character per level, 'L' and 'R' for the
/// terminal quarters and '0' / '1' for the primary / opposite arc.
std::string laakso_address(const InverseSystem& sys, int i, EdgeId e);

// ---- implicit Laakso host ---------------------------------------------------
//
// The host is the inverse limit of the Laakso system. A node of its tree is an
// edge at some level, addressed as above. A 0-1 geodesic is a choice of arc for
// every circle it meets; a Member stores the circles (by node address) where
// the choice is the opposite arc. Points of a member are given by their time
// coordinate s in [0,1].

struct Member {
    std::set<std::string> flipped;
    bool bit(const std::string& node) const { return flipped.count(node) > 0; }
    /// True when some flipped circle lies at or below the node.
    bool touches(const std::string& node) const;
    Member with_flip(const std::string& node) const;
    friend bool operator==(const Member&, const Member&) = default;
};

struct HostCircle {
    std::string node;  // address of the node whose middle half is the circle
    Dyadic c;          // time interval of the circle
    Dyadic d;
    Dyadic span() const { return d - c; }
};

struct Partition {
    std::vector<Dyadic> times;  // strictly increasing, endpoints included
    void check() const;
};

struct DeviationRecord {
    Partition partition;
    Member gamma_tilde;
    std::vector<Dyadic> gap_max;  // one entry per gap
    Dyadic total;
    std::vector<HostCircle> flipped;  // circles where gamma_tilde leaves gamma
};

/// Geodesic segment of the host: member restricted to [a, b].
struct HostSegment {
    Member member;
    Dyadic a;
    Dyadic b;
    Dyadic length() const { return b - a; }
};

class LaaksoOracle {
public:
    /// depth: tree levels resolved below an edge. A node is resolved for an
    /// edge of length l when its length exceeds 4^{-depth} l.
    /// thick = false gives the degenerate family {gamma}.
    explicit LaaksoOracle(int depth, bool thick = true) : depth_(depth), thick_(thick) {}

    int depth() const { return depth_; }
    bool thick() const { return thick_; }

    /// Exact host distance between the points at times s1 on w1 and s2 on w2.
    Dyadic distance(const Member& w1, const Dyadic& s1, const Member& w2, const Dyadic& s2) const;

    /// Smallest resolved node length for a segment (nodes must be strictly longer).
    Dyadic resolution(const Dyadic& edge_length) const;

    /// Circles along w inside [a, b] whose node is resolved for an edge of
    /// length edge_length.
    std::vector<HostCircle> circles_along(const Member& w, const Dyadic& a, const Dyadic& b,
                                          const Dyadic& edge_length) const;

    /// Lower bound for the thickness constant obtained by evaluating the best
    /// deviation over a battery of partitions of [0,1] on several members,
    /// rounded down to a power of two and capped at 1/2.
    Dyadic measured_alpha() const;
    /// Raw minimum deviation found by measured_alpha before rounding.
    Rational raw_thickness() const;

private:
    int depth_;
    bool thick_;
};

/// dev(T, gamma_tilde) on the segment [T.front(), T.back()]; throws
/// PreconditionError when the curves differ at a partition point.
DeviationRecord deviation(const LaaksoOracle& oracle, const Member& gamma, const Member& gamma_tilde,
                          const Partition& T);

struct Sup2Options {
    std::optional<Dyadic> max_span;  // circles longer than this are not used
    std::optional<Dyadic> min_span;
    std::optional<Dyadic> reference_length;  // edge length setting the resolution; default segment length
};

/// Best deviation over members agreeing with the segment's member on T,
/// maximised exactly over the resolved circles; the returned partition adds
/// the endpoints of every flipped circle so that on each gap the curves
/// coincide or have disjoint interiors.
DeviationRecord select_sup2(const LaaksoOracle& oracle, const HostSegment& e, const Partition& T,
                            const Sup2Options& opt = {});

struct ThickBuildReport {
    Dyadic alpha_prime;
    std::vector<Dyadic> epsilon;      // mesh bound per refined level
    std::vector<Dyadic> grid;         // dyadic grid per refined level
    std::vector<std::size_t> edges;   // edge count per level
    std::vector<int> circles;         // circle subedges per refined level
};

/// Thick inverse system X_0..X_{levels-1} inside the host.
InverseSystem build_thick_system(const LaaksoOracle& oracle, const std::vector<Dyadic>& delta_prime, int levels,
                                 ThickBuildReport* report = nullptr);

}  // namespace invsys

#endif
