// SPDX-License-Identifier: MIT
//
// JSON serialization of graphs, systems, functions and witnesses, plus DOT,
// CSV and SVG exports. Dyadics are written as "p/2^k" strings and rationals as
// "p/q" strings, so every JSON document round-trips exactly.

#ifndef INVSYS_IO_HPP
#define INVSYS_IO_HPP

#include <iosfwd>
#include <string>

#include "json.hpp"

#include "invsys/banach_diamond.hpp"
#include "invsys/calculus.hpp"
#include "invsys/system.hpp"

namespace invsys {

using Json = nlohmann::ordered_json;

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rational from a JSON string ("p/q", "p/2^k", "0.8") or number. Numbers are
/// read through their shortest decimal rendering, so 0.8 becomes 4/5.
Rational json_rational(const Json& j);
Dyadic json_dyadic(const Json& j);

Json graph_to_json(const MetricGraph& g);
MetricGraph graph_from_json(const Json& j);

Json system_to_json(const InverseSystem& sys);
InverseSystem system_from_json(const Json& j);

/// System JSON with an extra "diamond" object holding coordinates and the
/// construction parameters.
Json diamond_to_json(const GeneralizedDiamondSystem& d);
GeneralizedDiamondSystem diamond_from_json(const Json& j);

Json function_to_json(const MetricGraph& g, const PLFunction& f);
PLFunction function_from_json(const MetricGraph& g, const Json& j);

/// {m, delta, entries: [{c, branches, n_c, delta_c}]}
struct WitnessFile {
    int m = 1;
    Rational delta;
    std::vector<ConvexWitness> entries;
};
WitnessFile witnesses_from_json(const Json& j);
Json witnesses_to_json(const WitnessFile& w);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

bool structurally_equal(const MetricGraph& a, const MetricGraph& b);
bool structurally_equal(const InverseSystem& a, const InverseSystem& b);

// ---- exports ---------------------------------------------------------------------

void export_dot(std::ostream& os, const InverseSystem& sys, int level);
/// level,edge,src,dst,length,weight,parent,subedge,opposite
void export_edges_csv(std::ostream& os, const InverseSystem& sys);
/// level,deltaE,deltad,deltaPrime,alpha,beta,L
void export_constants_csv(std::ostream& os, const InverseSystem& sys);
/// Vertices placed at (projection to X_0, lineage offset); throws FormatError
/// above max_vertices.
void export_svg(std::ostream& os, const InverseSystem& sys, int level, int max_vertices = 4096);

}  // namespace invsys

#endif
