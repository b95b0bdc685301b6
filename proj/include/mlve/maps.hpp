#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mlve/bkar.hpp"
#include "mlve/core.hpp"

namespace mlve {

enum class CornerKind {
  prop_leq,
  prop_exact,
  delta_insertion,
  sigma_plus_B,
  resolvent,
  resolvent_dagger,
  D1_block,
  D2_block,
  renorm_block,
};

std::string to_string(CornerKind k);
CornerKind corner_kind_from_string(const std::string& s);

struct CornerLabel {
  CornerKind kind = CornerKind::prop_leq;
  int scale = 0;
  bool operator==(const CornerLabel&) const = default;
};

// the stretch of a loop vertex between two consecutive half-edges
struct Corner {
  std::vector<CornerLabel> items{CornerLabel{}};
  int mark = -1;  // scale of the loop vertex if this is its marked corner
  bool operator==(const Corner&) const = default;
};

// single colour c, or its complement c-hat
struct EdgeColour {
  int c = 1;
  bool hat = false;
  bool contains(int colour) const { return hat ? colour != c : colour == c; }
  EdgeColour flipped() const { return {c, !hat}; }
  bool operator==(const EdgeColour&) const = default;
};

struct MapEdge {
  int h1 = 0, h2 = 0;
  EdgeColour colour;
  bool dashed = false;  // loop edge in a chord diagram
  bool operator==(const MapEdge&) const = default;
};

// Rotation system over half-edges 0..H-1. Each vertex lists its half-edges in
// cyclic order; a vertex with none is isolated. Half-edges not in any edge are
// external legs. corners[v][i] is the corner following rotation[v][i].
class ColouredMap {
 public:
  ColouredMap() = default;
  ColouredMap(std::vector<std::vector<int>> rotation, std::vector<MapEdge> edges);
  ColouredMap(std::vector<std::vector<int>> rotation, std::vector<MapEdge> edges,
              std::vector<std::vector<Corner>> corners);

  int num_darts() const { return int(sigma_.size()); }
  int num_vertices() const { return int(rot_.size()); }
  int num_edges() const { return int(edges_.size()); }
  int num_external() const;
  int num_components() const;

  const std::vector<std::vector<int>>& rotation() const { return rot_; }
  const std::vector<MapEdge>& edges() const { return edges_; }
  const std::vector<std::vector<Corner>>& corners() const { return corners_; }
  std::vector<std::vector<Corner>>& corners() { return corners_; }
  std::vector<MapEdge>& edges() { return edges_; }

  int sigma(int h) const { return sigma_[h]; }
  int alpha(int h) const { return alpha_[h]; }  // h itself for an external leg
  int vertex_of(int h) const { return vertex_[h]; }
  int position_of(int h) const { return pos_[h]; }
  int edge_of(int h) const { return edge_of_[h]; }  // -1 for an external leg
  bool is_external(int h) const { return edge_of_[h] < 0; }
  bool vertex_has_external(int v) const;

  const Corner& corner_after(int h) const { return corners_[vertex_[h]][pos_[h]]; }

  bool operator==(const ColouredMap& o) const {
    return rot_ == o.rot_ && edges_ == o.edges_ && corners_ == o.corners_;
  }

 private:
  void normalize();
  void index();

  std::vector<std::vector<int>> rot_;
  std::vector<MapEdge> edges_;
  std::vector<std::vector<Corner>> corners_;
  std::vector<int> sigma_, alpha_, vertex_, pos_, edge_of_;
};

struct FaceCorner {
  int vertex, position;
  bool operator==(const FaceCorner&) const = default;
};

struct Face {
  std::vector<FaceCorner> corners;
  int colour = 0;         // 0 when traced on the whole map
  bool external = false;  // passes an external leg
  int length() const { return int(corners.size()); }
  bool local_to(int vertex) const;
};

struct FaceSet {
  std::vector<Face> faces;
  int colour = 0;
  int genus = 0;
  int size() const { return int(faces.size()); }
};

// colour 0: faces of the whole map; colour c in 1..4: faces of the submap of
// edges whose colour set contains c
FaceSet faces(const ColouredMap& map, int colour = 0);
int genus(const ColouredMap& map);
// internal face sums minus twice the internal propagators, summed over colours
int superficial_degree(const ColouredMap& map);

ColouredMap partial_dual(const ColouredMap& map, const std::vector<int>& edge_subset);
ColouredMap full_dual(const ColouredMap& map);
ColouredMap spanning_submap(const ColouredMap& map, const std::vector<int>& edge_subset);
ColouredMap to_chord_diagram(const ColouredMap& map, const std::vector<int>& spanning_tree);
ColouredMap disjoint_union(const std::vector<ColouredMap>& maps);
ColouredMap quadruple(const ColouredMap& map);

// edges of a one-vertex map whose ends interleave
std::vector<std::pair<int, int>> chord_crossings(const ColouredMap& chord_diagram);

// Cut a one-vertex map along a line joining two of its corners. Edges with one
// end on each arc are cut; arc_a lists them in rotation order, arc_b in
// reverse rotation order. The permutation maps positions on arc_a to
// positions on arc_b; it is the identity iff the cut edges do not cross.
struct ChordCut {
  std::vector<int> arc_a, arc_b;
  std::vector<int> permutation;
  bool identity = true;
};
ChordCut cut_chord_diagram(const ColouredMap& chord_diagram, int corner_a, int corner_b);

// loop-vertex terms of derivatives of -V_j
enum class Insertion {
  U,
  U_marked,
  Sigma,
  Sigma_marked,
  R,
  dU,
  dU_marked,
  D1,
  D1_marked,
  D2_marked,
  Q,
};
std::string to_string(Insertion i);

struct Token {
  Insertion kind;
  int index = 0;  // derivative label for dU / dU_marked
  bool operator==(const Token&) const = default;
  auto operator<=>(const Token&) const = default;
};

struct LoopTerm {
  std::vector<Token> word;  // cyclic product under the trace, or e Q e
  Rational coeff = 1;
  int lambda_power = 0;
  bool q_term = false;
  int delta_count() const;
  int marked_count() const;
  int length() const { return int(word.size()); }
  std::string str() const;
};

struct DiagramBatch {
  int k = 0;
  int slice = 0;
  std::vector<LoopTerm> terms;
  std::vector<ColouredMap> graphs;
};

// transcribed term lists for k = 1, 2 and the closed formula for k >= 3
DiagramBatch derivative_terms(int k, int slice = 1);
// product-rule differentiation of the loop-vertex action, k times
std::vector<LoopTerm> symbolic_derivative(int k);
// multiset comparison, Q terms compared with both outer factors sorted
bool same_terms(const std::vector<LoopTerm>& a, const std::vector<LoopTerm>& b);

// one skeleton forest per choice of node partitions; colours per tree edge
// (default 1), scales per node (default 1)
DiagramBatch skeleton_graphs(const Forest& tree, const std::vector<int>& scales = {},
                             const std::vector<EdgeColour>& colours = {});
// a single skeleton graph for explicit partitions of each node's incident
// tree edges (edge indices into tree.edges)
ColouredMap skeleton_graph(const Forest& tree, const std::vector<std::vector<std::vector<int>>>& partitions,
                           const std::vector<int>& scales = {},
                           const std::vector<EdgeColour>& colours = {});
// each vertex has exactly one marked corner and exactly one exact propagator
bool has_marked_corners(const ColouredMap& map);

// replace each skeleton vertex by a loop-vertex term with the same number of
// delta insertions (terms[v] is used for vertex v)
ColouredMap resolvent_graph(const ColouredMap& skeleton, const std::vector<LoopTerm>& terms);

enum class DivergenceClass { M1, M2, V1, V2, V3, V4, V5, V6, V7, N1, N2, N3, convergent };
std::string to_string(DivergenceClass d);

// the eleven divergent graphs as intermediate-field maps (edges: quartic
// vertices, vertices: propagator cycles; a 2-point graph has one external leg)
ColouredMap library_graph(DivergenceClass d, const std::vector<int>& colours = {});
std::vector<DivergenceClass> divergent_classes();
// canonical code under relabelling of darts, mirror images and, if
// colour_blind, colours
std::string canonical_form(const ColouredMap& map, bool colour_blind = false);
// number of distinct coloured versions of a library graph
int coloured_versions(DivergenceClass d);
DivergenceClass classify(const ColouredMap& map);

ColouredMap random_map(std::mt19937_64& rng, int vertices, int edges, int external = 0);
// all connected vacuum maps with the given number of edges and colours from
// the list (one representative per canonical form)
std::vector<ColouredMap> enumerate_vacuum_maps(int edges, const std::vector<int>& colours = {1, 2, 3, 4});

nlohmann::json to_json(const ColouredMap& map);
ColouredMap map_from_json(const nlohmann::json& j);
std::string to_dot(const ColouredMap& map, const std::string& name = "G");

}  // namespace mlve
