#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlve/core.hpp"
#include "mlve/maps.hpp"

namespace mlve {

// One step of the counterclockwise reading of a chord diagram vertex: a
// half-edge or a single corner label.
enum class ElementKind { half_tree, half_loop, external, resolvent, safe_block, other };

struct Element {
  int dart = -1;  // >= 0 for half-edges
  CornerLabel label;
  bool is_dart() const { return dart >= 0; }
};

// Reading sequences: one cycle of elements per vertex, plus the edge table
// (edge ends refer to dart ids used in the cycles).
struct Cycles {
  std::vector<std::vector<Element>> cycles;
  std::vector<MapEdge> edges;
};

Cycles to_cycles(const ColouredMap& map);
// element kinds of one cycle; dashed edges are loop edges, unpaired darts external
std::vector<ElementKind> element_kinds(const std::vector<Element>& cycle, const std::vector<MapEdge>& edges);
// darts are renumbered in order of appearance; edges whose darts are missing
// are dropped
ColouredMap from_cycles(const Cycles& c);

// chord-diagram form of a resolvent graph: every vertex is one connected
// component, loop edges are dashed
class ResolventDiagram {
 public:
  ResolventDiagram() = default;
  explicit ResolventDiagram(ColouredMap chord_form, std::vector<std::string> history = {});

  const ColouredMap& map() const { return map_; }
  int num_components() const { return map_.num_vertices(); }
  const std::vector<Element>& sequence(int component) const { return cycles_.cycles.at(component); }
  const Cycles& cycles() const { return cycles_; }
  ElementKind kind(int component, int pos) const { return kinds_.at(component).at(pos); }
  const std::vector<ElementKind>& kinds(int component) const { return kinds_.at(component); }

  int num_resolvents() const;
  int num_resolvents(int component) const;
  // sequence positions of the resolvents of a component, counterclockwise
  std::vector<int> resolvent_positions(int component) const;

  // expansion word: which algorithm branch produced this diagram
  const std::vector<std::string>& history() const { return history_; }
  std::vector<std::string>& history() { return history_; }

 private:
  ColouredMap map_;
  Cycles cycles_;
  std::vector<std::vector<ElementKind>> kinds_;
  std::vector<std::string> history_;
};

// spanning tree preferring low edge indices, then partial duality
ResolventDiagram chord_form(const ColouredMap& resolvent_graph);

// safe elements met from position pos going left (side = -1) or right (+1),
// up to the first half tree edge, resolvent or external leg
struct SideScan {
  int safe = 0;
  int stop = -1;  // position of the blocking element, -1 if the scan wrapped around
  ElementKind stop_kind = ElementKind::other;
  bool reaches_tree() const { return stop >= 0 && stop_kind == ElementKind::half_tree; }
};
SideScan scan_side(const ResolventDiagram& d, int component, int pos, int side);

struct TreeResolvent {
  int position = 0;      // in the component sequence
  int ordinal = 0;       // index among all resolvents of the component
  bool right_tree = false;  // a half tree edge on its left within six safe elements
  bool left_tree = false;   // a half tree edge on its right within six safe elements
  int left = 0, right = 0;  // consecutive safe elements on each side
};
// counterclockwise from the root, which is the tree-resolvent with the
// smallest sequence position
std::vector<TreeResolvent> tree_resolvents(const ResolventDiagram& d, int component);

struct AdmissiblePair {
  int component = 0;
  int dart = 0;      // the half tree edge s
  int resolvent = 0;  // sequence position of R_j
  int side = 0;       // -1: s is on the left of R_j, +1: on the right
  int distance = 0;
};

struct SecurityState {
  std::vector<AdmissiblePair> pairs;
  int m = 0;
  int c = 0;
  int psi = 0;
  int resolvents = 0;
  std::vector<int> unsecured;  // component indices
  bool secured() const { return unsecured.empty(); }
};
SecurityState security_state(const ResolventDiagram& d);
bool component_secured(const ResolventDiagram& d, int component);

// r + 2 children: identity, D term, then one sigma contraction per resolvent
// of the whole diagram (resolvents in component order, then sequence order).
// j indexes the resolvents of the component, counterclockwise, from 0.
std::vector<ResolventDiagram> expand_right(const ResolventDiagram& d, int component, int j);
std::vector<ResolventDiagram> expand_left(const ResolventDiagram& d, int component, int j);
std::vector<ResolventDiagram> choose_expand(const ResolventDiagram& d, int component);

struct SecureOptions {
  bool audit = true;
  long max_nodes = 2000000;
  bool keep_leaves = true;
  int block_n = -1;  // n with |B| = n + 1, for the leaf bound; -1 to skip
};

struct SecureResult {
  std::vector<ResolventDiagram> leaves;  // sorted by history
  long leaf_count = 0;
  long nodes = 0;
  int max_depth = 0;
  int psi_initial = 0;
  int r_initial = 0;
  bool complete = true;   // false if max_nodes was hit
  bool leaves_secured = true;
  bool between_ok = true;
  // log of (98n-28)^(42n-30) and of (r + psi + 2)^psi
  double log_lemma_bound = 0.0;
  double log_tree_bound = 0.0;
  bool bound_ok = true;
  bool depth_ok = true;  // every branch no longer than psi_initial
};
// throws std::runtime_error if psi fails to decrease on some step (audit on)
SecureResult secure(const ResolventDiagram& d, const SecureOptions& opt = {});
double log_leaf_bound(int n);

// Random-branch audit for trees too large to enumerate. Each path descends
// through uniformly chosen children until psi <= exhaustive_psi, then the
// whole remaining subtree is expanded. The leaf estimate is the Knuth
// estimator (product of branching factors times the subtree leaf count).
struct SampleAudit {
  int paths = 0;
  long nodes = 0;
  long subtree_leaves = 0;
  int max_depth = 0;
  int psi_initial = 0;
  int r_initial = 0;
  bool complete = true;  // false if a subtree hit max_nodes
  bool leaves_secured = true;
  bool between_ok = true;
  bool depth_ok = true;
  double log_leaf_estimate = 0.0;
  double log_tree_bound = 0.0;
  double log_lemma_bound = 0.0;
  bool bound_ok = true;  // every single-path estimate is below the bounds
  std::vector<ResolventDiagram> leaves;  // one leaf per path
};
SampleAudit secure_sampled(const ResolventDiagram& d, std::mt19937_64& rng, int paths, int exhaustive_psi = 4,
                           const SecureOptions& opt = {});

// positions (component, resolvent ordinal) where two consecutive resolvents
// have fewer than three D-blocks and no half loop edge between them
std::vector<std::pair<int, int>> between_resolvents_violations(const ResolventDiagram& d);
// weaker spacing of resolvent graphs: three D-blocks or any half-edge
bool resolvent_spacing_ok(const ResolventDiagram& d);

// contraction process: every sigma insertion is integrated by parts against
// another sigma insertion or a resolvent (which splits as R dU R)
DiagramBatch contract_sigmas(const ColouredMap& skeleton, long max_outputs = 100000);
// one random branch of the contraction process
ColouredMap random_contraction(const ColouredMap& skeleton, std::mt19937_64& rng);
// number of terms for s sigma insertions and r resolvents
long contraction_count(int sigmas, int resolvents);
int count_kind(const ColouredMap& map, CornerKind k);
// reversed rotations, reversed corners, R <-> R^dagger
ColouredMap mirror_conjugate(const ColouredMap& map);
// two copies of G and two of its mirror conjugate
ColouredMap skeleton_quadruple(const ColouredMap& skeleton);

// random resolvent diagram from a block of the given size: random tree,
// partitions, loop-vertex terms and contraction branch
ResolventDiagram random_resolvent_diagram(std::mt19937_64& rng, int block_size, bool quadruple = false);

// cutting scheme

struct CutNode {
  std::string word;  // Ulam-Harris word, "" for the root
  Cycles cycle;      // a single vertex
  Rational alpha = 1;
  int resolvents = 0;
  std::string cut;   // "odd", "even" or "" for leaves
  std::map<int, int> c_a, c_ar;
  ColouredMap map() const { return from_cycles(cycle); }
};

struct CutScheme {
  int component = 0;
  int r = 0;
  int k_tilde = 0;
  std::vector<CutNode> nodes;  // every node, parents before children
  std::vector<int> leaves;     // indices into nodes, sorted by word
  std::string direction = "counterclockwise";
};

// one scheme per component; throws std::invalid_argument on unsecured input
std::vector<CutScheme> cut_scheme(const ResolventDiagram& secured);
CutScheme cut_component(const ResolventDiagram& secured, int component);

// tree-edge and loop-edge content of a resolvent-free map; a D1 block counts
// as one tree edge and a D2 block as two
struct EdgeContent {
  int tree = 0, loop = 0;
};
EdgeContent edge_content(const ColouredMap& map);
bool convergence_predicate(const ColouredMap& map);

struct ExponentAudit {
  std::map<int, Rational> recursive, closed;
  std::map<int, int> c_a, c_ar;
  Rational edges_recursive;
  int edges = 0;
  bool consistent = true;  // recursive == closed for every scale and edge tracking holds
  bool bound_ok = true;    // m >= 2 for every scale with c_a >= 4
};
ExponentAudit exponent_audit(const CutScheme& scheme);

nlohmann::json to_json(const ResolventDiagram& d);
ResolventDiagram resolvent_diagram_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SecurityState& s);
nlohmann::json to_json(const CutScheme& s);

}  // namespace mlve
