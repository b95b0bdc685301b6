#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlve/core.hpp"
#include "mlve/lattice.hpp"
#include "mlve/maps.hpp"

namespace mlve {

// Loop-vertex corners in the power-counting sense: every propagator item of
// every corner of the map. Items of one corner share a momentum, hence a scale.
struct Lvc {
  int vertex = 0, corner = 0, item = 0;
};
std::vector<Lvc> lvcs(const ColouredMap& map);

// Colour of each external leg (dart -> colour). A leg of colour c ends the
// strands of colour c only; legs missing from the map end every strand.
using LegColours = std::map<int, int>;

// Strand of one colour traced through propagator items. A strand that reaches
// an external leg is open and stops there; closed strands are faces.
struct Strand {
  int colour = 0;
  std::vector<int> lvcs;      // indices into lvcs(map), with multiplicity
  std::vector<int> vertices;  // distinct, sorted
  bool open = false;
  int length() const { return int(lvcs.size()); }
  bool local() const { return !open && vertices.size() == 1; }
};
std::vector<Strand> strands(const ColouredMap& map, int colour, const LegColours& legs = {});
std::vector<Strand> all_strands(const ColouredMap& map, const LegColours& legs = {});

// One scale per corner. The marked corner of each vertex (Corner::mark >= 0,
// else the first corner holding a prop_exact item, else corner 0) carries the
// vertex scale j_a; every other corner is at most j_a.
class ScaleAttribution {
 public:
  ScaleAttribution(const ColouredMap& map, std::vector<int> vertex_scales);

  int vertex_scale(int v) const { return vertex_scales_.at(v); }
  int marked_corner(int v) const { return marked_.at(v); }
  int scale(int v, int corner) const { return scales_.at(v).at(corner); }
  int lvc_scale(const Lvc& l) const { return scale(l.vertex, l.corner); }
  // throws std::invalid_argument for the marked corner or a scale above j_a
  void set(int v, int corner, int j);
  const std::vector<std::vector<int>>& scales() const { return scales_; }

 private:
  std::vector<int> vertex_scales_, marked_;
  std::vector<std::vector<int>> scales_;
};

ScaleAttribution random_attribution(const ColouredMap& map, const std::vector<int>& vertex_scales,
                                    std::mt19937_64& rng);
// every attribution, up to max_count of them
std::vector<ScaleAttribution> all_attributions(const ColouredMap& map, const std::vector<int>& vertex_scales,
                                               long max_count = 100000);

struct FaceCost {
  int colour = 0;
  bool local = false;
  bool open = false;
  int length = 0;
  int j_min = 0;
  std::vector<std::pair<int, int>> j_min_at;  // (vertex, j_m^v)
};

// Exponents are base-M logarithms. Propagator items weigh M^{-2j}; D-type
// blocks are bounded by O(1). Open strands are charged M^{j_m^v/2} per vertex
// in both bounds, the rest of their face being unknown.
struct FaceCostReport {
  std::vector<FaceCost> faces;
  long propagator_exponent = 0;
  Rational sharp_exponent, factorized_exponent;
  std::vector<Rational> vertex_weight;     // W(v)
  std::vector<Rational> vertex_face_cost;  // face part of W(v)
  double sharp = 0, factorized = 0;
};
FaceCostReport amplitude_bound(const ColouredMap& map, const ScaleAttribution& att, double M,
                               const LegColours& legs = {});

// ---------------------------------------------------------------- tables

// coefficients of j1, j2, ... (j1 >= j2 >= ... >= 0)
struct LinearForm {
  std::vector<Rational> c;
  LinearForm() = default;
  explicit LinearForm(std::vector<Rational> coeffs) : c(std::move(coeffs)) {}
  Rational at(size_t i) const { return i < c.size() ? c[i] : Rational(0); }
  LinearForm operator+(const LinearForm& o) const;
  LinearForm operator-(const LinearForm& o) const;
  bool operator==(const LinearForm& o) const;
  std::string str() const;  // e.g. "j1+j2/2+7j4/2"
};
// a >= b for every j1 >= j2 >= ... >= 0
bool dominates(const LinearForm& a, const LinearForm& b);

struct TableRow {
  int tadpoles = -1;          // -1: present in every case
  std::string planarity;      // "planar", "non-planar" or "" for any
  int tadpole_colour = 0;     // 0: any
  std::vector<int> colours;   // colour class of the faces
  bool local = true;
  int count = 1;
  int length = 0;             // for non-local faces: the part on the vertex ("> length")
  LinearForm cost;
};

struct VertexTable {
  std::string name;
  std::vector<int> colours;      // colours of the sigma insertions, cyclically
  std::vector<int> corner_lvcs;  // propagators per corner (corner i follows insertion i)
  std::vector<TableRow> rows;
};

struct VertexSummary {
  std::string name;
  std::vector<std::string> tables;
  std::optional<LinearForm> with_tadpole, without_tadpole;
  std::optional<LinearForm> weight_with, weight_without;  // face cost minus 2 per propagator
};

struct VertexWeightTables {
  std::vector<VertexTable> tables;
  std::vector<VertexSummary> summaries;
  const VertexTable& table(const std::string& name) const;
};
const VertexWeightTables& vertex_weight_tables();

// single loop vertex with the given tadpoles (pairs of insertion indices);
// the other insertions are external legs, dart i being insertion i
ColouredMap vertex_map(const VertexTable& t, const std::vector<std::pair<int, int>>& tadpoles);
LegColours vertex_legs(const VertexTable& t, const std::vector<std::pair<int, int>>& tadpoles);
// all tadpole sets: matchings of equal-colour insertions
std::vector<std::vector<std::pair<int, int>>> wick_patterns(const VertexTable& t);
std::string planarity(const VertexTable& t, const std::vector<std::pair<int, int>>& tadpoles);

struct CaseCheck {
  int tadpoles = 0;
  std::string planarity;
  int tadpole_colour = 0;
  std::optional<LinearForm> worst;  // empty if no single form dominates
  LinearForm expected;              // sum of the table rows
  bool rows_match = false;
  std::string detail;
};
struct TableCheck {
  std::string name;
  std::vector<CaseCheck> cases;
  bool ok = true;
};
TableCheck regenerate_table(const VertexTable& t);

struct SummaryCheck {
  std::string name;
  std::optional<LinearForm> with_tadpole, without_tadpole, weight_with, weight_without;
  bool ok = true;
  std::string detail;
};
SummaryCheck regenerate_summary(const VertexSummary& s);

nlohmann::json to_json(const VertexWeightTables& t);
nlohmann::json to_json(const TableCheck& c);

// ---------------------------------------------------------------- spare power counting

struct SpareReport {
  bool ok = true;
  std::vector<Rational> per_line;  // one entry per propagator (lvc order)
  // the graph has a melonic 2-point subgraph (a degree-one loop vertex);
  // renormalization covers it and no line is held to the threshold
  bool melonic_subgraph = false;
  int violations = 0;  // lines above the threshold
  Rational max_sum = 0;
  static Rational threshold() { return Rational(23, 12); }
};
// throws std::invalid_argument for graphs the classifier marks as divergent
SpareReport spare_check(const ColouredMap& vacuum_graph);

struct SpareSurvey {
  int graphs = 0, convergent = 0, divergent = 0, failures = 0;
  int with_melonic_subgraph = 0;  // convergent graphs with renormalized lines
  Rational max_sum = 0;  // over graphs without a melonic subgraph
};
SpareSurvey spare_survey(int max_order);

// ---------------------------------------------------------------- scaling probe

struct ProbeFamily {
  std::string name;
  ColouredMap graph;
  std::vector<char> varying;  // per vertex: at the probed slice j, or fixed
  int fixed_scale = 2;
};
ProbeFamily u1_pair_family();
ProbeFamily u3_pair_family();
ProbeFamily flat_family();

// lemma prediction for the slope of log_M |A| in j:
// -1/2 [n1 + 3 n2 - (1+eps) t2 + 3 n3 - t3 + 3 n4 - t4] over varying vertices
double predicted_exponent(const ProbeFamily& f, double eps = 0.0);

// exact face sums of a vacuum graph: each corner weighs C(n) times its slice
// cutoffs times |D1(n)| or |D2(n)| per D-type block
double evaluate_amplitude(const ColouredMap& graph, const std::vector<int>& vertex_scales, int M,
                          const RenormAmplitude* ra = nullptr, cplx g = 1.0);

struct ProbeOptions {
  int M = 2;
  int j_min = 2, j_max = 6;
  double tolerance = 0.15;
  double eps = 0.0;
  int aux_cut = 0;  // 0: 2 M^{j_max}
};
struct ProbeResult {
  std::string family;
  std::vector<std::pair<int, double>> points;  // (j, log_M |A|)
  double slope = 0, intercept = 0;
  double tail_slope = 0;  // between the last two points
  double predicted = 0;
  bool ok = false;      // slope <= predicted + tolerance
  bool within = false;  // |slope - predicted| <= tolerance
};
// throws std::invalid_argument for families whose graph is divergent
ProbeResult scaling_probe(const ProbeFamily& f, const ProbeOptions& opt = {});
nlohmann::json to_json(const ProbeResult& r);

}  // namespace mlve
