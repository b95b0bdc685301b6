#include "mlve/powercount.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace mlve {

namespace {

bool is_prop(CornerKind k) { return k == CornerKind::prop_leq || k == CornerKind::prop_exact; }
bool is_d(CornerKind k) { return k == CornerKind::D1_block || k == CornerKind::D2_block; }

struct CornerTrace {
  std::vector<FaceCorner> corners;
  bool open = false;
};

// faces of one colour at corner granularity; open strands stop at external legs
std::vector<CornerTrace> trace_corners(const ColouredMap& map, int colour, const LegColours& legs) {
  if (colour < 1 || colour > 4) throw std::invalid_argument("colour must be 1..4");
  const int H = map.num_darts();
  std::vector<char> kept(H);
  auto ends = [&](int h) {
    auto it = legs.find(h);
    return it == legs.end() || it->second == colour;
  };
  for (int h = 0; h < H; ++h)
    kept[h] = map.is_external(h) ? ends(h) : map.edges()[map.edge_of(h)].colour.contains(colour);
  std::vector<char> used(H, 0);
  // corners after x up to the next kept dart, which is returned
  auto arc = [&](int x, std::vector<FaceCorner>& out) {
    used[x] = 1;
    int d = x;
    do {
      out.push_back({map.vertex_of(d), map.position_of(d)});
      d = map.sigma(d);
    } while (!kept[d]);
    return d;
  };
  std::vector<CornerTrace> out;
  for (int x = 0; x < H; ++x) {
    if (!map.is_external(x) || !kept[x] || used[x]) continue;
    CornerTrace t;
    t.open = true;
    int h = x;
    for (;;) {
      int y = arc(h, t.corners);
      if (map.is_external(y)) break;
      h = map.alpha(y);
    }
    out.push_back(std::move(t));
  }
  for (int x = 0; x < H; ++x) {
    if (!kept[x] || used[x]) continue;
    CornerTrace t;
    int h = x;
    do {
      int y = arc(h, t.corners);
      h = map.alpha(y);
    } while (h != x);
    out.push_back(std::move(t));
  }
  for (int v = 0; v < map.num_vertices(); ++v) {
    const auto& r = map.rotation()[v];
    if (std::any_of(r.begin(), r.end(), [&](int h) { return kept[h]; })) continue;
    CornerTrace t;
    for (int i = 0; i < int(map.corners()[v].size()); ++i) t.corners.push_back({v, i});
    out.push_back(std::move(t));
  }
  return out;
}

// lvc index ranges per corner
std::vector<std::vector<std::vector<int>>> lvc_index(const ColouredMap& map) {
  std::vector<std::vector<std::vector<int>>> idx(map.num_vertices());
  int k = 0;
  for (int v = 0; v < map.num_vertices(); ++v) {
    idx[v].resize(map.corners()[v].size());
    for (int i = 0; i < int(map.corners()[v].size()); ++i)
      for (const auto& it : map.corners()[v][i].items)
        if (is_prop(it.kind)) idx[v][i].push_back(k++);
  }
  return idx;
}

Rational half(const Rational& q) {
  Rational r = q / 2;
  r.canonicalize();
  return r;
}

double pow_m(double M, const Rational& e) { return std::pow(M, to_double(e)); }

}  // namespace

std::vector<Lvc> lvcs(const ColouredMap& map) {
  std::vector<Lvc> out;
  for (int v = 0; v < map.num_vertices(); ++v)
    for (int i = 0; i < int(map.corners()[v].size()); ++i) {
      const auto& items = map.corners()[v][i].items;
      for (int k = 0; k < int(items.size()); ++k)
        if (is_prop(items[k].kind)) out.push_back({v, i, k});
    }
  return out;
}

std::vector<Strand> strands(const ColouredMap& map, int colour, const LegColours& legs) {
  auto idx = lvc_index(map);
  std::vector<Strand> out;
  for (const auto& t : trace_corners(map, colour, legs)) {
    Strand s;
    s.colour = colour;
    s.open = t.open;
    std::set<int> vs;
    for (const auto& fc : t.corners) {
      vs.insert(fc.vertex);
      for (int l : idx[fc.vertex][fc.position]) s.lvcs.push_back(l);
    }
    s.vertices.assign(vs.begin(), vs.end());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Strand> all_strands(const ColouredMap& map, const LegColours& legs) {
  std::vector<Strand> out;
  for (int c = 1; c <= 4; ++c) {
    auto s = strands(map, c, legs);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

// ---------------------------------------------------------------- attributions

ScaleAttribution::ScaleAttribution(const ColouredMap& map, std::vector<int> vertex_scales)
    : vertex_scales_(std::move(vertex_scales)) {
  if (int(vertex_scales_.size()) != map.num_vertices())
    throw std::invalid_argument("one scale per loop vertex is required");
  for (int v = 0; v < map.num_vertices(); ++v) {
    if (vertex_scales_[v] < 0) throw std::invalid_argument("scales must be non-negative");
    const auto& cs = map.corners()[v];
    int m = -1;
    for (int i = 0; i < int(cs.size()) && m < 0; ++i)
      if (cs[i].mark >= 0) m = i;
    for (int i = 0; i < int(cs.size()) && m < 0; ++i)
      for (const auto& it : cs[i].items)
        if (it.kind == CornerKind::prop_exact) {
          m = i;
          break;
        }
    marked_.push_back(std::max(m, 0));
    scales_.emplace_back(cs.size(), vertex_scales_[v]);
  }
}

void ScaleAttribution::set(int v, int corner, int j) {
  if (v < 0 || v >= int(scales_.size()) || corner < 0 || corner >= int(scales_[v].size()))
    throw std::invalid_argument("corner out of range");
  if (corner == marked_[v] && j != vertex_scales_[v])
    throw std::invalid_argument("the marked corner keeps the vertex scale");
  if (j < 0 || j > vertex_scales_[v]) throw std::invalid_argument("corner scale must lie in [0, j_a]");
  scales_[v][corner] = j;
}

ScaleAttribution random_attribution(const ColouredMap& map, const std::vector<int>& vertex_scales,
                                    std::mt19937_64& rng) {
  ScaleAttribution a(map, vertex_scales);
  for (int v = 0; v < map.num_vertices(); ++v)
    for (int i = 0; i < int(a.scales()[v].size()); ++i)
      if (i != a.marked_corner(v)) a.set(v, i, std::uniform_int_distribution<int>(0, vertex_scales[v])(rng));
  return a;
}

std::vector<ScaleAttribution> all_attributions(const ColouredMap& map, const std::vector<int>& vertex_scales,
                                               long max_count) {
  ScaleAttribution base(map, vertex_scales);
  std::vector<std::pair<int, int>> free;
  for (int v = 0; v < map.num_vertices(); ++v)
    for (int i = 0; i < int(base.scales()[v].size()); ++i)
      if (i != base.marked_corner(v)) free.emplace_back(v, i);
  std::vector<ScaleAttribution> out;
  std::vector<int> cur(free.size(), 0);
  for (;;) {
    if (long(out.size()) >= max_count) break;
    ScaleAttribution a = base;
    for (size_t k = 0; k < free.size(); ++k) a.set(free[k].first, free[k].second, cur[k]);
    out.push_back(std::move(a));
    size_t k = 0;
    while (k < free.size() && cur[k] == vertex_scales[free[k].first]) cur[k++] = 0;
    if (k == free.size()) break;
    ++cur[k];
  }
  return out;
}

FaceCostReport amplitude_bound(const ColouredMap& map, const ScaleAttribution& att, double M,
                               const LegColours& legs) {
  if (M <= 1) throw std::invalid_argument("M must exceed 1");
  auto L = lvcs(map);
  FaceCostReport r;
  r.vertex_weight.assign(map.num_vertices(), 0);
  r.vertex_face_cost.assign(map.num_vertices(), 0);
  for (const auto& l : L) {
    const int j = att.lvc_scale(l);
    r.propagator_exponent -= 2 * j;
    r.vertex_weight[l.vertex] -= 2 * j;
  }
  r.sharp_exponent = r.propagator_exponent;
  r.factorized_exponent = r.propagator_exponent;
  for (const auto& s : all_strands(map, legs)) {
    if (s.lvcs.empty()) continue;
    FaceCost f;
    f.colour = s.colour;
    f.local = s.local();
    f.open = s.open;
    f.length = s.length();
    std::map<int, int> at;
    f.j_min = att.lvc_scale(L[s.lvcs[0]]);
    for (int i : s.lvcs) {
      const int j = att.lvc_scale(L[i]);
      f.j_min = std::min(f.j_min, j);
      auto it = at.find(L[i].vertex);
      if (it == at.end())
        at[L[i].vertex] = j;
      else
        it->second = std::min(it->second, j);
    }
    f.j_min_at.assign(at.begin(), at.end());
    Rational split = 0;
    for (auto [v, j] : at) split += half(j);
    if (f.local) {
      r.sharp_exponent += f.j_min;
      r.factorized_exponent += f.j_min;
      r.vertex_face_cost[at.begin()->first] += f.j_min;
    } else {
      r.sharp_exponent += f.open ? split : Rational(f.j_min);
      r.factorized_exponent += split;
      for (auto [v, j] : at) r.vertex_face_cost[v] += half(j);
    }
    r.faces.push_back(std::move(f));
  }
  for (int v = 0; v < map.num_vertices(); ++v) r.vertex_weight[v] += r.vertex_face_cost[v];
  r.sharp = pow_m(M, r.sharp_exponent);
  r.factorized = pow_m(M, r.factorized_exponent);
  return r;
}

// ---------------------------------------------------------------- linear forms

LinearForm LinearForm::operator+(const LinearForm& o) const {
  LinearForm r;
  for (size_t i = 0; i < std::max(c.size(), o.c.size()); ++i) r.c.push_back(at(i) + o.at(i));
  return r;
}

LinearForm LinearForm::operator-(const LinearForm& o) const {
  LinearForm r;
  for (size_t i = 0; i < std::max(c.size(), o.c.size()); ++i) r.c.push_back(at(i) - o.at(i));
  return r;
}

bool LinearForm::operator==(const LinearForm& o) const {
  for (size_t i = 0; i < std::max(c.size(), o.c.size()); ++i)
    if (at(i) != o.at(i)) return false;
  return true;
}

std::string LinearForm::str() const {
  std::string s;
  for (size_t i = 0; i < c.size(); ++i) {
    Rational q = c[i];
    q.canonicalize();
    if (q == 0) continue;
    std::string var = "j" + std::to_string(i + 1);
    bool neg = q < 0;
    if (neg) q = -q;
    std::string num = q.get_num() == 1 ? "" : q.get_num().get_str();
    std::string den = q.get_den() == 1 ? "" : "/" + q.get_den().get_str();
    s += (neg ? "-" : (s.empty() ? "" : "+")) + num + var + den;
  }
  return s.empty() ? "0" : s;
}

bool dominates(const LinearForm& a, const LinearForm& b) {
  // the cone j1 >= ... >= jk >= 0 is generated by (1,..,1,0,..,0)
  Rational prefix = 0;
  for (size_t i = 0; i < std::max(a.c.size(), b.c.size()); ++i) {
    prefix += a.at(i) - b.at(i);
    if (prefix < 0) return false;
  }
  return true;
}

// ---------------------------------------------------------------- A.5 tables

namespace {

LinearForm lf(std::vector<Rational> c) { return LinearForm(std::move(c)); }
const Rational h2(1, 2);

TableRow row(int tad, std::string plan, int tcol, std::vector<int> colours, bool local, int count, int length,
             LinearForm cost) {
  TableRow r;
  r.tadpoles = tad;
  r.planarity = std::move(plan);
  r.tadpole_colour = tcol;
  r.colours = std::move(colours);
  r.local = local;
  r.count = count;
  r.length = length;
  r.cost = std::move(cost);
  return r;
}

VertexWeightTables build_tables() {
  VertexWeightTables T;
  const bool loc = true, nl = false;
  // quartic loop vertices, corners of one propagator each
  T.tables.push_back({"c4",
                      {1, 1, 1, 1},
                      {1, 1, 1, 1},
                      {row(-1, "", 0, {2, 3, 4}, loc, 3, 4, lf({0, 0, 0, 3})),
                       row(2, "planar", 1, {1}, loc, 2, 1, lf({1, 1})),
                       row(2, "planar", 1, {1}, loc, 1, 2, lf({0, 0, 0, 1})),
                       row(2, "non-planar", 1, {1}, loc, 1, 4, lf({0, 0, 0, 1})),
                       row(1, "planar", 1, {1}, loc, 1, 1, lf({1})),
                       row(1, "planar", 1, {1}, nl, 1, 1, lf({0, h2})),
                       row(1, "planar", 1, {1}, nl, 1, 2, lf({0, 0, 0, h2})),
                       row(1, "non-planar", 1, {1}, nl, 2, 2, lf({0, h2, 0, h2})),
                       row(0, "", 0, {1}, nl, 4, 1, lf({h2, h2, h2, h2}))}});
  T.tables.push_back({"c3c",
                      {1, 1, 1, 2},
                      {1, 1, 1, 1},
                      {row(-1, "", 0, {3, 4}, loc, 2, 4, lf({0, 0, 0, 2})),
                       row(-1, "", 0, {2}, nl, 1, 4, lf({0, 0, 0, h2})),
                       row(1, "planar", 1, {1}, loc, 1, 1, lf({1})),
                       row(1, "planar", 1, {1}, nl, 1, 3, lf({0, 0, 0, h2})),
                       row(1, "non-planar", 1, {1}, nl, 2, 2, lf({0, h2, 0, h2})),
                       row(0, "", 0, {1}, nl, 2, 1, lf({h2, h2})),
                       row(0, "", 0, {1}, nl, 1, 2, lf({0, 0, 0, h2}))}});
  T.tables.push_back({"c2c2_contiguous",
                      {1, 1, 2, 2},
                      {1, 1, 1, 1},
                      {row(-1, "", 0, {3, 4}, loc, 2, 4, lf({0, 0, 0, 2})),
                       row(2, "", 0, {1}, loc, 1, 1, lf({1})),
                       row(2, "", 0, {1}, loc, 1, 3, lf({0, 0, 0, 1})),
                       row(2, "", 0, {2}, loc, 1, 1, lf({0, 1})),
                       row(2, "", 0, {2}, loc, 1, 3, lf({0, 0, 0, 1})),
                       row(1, "", 1, {1}, loc, 1, 1, lf({1})),
                       row(1, "", 1, {1}, loc, 1, 3, lf({0, 0, 0, 1})),
                       row(1, "", 1, {2}, nl, 1, 1, lf({0, h2})),
                       row(1, "", 1, {2}, nl, 1, 3, lf({0, 0, 0, h2})),
                       row(0, "", 0, {1}, nl, 1, 1, lf({h2})),
                       row(0, "", 0, {1}, nl, 1, 3, lf({0, 0, 0, h2})),
                       row(0, "", 0, {2}, nl, 1, 1, lf({0, h2})),
                       row(0, "", 0, {2}, nl, 1, 3, lf({0, 0, 0, h2}))}});
  T.tables.push_back({"c2c2_alternating",
                      {1, 2, 1, 2},
                      {1, 1, 1, 1},
                      {row(-1, "", 0, {3, 4}, loc, 2, 4, lf({0, 0, 0, 2})),
                       row(2, "", 0, {1}, loc, 2, 2, lf({0, 1, 0, 1})),
                       row(2, "", 0, {2}, loc, 2, 2, lf({0, 0, 1, 1})),
                       row(1, "", 1, {1}, loc, 2, 2, lf({0, 1, 0, 1})),
                       row(1, "", 1, {2}, nl, 2, 2, lf({0, 0, h2, h2})),
                       row(0, "", 0, {1}, nl, 2, 2, lf({0, h2, 0, h2})),
                       row(0, "", 0, {2}, nl, 2, 2, lf({0, 0, h2, h2}))}});
  T.tables.push_back({"c2cc_contiguous",
                      {1, 1, 2, 3},
                      {1, 1, 1, 1},
                      {row(-1, "", 0, {4}, loc, 1, 4, lf({0, 0, 0, 1})),
                       row(-1, "", 0, {2}, nl, 1, 4, lf({0, 0, 0, h2})),
                       row(-1, "", 0, {3}, nl, 1, 4, lf({0, 0, 0, h2})),
                       row(1, "", 1, {1}, loc, 1, 1, lf({1})),
                       row(1, "", 1, {1}, loc, 1, 3, lf({0, 0, 0, 1})),
                       row(0, "", 0, {1}, nl, 1, 1, lf({h2})),
                       row(0, "", 0, {1}, nl, 1, 3, lf({0, 0, 0, h2}))}});
  T.tables.push_back({"c2cc_alternating",
                      {1, 2, 1, 3},
                      {1, 1, 1, 1},
                      {row(-1, "", 0, {4}, loc, 1, 4, lf({0, 0, 0, 1})),
                       row(-1, "", 0, {2}, nl, 1, 4, lf({0, 0, 0, h2})),
                       row(-1, "", 0, {3}, nl, 1, 4, lf({0, 0, 0, h2})),
                       row(1, "", 1, {1}, loc, 2, 2, lf({0, 1, 0, 1})),
                       row(0, "", 0, {1}, nl, 2, 2, lf({0, h2, 0, h2}))}});
  T.tables.push_back({"cccc", {1, 2, 3, 4}, {1, 1, 1, 1}, {row(0, "", 0, {1, 2, 3, 4}, nl, 4, 4, lf({0, 0, 0, 2}))}});
  // quadratic vertices: the D-type insertion splits one corner into two
  // propagators of equal scale
  T.tables.push_back({"c2",
                      {1, 1},
                      {1, 2},
                      {row(-1, "", 0, {2, 3, 4}, loc, 3, 3, lf({0, 3})),
                       row(1, "", 0, {1}, loc, 1, 1, lf({1})),
                       row(1, "", 0, {1}, loc, 1, 2, lf({0, 1})),
                       row(0, "", 0, {1}, nl, 1, 1, lf({h2})),
                       row(0, "", 0, {1}, nl, 1, 2, lf({0, h2}))}});
  T.tables.push_back({"cc",
                      {1, 2},
                      {1, 2},
                      {row(0, "", 0, {3, 4}, loc, 2, 3, lf({0, 2})), row(0, "", 0, {1, 2}, nl, 2, 3, lf({0, 1}))}});
  T.tables.push_back({"degree_one",
                      {1},
                      {2},
                      {row(0, "", 0, {2, 3, 4}, loc, 3, 2, lf({3})), row(0, "", 0, {1}, nl, 1, 2, lf({h2}))}});
  // cubic vertices (worst costs stated in the text only)
  T.tables.push_back({"c3", {1, 1, 1}, {1, 1, 1}, {}});
  T.tables.push_back({"c2c", {1, 1, 2}, {1, 1, 1}, {}});
  T.tables.push_back({"ccc", {1, 2, 3}, {1, 1, 1}, {}});

  auto S = [&](std::string name, std::vector<std::string> tabs, std::optional<LinearForm> with,
               std::optional<LinearForm> without, std::optional<LinearForm> ww = {},
               std::optional<LinearForm> wo = {}) {
    T.summaries.push_back({std::move(name), std::move(tabs), with, without, ww, wo});
  };
  const Rational q32(3, 2), q72(7, 2);
  S("U4 c^4", {"c4"}, lf({1, 1, 0, 4}), lf({h2, h2, h2, q72}));
  S("U4 c1^3c2", {"c3c"}, lf({1, 0, 0, 3}), lf({h2, h2, 0, 3}));
  S("U4 c1^2c2^2", {"c2c2_contiguous", "c2c2_alternating"}, lf({1, 1, 0, 4}), lf({h2, h2, 0, 3}));
  S("U4 c1^2c2c3", {"c2cc_contiguous", "c2cc_alternating"}, lf({1, 0, 0, 3}), lf({h2, 0, 0, Rational(5, 2)}));
  S("U4 c1c2c3c4", {"cccc"}, std::nullopt, lf({0, 0, 0, 2}));
  S("U4",
    {"c4", "c3c", "c2c2_contiguous", "c2c2_alternating", "c2cc_contiguous", "c2cc_alternating", "cccc"},
    lf({1, 1, 0, 4}), lf({h2, h2, h2, q72}), lf({-1, -1, -2, 2}), lf({-q32, -q32, -q32, q32}));
  S("U3 c^3", {"c3"}, lf({1, 0, q72}), lf({h2, h2, q72}), lf({-1, -2, q32}));
  S("U3 c1^2c2", {"c2c"}, lf({1, 0, q72}), lf({h2, 0, 3}), lf({-1, -2, q32}));
  S("U3 c1c2c3", {"ccc"}, std::nullopt, lf({0, 0, Rational(5, 2)}), std::nullopt, lf({-2, -2, h2}));
  S("U2", {"c2", "cc"}, lf({1, 4}), lf({h2, q72}));
  S("U1", {"degree_one"}, std::nullopt, lf({q72}));
  return T;
}

}  // namespace

const VertexTable& VertexWeightTables::table(const std::string& name) const {
  for (const auto& t : tables)
    if (t.name == name) return t;
  throw std::invalid_argument("unknown vertex table " + name);
}

const VertexWeightTables& vertex_weight_tables() {
  static const VertexWeightTables t = build_tables();
  return t;
}

ColouredMap vertex_map(const VertexTable& t, const std::vector<std::pair<int, int>>& tadpoles) {
  const int r = int(t.colours.size());
  std::vector<int> rot(r);
  std::iota(rot.begin(), rot.end(), 0);
  std::vector<MapEdge> edges;
  for (auto [a, b] : tadpoles) {
    if (a < 0 || b < 0 || a >= r || b >= r || a == b) throw std::invalid_argument("bad tadpole");
    if (t.colours[a] != t.colours[b]) throw std::invalid_argument("a tadpole joins insertions of one colour");
    edges.push_back(MapEdge{a, b, EdgeColour{t.colours[a], false}, false});
  }
  std::vector<Corner> corners;
  for (int i = 0; i < r; ++i) {
    Corner c;
    c.items.clear();
    for (int k = 0; k < t.corner_lvcs[i]; ++k) {
      if (k) c.items.push_back({CornerKind::D1_block, 0});
      c.items.push_back({k == 0 && i == 0 ? CornerKind::prop_exact : CornerKind::prop_leq, 0});
    }
    corners.push_back(std::move(c));
  }
  return ColouredMap({rot}, edges, {corners});
}

LegColours vertex_legs(const VertexTable& t, const std::vector<std::pair<int, int>>& tadpoles) {
  LegColours legs;
  for (int i = 0; i < int(t.colours.size()); ++i) legs[i] = t.colours[i];
  for (auto [a, b] : tadpoles) legs.erase(a), legs.erase(b);
  return legs;
}

std::vector<std::vector<std::pair<int, int>>> wick_patterns(const VertexTable& t) {
  const int r = int(t.colours.size());
  std::vector<std::vector<std::pair<int, int>>> out;
  std::vector<std::pair<int, int>> cur;
  std::vector<char> used(r, 0);
  auto rec = [&](auto&& self, int from) -> void {
    out.push_back(cur);
    for (int a = from; a < r; ++a) {
      if (used[a]) continue;
      for (int b = a + 1; b < r; ++b) {
        if (used[b] || t.colours[a] != t.colours[b]) continue;
        used[a] = used[b] = 1;
        cur.emplace_back(a, b);
        self(self, a + 1);
        cur.pop_back();
        used[a] = used[b] = 0;
      }
    }
  };
  rec(rec, 0);
  return out;
}

std::string planarity(const VertexTable& t, const std::vector<std::pair<int, int>>& tadpoles) {
  const int r = int(t.colours.size());
  std::vector<char> in_tad(r, 0);
  for (auto [a, b] : tadpoles) in_tad[a] = in_tad[b] = 1;
  for (auto [a, b] : tadpoles) {
    for (auto [c, d] : tadpoles) {
      bool cross = (a < c && c < b && b < d) || (c < a && a < d && d < b);
      if (cross) return "non-planar";
    }
    // one of the two sides must hold no external insertion
    bool inside = false, outside = false;
    for (int x = 0; x < r; ++x) {
      if (in_tad[x]) continue;
      (a < x && x < b ? inside : outside) = true;
    }
    if (inside && outside) return "non-planar";
  }
  return "planar";
}

namespace {

struct PatternForm {
  int pattern = 0;
  std::vector<int> perm;
  LinearForm total;
  std::vector<std::pair<const Strand*, LinearForm>> strand_costs;
};

struct PatternData {
  std::vector<std::pair<int, int>> tadpoles;
  ColouredMap map;
  std::vector<Strand> strands;
  std::vector<Lvc> lvcs;
};

// every scale placement: corner i carries j_{perm[i]+1}
std::vector<PatternForm> pattern_forms(const std::vector<PatternData>& pats, const std::vector<int>& which, int r) {
  std::vector<PatternForm> out;
  std::vector<int> perm(r);
  for (int p : which) {
    std::iota(perm.begin(), perm.end(), 0);
    do {
      PatternForm f;
      f.pattern = p;
      f.perm = perm;
      f.total.c.assign(r, 0);
      for (const auto& s : pats[p].strands) {
        int worst = -1;  // largest index = smallest scale
        for (int l : s.lvcs) worst = std::max(worst, perm[pats[p].lvcs[l].corner]);
        LinearForm c;
        c.c.assign(r, 0);
        c.c[worst] = s.local() ? Rational(1) : Rational(1, 2);
        f.total = f.total + c;
        f.strand_costs.emplace_back(&s, c);
      }
      out.push_back(std::move(f));
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return out;
}

std::optional<LinearForm> dominating(const std::vector<PatternForm>& forms) {
  for (const auto& a : forms) {
    bool all = true;
    for (const auto& b : forms)
      if (!dominates(a.total, b.total)) {
        all = false;
        break;
      }
    if (all) return a.total;
  }
  return std::nullopt;
}

std::vector<PatternData> pattern_data(const VertexTable& t) {
  std::vector<PatternData> out;
  for (auto& tp : wick_patterns(t)) {
    PatternData d{tp, vertex_map(t, tp), {}, {}};
    d.strands = all_strands(d.map, vertex_legs(t, tp));
    d.lvcs = lvcs(d.map);
    out.push_back(std::move(d));
  }
  return out;
}

bool tadpole_colour_ok(const VertexTable& t, const std::vector<std::pair<int, int>>& tp, int colour) {
  if (colour == 0) return true;
  for (auto [a, b] : tp)
    if (t.colours[a] != colour) return false;
  return true;
}

// do the strands of this placement split into the rows, count and cost?
bool rows_fit(const PatternForm& f, const std::vector<const TableRow*>& rows, std::string& why) {
  std::vector<int> count(rows.size(), 0);
  std::vector<LinearForm> cost(rows.size());
  for (const auto& [s, c] : f.strand_costs) {
    int hit = -1;
    for (size_t k = 0; k < rows.size(); ++k) {
      const auto& r = *rows[k];
      bool colour = std::find(r.colours.begin(), r.colours.end(), s->colour) != r.colours.end();
      if (colour && r.local == s->local() && r.length == s->length()) {
        hit = int(k);
        break;
      }
    }
    if (hit < 0) {
      why = "face of colour " + std::to_string(s->colour) + (s->local() ? " local" : " non-local") + " length " +
            std::to_string(s->length()) + " matches no row";
      return false;
    }
    ++count[hit];
    cost[hit] = cost[hit] + c;
  }
  for (size_t k = 0; k < rows.size(); ++k) {
    if (count[k] != rows[k]->count || !(cost[k] == rows[k]->cost)) {
      why = "row " + std::to_string(k) + ": " + std::to_string(count[k]) + " faces costing " + cost[k].str() +
            ", table has " + std::to_string(rows[k]->count) + " costing " + rows[k]->cost.str();
      return false;
    }
  }
  return true;
}

}  // namespace

TableCheck regenerate_table(const VertexTable& t) {
  TableCheck out;
  out.name = t.name;
  const int r = int(t.colours.size());
  auto pats = pattern_data(t);
  std::vector<const TableRow*> always;
  std::set<std::tuple<int, std::string, int>> keys;
  for (const auto& row : t.rows) {
    if (row.tadpoles < 0)
      always.push_back(&row);
    else
      keys.insert({row.tadpoles, row.planarity, row.tadpole_colour});
  }
  for (const auto& [tad, plan, tcol] : keys) {
    CaseCheck cc;
    cc.tadpoles = tad;
    cc.planarity = plan;
    cc.tadpole_colour = tcol;
    std::vector<const TableRow*> rows = always;
    for (const auto& row : t.rows)
      if (row.tadpoles == tad && row.planarity == plan && row.tadpole_colour == tcol) rows.push_back(&row);
    cc.expected.c.assign(r, 0);
    for (const auto* row : rows) cc.expected = cc.expected + row->cost;
    std::vector<int> which;
    for (int p = 0; p < int(pats.size()); ++p) {
      const auto& tp = pats[p].tadpoles;
      if (int(tp.size()) != tad) continue;
      if (!plan.empty() && planarity(t, tp) != plan) continue;
      if (!tadpole_colour_ok(t, tp, tcol)) continue;
      which.push_back(p);
    }
    if (which.empty()) {
      cc.detail = "no Wick pattern in this case";
      out.cases.push_back(cc);
      out.ok = false;
      continue;
    }
    auto forms = pattern_forms(pats, which, r);
    cc.worst = dominating(forms);
    if (!cc.worst) {
      cc.detail = "no single worst placement";
    } else if (!(*cc.worst == cc.expected)) {
      cc.detail = "worst " + cc.worst->str() + ", table " + cc.expected.str();
    } else {
      std::string why;
      for (const auto& f : forms) {
        if (!(f.total == *cc.worst)) continue;
        if (rows_fit(f, rows, why)) {
          cc.rows_match = true;
          break;
        }
      }
      if (!cc.rows_match) cc.detail = why;
    }
    out.ok = out.ok && cc.rows_match;
    out.cases.push_back(cc);
  }
  return out;
}

SummaryCheck regenerate_summary(const VertexSummary& s) {
  SummaryCheck out;
  out.name = s.name;
  const auto& T = vertex_weight_tables();
  std::vector<PatternForm> with, without;
  int r = 0;
  for (const auto& name : s.tables) {
    const auto& t = T.table(name);
    r = int(t.colours.size());
    auto pats = pattern_data(t);
    std::vector<int> w, wo;
    for (int p = 0; p < int(pats.size()); ++p) (pats[p].tadpoles.empty() ? wo : w).push_back(p);
    for (auto& f : pattern_forms(pats, w, r)) with.push_back(std::move(f));
    for (auto& f : pattern_forms(pats, wo, r)) without.push_back(std::move(f));
  }
  auto check = [&](const char* what, const std::vector<PatternForm>& forms, const std::optional<LinearForm>& want,
                   std::optional<LinearForm>& got) {
    if (forms.empty()) {
      if (want) {
        out.ok = false;
        out.detail += std::string(what) + ": no pattern; ";
      }
      return;
    }
    got = dominating(forms);
    if (!want) return;
    if (!got || !(*got == *want)) {
      out.ok = false;
      out.detail += std::string(what) + ": regenerated " + (got ? got->str() : "none") + ", stated " + want->str() + "; ";
    }
  };
  check("with tadpole", with, s.with_tadpole, out.with_tadpole);
  check("without tadpole", without, s.without_tadpole, out.without_tadpole);
  LinearForm props;
  props.c.assign(r, -2);
  auto weight = [&](const char* what, const std::optional<LinearForm>& face, const std::optional<LinearForm>& want,
                    std::optional<LinearForm>& got) {
    if (!want) return;
    if (!face) {
      out.ok = false;
      out.detail += std::string(what) + ": no face cost; ";
      return;
    }
    got = *face + props;
    if (!(*got == *want)) {
      out.ok = false;
      out.detail += std::string(what) + ": regenerated " + got->str() + ", stated " + want->str() + "; ";
    }
  };
  weight("weight with tadpole", out.with_tadpole, s.weight_with, out.weight_with);
  weight("weight without tadpole", out.without_tadpole, s.weight_without, out.weight_without);
  return out;
}

namespace {

nlohmann::json form_json(const LinearForm& f) {
  nlohmann::json c = nlohmann::json::array();
  for (const auto& q : f.c) c.push_back(to_string(q));
  return {{"form", f.str()}, {"coefficients", c}};
}

}  // namespace

nlohmann::json to_json(const VertexWeightTables& T) {
  nlohmann::json out;
  for (const auto& t : T.tables) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows)
      rows.push_back({{"tadpoles", r.tadpoles},
                      {"planarity", r.planarity},
                      {"tadpole_colour", r.tadpole_colour},
                      {"colours", r.colours},
                      {"locality", r.local ? "local" : "non-local"},
                      {"count", r.count},
                      {"length", r.length},
                      {"worst_cost", form_json(r.cost)}});
    out["tables"].push_back({{"name", t.name}, {"colours", t.colours}, {"corner_lvcs", t.corner_lvcs}, {"rows", rows}});
  }
  for (const auto& s : T.summaries) {
    nlohmann::json j{{"name", s.name}, {"tables", s.tables}};
    if (s.with_tadpole) j["with_tadpole"] = form_json(*s.with_tadpole);
    if (s.without_tadpole) j["without_tadpole"] = form_json(*s.without_tadpole);
    if (s.weight_with) j["weight_with"] = form_json(*s.weight_with);
    if (s.weight_without) j["weight_without"] = form_json(*s.weight_without);
    out["summaries"].push_back(j);
  }
  return out;
}

nlohmann::json to_json(const TableCheck& c) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& k : c.cases)
    cases.push_back({{"tadpoles", k.tadpoles},
                     {"planarity", k.planarity},
                     {"tadpole_colour", k.tadpole_colour},
                     {"regenerated", k.worst ? k.worst->str() : "none"},
                     {"table", k.expected.str()},
                     {"match", k.rows_match},
                     {"detail", k.detail}});
  return {{"table", c.name}, {"ok", c.ok}, {"cases", cases}};
}

// ---------------------------------------------------------------- spare power counting

SpareReport spare_check(const ColouredMap& g) {
  if (g.num_external() != 0) throw std::invalid_argument("spare_check needs a vacuum graph");
  if (classify(g) != DivergenceClass::convergent)
    throw std::invalid_argument("divergent graph: its renormalized amplitude vanishes, the check does not apply");
  auto L = lvcs(g);
  SpareReport r;
  r.per_line.assign(L.size(), 0);
  for (const auto& s : all_strands(g)) {
    const Rational w(1, s.length());
    for (int l : s.lvcs) r.per_line[l] += w;
  }
  for (const auto& rot : g.rotation()) r.melonic_subgraph = r.melonic_subgraph || rot.size() == 1;
  for (auto& q : r.per_line) {
    q.canonicalize();
    r.max_sum = std::max(r.max_sum, q);
    if (q > SpareReport::threshold()) ++r.violations;
  }
  r.ok = r.melonic_subgraph || r.violations == 0;
  return r;
}

SpareSurvey spare_survey(int max_order) {
  SpareSurvey s;
  for (int n = 1; n <= max_order; ++n)
    for (const auto& g : enumerate_vacuum_maps(n)) {
      ++s.graphs;
      if (classify(g) != DivergenceClass::convergent) {
        ++s.divergent;
        continue;
      }
      ++s.convergent;
      auto r = spare_check(g);
      s.failures += !r.ok;
      s.with_melonic_subgraph += r.melonic_subgraph;
      if (!r.melonic_subgraph) s.max_sum = std::max(s.max_sum, r.max_sum);
    }
  return s;
}

// ---------------------------------------------------------------- scaling probe

namespace {

ColouredMap pair_graph(int r, const std::vector<std::vector<CornerLabel>>& corner_items) {
  std::vector<int> a(r), b(r);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), r);
  std::vector<Corner> cs;
  for (const auto& items : corner_items) cs.push_back(Corner{items, -1});
  // the pairing with the most faces (planar)
  ColouredMap best;
  int best_faces = -1;
  std::vector<int> perm = b;
  do {
    std::vector<MapEdge> edges;
    for (int i = 0; i < r; ++i) edges.push_back(MapEdge{a[i], perm[i], EdgeColour{1, false}, false});
    ColouredMap m({a, b}, edges, {cs, cs});
    int f = int(strands(m, 1).size());
    if (f > best_faces) {
      best_faces = f;
      best = m;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

ProbeFamily u1_pair_family() {
  ProbeFamily f;
  f.name = "U1 pair";
  f.graph = pair_graph(1, {{{CornerKind::prop_exact, 0}, {CornerKind::D1_block, 0}, {CornerKind::D1_block, 0}}});
  f.varying = {1, 1};
  return f;
}

ProbeFamily u3_pair_family() {
  ProbeFamily f;
  f.name = "U3 pair";
  f.graph = pair_graph(3, {{{CornerKind::prop_exact, 0}}, {{CornerKind::prop_leq, 0}}, {{CornerKind::prop_leq, 0}}});
  f.varying = {1, 1};
  return f;
}

ProbeFamily flat_family() {
  ProbeFamily f = u3_pair_family();
  f.name = "flat";
  f.varying = {0, 0};
  return f;
}

double predicted_exponent(const ProbeFamily& f, double eps) {
  const auto& g = f.graph;
  double sum = 0;
  for (int v = 0; v < g.num_vertices(); ++v) {
    if (!f.varying.at(v)) continue;
    const int r = int(g.rotation()[v].size());
    bool tad = false;
    for (int h : g.rotation()[v])
      if (!g.is_external(h) && g.vertex_of(g.alpha(h)) == v) tad = true;
    double c = 0;
    if (r == 1) c = 1;
    if (r == 2) c = 3 - (1 + eps) * tad;
    if (r == 3 || r == 4) c = 3 - double(tad);
    sum += c;
  }
  return -0.5 * sum;
}

double evaluate_amplitude(const ColouredMap& g, const std::vector<int>& js, int M, const RenormAmplitude* ra,
                          cplx coupling) {
  if (g.num_external() != 0) throw std::invalid_argument("evaluate_amplitude needs a vacuum graph");
  if (int(js.size()) != g.num_vertices()) throw std::invalid_argument("one scale per vertex is required");
  const int V = g.num_vertices();
  bool has_d = false;
  for (int v = 0; v < V; ++v)
    for (const auto& c : g.corners()[v]) {
      int props = 0;
      for (const auto& it : c.items) {
        if (is_prop(it.kind))
          ++props;
        else if (is_d(it.kind))
          has_d = true;
        else
          throw std::invalid_argument("only propagators and D-type blocks can be evaluated");
      }
      if (!props) throw std::invalid_argument("every corner needs a propagator");
    }
  std::vector<long> nmax(V);
  int K = 0;
  for (int v = 0; v < V; ++v) {
    if (js[v] < 1) throw std::invalid_argument("vertex scales start at 1");
    nmax[v] = ipow(M, 2 * js[v]) - 1;
    K = std::max(K, int(std::floor(std::sqrt(double(nmax[v])))));
  }
  if (has_d && (!ra || int(ra->a1.size()) <= K)) throw std::invalid_argument("renormalized amplitudes up to the cutoff are needed");

  // faces; corner_face[v][i][c-1]
  std::vector<std::vector<std::array<int, 4>>> corner_face(V);
  for (int v = 0; v < V; ++v) corner_face[v].resize(g.corners()[v].size());
  std::vector<int> around_of;  // -1 for outer faces, else the vertex
  int F = 0;
  for (int c = 1; c <= 4; ++c)
    for (const auto& t : trace_corners(g, c, {})) {
      std::set<int> vs;
      for (const auto& fc : t.corners) {
        corner_face[fc.vertex][fc.position][c - 1] = F;
        vs.insert(fc.vertex);
      }
      int v = *vs.begin();
      bool around = vs.size() == 1 && t.corners.size() == g.corners()[v].size();
      for (int h : g.rotation()[v])
        if (g.edges()[g.edge_of(h)].colour.contains(c)) around = false;
      around_of.push_back(around ? v : -1);
      ++F;
    }
  std::vector<int> outer;
  std::vector<std::vector<int>> around(V);
  for (int f = 0; f < F; ++f) (around_of[f] < 0 ? outer : around[around_of[f]]).push_back(f);

  const double gabs = std::abs(coupling);
  auto corner_weight = [&](int v, int i, long q, const std::array<int, 4>& comp) {
    double w = 1.0 / double(q + 1);
    for (const auto& it : g.corners()[v][i].items) {
      if (it.kind == CornerKind::prop_exact && !slice_indicator(js[v], q, M, SliceMode::exact)) return 0.0;
      if (it.kind == CornerKind::prop_leq && !slice_indicator(js[v], q, M, SliceMode::leq)) return 0.0;
      if (it.kind == CornerKind::D1_block) {
        double s = 0;
        for (int x : comp) s += ra->m1(x);
        w *= gabs * std::abs(s) / double(q + 1);
      }
      if (it.kind == CornerKind::D2_block) {
        double s = 0;
        for (int x : comp) s += ra->m2(x);
        w *= gabs * gabs * std::abs(s) / double(q + 1);
      }
    }
    return w;
  };

  std::vector<int> val(F, 0);
  std::map<int, std::vector<long>> shells;
  for (int v = 0; v < V; ++v)
    if (!around[v].empty() && !shells.count(int(around[v].size())))
      shells[int(around[v].size())] = box_shell_counts(int(around[v].size()), K);

  auto norm_of = [&](int v, int i) {
    long q = 0;
    for (int c = 0; c < 4; ++c) q += long(val[corner_face[v][i][c]]) * val[corner_face[v][i][c]];
    return q;
  };
  auto components = [&](int v, int i) {
    std::array<int, 4> a{};
    for (int c = 0; c < 4; ++c) a[c] = val[corner_face[v][i][c]];
    return a;
  };
  auto vertex_has_d = [&](int v) {
    for (const auto& c : g.corners()[v])
      for (const auto& it : c.items)
        if (is_d(it.kind)) return true;
    return false;
  };

  // sum over the faces running all around v
  auto inner = [&](int v) {
    const auto& A = around[v];
    const int nc = int(g.corners()[v].size());
    if (A.empty()) {
      double w = 1;
      for (int i = 0; i < nc; ++i) w *= corner_weight(v, i, norm_of(v, i), components(v, i));
      return w;
    }
    if (!vertex_has_d(v)) {
      std::vector<long> base(nc);
      long top = 0;
      for (int i = 0; i < nc; ++i) {
        base[i] = norm_of(v, i);
        top = std::max(top, base[i]);
      }
      const auto& cnt = shells.at(int(A.size()));
      double total = 0;
      std::array<int, 4> none{};
      for (long s = 0; s + top <= nmax[v] && s < long(cnt.size()); ++s) {
        if (!cnt[s]) continue;
        double w = double(cnt[s]);
        for (int i = 0; i < nc && w != 0; ++i) w *= corner_weight(v, i, base[i] + s, none);
        total += w;
      }
      return total;
    }
    double total = 0;
    auto rec = [&](auto&& self, size_t k, double mult) -> void {
      if (k == A.size()) {
        double w = mult;
        for (int i = 0; i < nc && w != 0; ++i) w *= corner_weight(v, i, norm_of(v, i), components(v, i));
        total += w;
        return;
      }
      for (int x = 0; x <= K; ++x) {
        val[A[k]] = x;
        bool over = false;
        for (int i = 0; i < nc; ++i) over = over || norm_of(v, i) > nmax[v];
        if (over) break;
        self(self, k + 1, mult * (x ? 2.0 : 1.0));
      }
      val[A[k]] = 0;
    };
    rec(rec, 0, 1.0);
    return total;
  };

  double amp = 0;
  auto outer_rec = [&](auto&& self, size_t k, double mult) -> void {
    if (k == outer.size()) {
      double w = mult;
      for (int v = 0; v < V && w != 0; ++v) w *= inner(v);
      amp += w;
      return;
    }
    for (int x = 0; x <= K; ++x) {
      val[outer[k]] = x;
      bool over = false;
      for (int v = 0; v < V && !over; ++v)
        for (int i = 0; i < int(g.corners()[v].size()); ++i) over = over || norm_of(v, i) > nmax[v];
      if (over) break;
      self(self, k + 1, mult * (x ? 2.0 : 1.0));
    }
    val[outer[k]] = 0;
  };
  outer_rec(outer_rec, 0, 1.0);
  return amp;
}

ProbeResult scaling_probe(const ProbeFamily& f, const ProbeOptions& opt) {
  if (opt.M < 2 || opt.j_min < 1 || opt.j_max <= opt.j_min) throw std::invalid_argument("bad probe range");
  if (int(f.varying.size()) != f.graph.num_vertices()) throw std::invalid_argument("varying flags per vertex");
  bool has_d = false;
  for (const auto& cs : f.graph.corners())
    for (const auto& c : cs)
      for (const auto& it : c.items) has_d = has_d || is_d(it.kind);
  if (!has_d && classify(f.graph) != DivergenceClass::convergent)
    throw std::invalid_argument("the probe needs a convergent family");
  ProbeResult r;
  r.family = f.name;
  r.predicted = predicted_exponent(f, opt.eps);
  std::optional<RenormAmplitude> ra;
  if (has_d) {
    const int top = int(ipow(opt.M, std::max(opt.j_max, f.fixed_scale)));
    ra = renorm_amplitudes(top + 1, opt.aux_cut > 0 ? opt.aux_cut : 2 * top);
  }
  const double lm = std::log(double(opt.M));
  for (int j = opt.j_min; j <= opt.j_max; ++j) {
    std::vector<int> js;
    for (int v = 0; v < f.graph.num_vertices(); ++v) js.push_back(f.varying[v] ? j : f.fixed_scale);
    double a = evaluate_amplitude(f.graph, js, opt.M, ra ? &*ra : nullptr);
    if (!(a > 0)) throw std::runtime_error("amplitude vanished at j = " + std::to_string(j));
    r.points.emplace_back(j, std::log(a) / lm);
  }
  const double n = double(r.points.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [j, y] : r.points) {
    sx += j;
    sy += y;
    sxx += double(j) * j;
    sxy += j * y;
  }
  r.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  r.intercept = (sy - r.slope * sx) / n;
  r.tail_slope = r.points.back().second - r.points[r.points.size() - 2].second;
  r.ok = r.slope <= r.predicted + opt.tolerance;
  r.within = std::abs(r.slope - r.predicted) <= opt.tolerance;
  return r;
}

nlohmann::json to_json(const ProbeResult& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (auto [j, y] : r.points) pts.push_back({{"j", j}, {"log_amplitude", y}});
  return {{"family", r.family}, {"points", pts}, {"slope", r.slope}, {"intercept", r.intercept},
          {"tail_slope", r.tail_slope},
          {"predicted", r.predicted}, {"ok", r.ok}, {"within", r.within}};
}

}  // namespace mlve
