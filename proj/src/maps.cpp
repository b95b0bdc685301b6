#include "mlve/maps.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <tbb/parallel_for.h>

namespace mlve {

namespace {

struct UnionFind {
  std::vector<int> p;
  explicit UnionFind(int n) : p(n) { std::iota(p.begin(), p.end(), 0); }
  int find(int x) { return p[x] == x ? x : p[x] = find(p[x]); }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    p[a] = b;
    return true;
  }
};

const std::vector<std::pair<CornerKind, std::string>> kCornerNames = {
    {CornerKind::prop_leq, "prop_leq"},         {CornerKind::prop_exact, "prop_exact"},
    {CornerKind::delta_insertion, "delta"},     {CornerKind::sigma_plus_B, "sigma_plus_B"},
    {CornerKind::resolvent, "resolvent"},       {CornerKind::resolvent_dagger, "resolvent_dagger"},
    {CornerKind::D1_block, "D1"},               {CornerKind::D2_block, "D2"},
    {CornerKind::renorm_block, "renorm"},
};

}  // namespace

std::string to_string(CornerKind k) {
  for (const auto& [kind, name] : kCornerNames)
    if (kind == k) return name;
  return "?";
}

CornerKind corner_kind_from_string(const std::string& s) {
  for (const auto& [kind, name] : kCornerNames)
    if (name == s) return kind;
  throw std::invalid_argument("unknown corner label: " + s);
}

bool Face::local_to(int vertex) const {
  return std::all_of(corners.begin(), corners.end(), [&](const FaceCorner& c) { return c.vertex == vertex; });
}

ColouredMap::ColouredMap(std::vector<std::vector<int>> rotation, std::vector<MapEdge> edges)
    : rot_(std::move(rotation)), edges_(std::move(edges)) {
  corners_.resize(rot_.size());
  for (size_t v = 0; v < rot_.size(); ++v) corners_[v].assign(std::max<size_t>(1, rot_[v].size()), Corner{});
  normalize();
  index();
}

ColouredMap::ColouredMap(std::vector<std::vector<int>> rotation, std::vector<MapEdge> edges,
                         std::vector<std::vector<Corner>> corners)
    : rot_(std::move(rotation)), edges_(std::move(edges)), corners_(std::move(corners)) {
  if (corners_.size() != rot_.size()) throw std::invalid_argument("corner list does not match vertices");
  for (size_t v = 0; v < rot_.size(); ++v)
    if (corners_[v].size() != std::max<size_t>(1, rot_[v].size()))
      throw std::invalid_argument("vertex " + std::to_string(v) + " has the wrong number of corners");
  normalize();
  index();
}

void ColouredMap::normalize() {
  // start each rotation at its smallest dart; vertices ordered by that dart,
  // isolated vertices last in their original order
  for (size_t v = 0; v < rot_.size(); ++v) {
    auto& r = rot_[v];
    if (r.empty()) continue;
    auto it = std::min_element(r.begin(), r.end());
    long shift = it - r.begin();
    std::rotate(r.begin(), it, r.end());
    std::rotate(corners_[v].begin(), corners_[v].begin() + shift, corners_[v].end());
  }
  std::vector<size_t> order(rot_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (rot_[a].empty() || rot_[b].empty()) return !rot_[a].empty() && rot_[b].empty();
    return rot_[a][0] < rot_[b][0];
  });
  std::vector<std::vector<int>> r2;
  std::vector<std::vector<Corner>> c2;
  for (size_t v : order) {
    r2.push_back(std::move(rot_[v]));
    c2.push_back(std::move(corners_[v]));
  }
  rot_ = std::move(r2);
  corners_ = std::move(c2);
}

void ColouredMap::index() {
  int H = 0;
  for (const auto& r : rot_) H += int(r.size());
  sigma_.assign(H, -1);
  vertex_.assign(H, -1);
  pos_.assign(H, -1);
  for (size_t v = 0; v < rot_.size(); ++v) {
    const auto& r = rot_[v];
    for (size_t i = 0; i < r.size(); ++i) {
      int h = r[i];
      if (h < 0 || h >= H) throw std::invalid_argument("half-edge ids must be 0..H-1");
      if (vertex_[h] >= 0) throw std::invalid_argument("half-edge " + std::to_string(h) + " appears twice");
      vertex_[h] = int(v);
      pos_[h] = int(i);
      sigma_[h] = r[(i + 1) % r.size()];
    }
  }
  alpha_.resize(H);
  std::iota(alpha_.begin(), alpha_.end(), 0);
  edge_of_.assign(H, -1);
  for (size_t e = 0; e < edges_.size(); ++e) {
    auto [a, b] = std::pair{edges_[e].h1, edges_[e].h2};
    if (a < 0 || b < 0 || a >= H || b >= H || a == b) throw std::invalid_argument("bad edge");
    if (edge_of_[a] >= 0 || edge_of_[b] >= 0) throw std::invalid_argument("half-edge in two edges");
    if (edges_[e].colour.c < 1 || edges_[e].colour.c > 4) throw std::invalid_argument("colour out of range");
    edge_of_[a] = edge_of_[b] = int(e);
    alpha_[a] = b;
    alpha_[b] = a;
  }
}

int ColouredMap::num_external() const {
  return int(std::count(edge_of_.begin(), edge_of_.end(), -1));
}

bool ColouredMap::vertex_has_external(int v) const {
  for (int h : rot_[v])
    if (is_external(h)) return true;
  return false;
}

int ColouredMap::num_components() const {
  UnionFind uf(num_vertices());
  int c = num_vertices();
  for (const auto& e : edges_) c -= uf.unite(vertex_[e.h1], vertex_[e.h2]);
  return c;
}

FaceSet faces(const ColouredMap& map, int colour) {
  if (colour < 0 || colour > 4) throw std::invalid_argument("colour must be 0..4");
  const int H = map.num_darts();
  std::vector<char> kept(H);
  for (int h = 0; h < H; ++h)
    kept[h] = map.is_external(h) || colour == 0 || map.edges()[map.edge_of(h)].colour.contains(colour);

  FaceSet fs;
  fs.colour = colour;
  std::vector<char> seen(H, 0);
  for (int h0 = 0; h0 < H; ++h0) {
    if (!kept[h0] || seen[h0]) continue;
    Face f;
    f.colour = colour;
    int h = h0;
    do {
      seen[h] = 1;
      if (map.is_external(h)) f.external = true;
      int d = map.alpha(h);
      do {
        f.corners.push_back({map.vertex_of(d), map.position_of(d)});
        d = map.sigma(d);
      } while (!kept[d]);
      h = d;
    } while (h != h0);
    fs.faces.push_back(std::move(f));
  }
  for (int v = 0; v < map.num_vertices(); ++v) {
    const auto& r = map.rotation()[v];
    if (std::any_of(r.begin(), r.end(), [&](int h) { return kept[h]; })) continue;
    Face f;
    f.colour = colour;
    for (int i = 0; i < int(map.corners()[v].size()); ++i) f.corners.push_back({v, i});
    fs.faces.push_back(std::move(f));
  }

  // Euler relation on the traced submap
  UnionFind uf(map.num_vertices());
  int comps = map.num_vertices(), e = 0;
  for (const auto& ed : map.edges())
    if (kept[ed.h1]) {
      ++e;
      comps -= uf.unite(map.vertex_of(ed.h1), map.vertex_of(ed.h2));
    }
  int twice_g = 2 * comps - map.num_vertices() + e - fs.size();
  if (twice_g < 0 || twice_g % 2) throw std::runtime_error("Euler relation violated");
  fs.genus = twice_g / 2;
  return fs;
}

int genus(const ColouredMap& map) { return faces(map).genus; }

int superficial_degree(const ColouredMap& map) {
  int props = 0;
  for (int v = 0; v < map.num_vertices(); ++v)
    if (!map.vertex_has_external(v)) props += int(map.corners()[v].size());
  int internal_faces = 0;
  for (int c = 1; c <= 4; ++c)
    for (const auto& f : faces(map, c).faces) internal_faces += !f.external;
  return internal_faces - 2 * props;
}

ColouredMap partial_dual(const ColouredMap& map, const std::vector<int>& edge_subset) {
  std::vector<char> in(map.num_edges(), 0);
  for (int e : edge_subset) {
    if (e < 0 || e >= map.num_edges()) throw std::invalid_argument("edge index out of range");
    in[e] = 1;
  }
  const int H = map.num_darts();
  auto alpha_a = [&](int h) { return !map.is_external(h) && in[map.edge_of(h)] ? map.alpha(h) : h; };

  std::vector<std::vector<int>> rot;
  std::vector<std::vector<Corner>> corners;
  std::vector<char> seen(H, 0);
  for (int h0 = 0; h0 < H; ++h0) {
    if (seen[h0]) continue;
    std::vector<int> cyc;
    std::vector<Corner> cs;
    int h = h0;
    do {
      seen[h] = 1;
      cyc.push_back(h);
      cs.push_back(map.corner_after(alpha_a(h)));
      h = map.sigma(alpha_a(h));
    } while (h != h0);
    rot.push_back(std::move(cyc));
    corners.push_back(std::move(cs));
  }
  for (int v = 0; v < map.num_vertices(); ++v)
    if (map.rotation()[v].empty()) {
      rot.emplace_back();
      corners.push_back(map.corners()[v]);
    }
  auto edges = map.edges();
  for (size_t e = 0; e < edges.size(); ++e)
    if (in[e]) edges[e].colour = edges[e].colour.flipped();
  return ColouredMap(std::move(rot), std::move(edges), std::move(corners));
}

ColouredMap full_dual(const ColouredMap& map) {
  std::vector<int> all(map.num_edges());
  std::iota(all.begin(), all.end(), 0);
  return partial_dual(map, all);
}

ColouredMap spanning_submap(const ColouredMap& map, const std::vector<int>& edge_subset) {
  std::vector<char> in(map.num_edges(), 0);
  for (int e : edge_subset) {
    if (e < 0 || e >= map.num_edges()) throw std::invalid_argument("edge index out of range");
    in[e] = 1;
  }
  const int H = map.num_darts();
  std::vector<int> relabel(H, -1);
  int next = 0;
  for (int h = 0; h < H; ++h)
    if (map.is_external(h) || in[map.edge_of(h)]) relabel[h] = next++;

  std::vector<std::vector<int>> rot;
  std::vector<std::vector<Corner>> corners;
  for (int v = 0; v < map.num_vertices(); ++v) {
    const auto& r = map.rotation()[v];
    const auto& cv = map.corners()[v];
    std::vector<int> nr;
    std::vector<Corner> nc;
    int first = -1;
    for (int i = 0; i < int(r.size()); ++i)
      if (relabel[r[i]] >= 0) {
        first = i;
        break;
      }
    if (first < 0) {
      // all half-edges removed: the corners merge into one
      Corner merged;
      merged.items.clear();
      for (const auto& c : cv) {
        merged.items.insert(merged.items.end(), c.items.begin(), c.items.end());
        if (merged.mark < 0) merged.mark = c.mark;
      }
      rot.emplace_back();
      corners.push_back({merged});
      continue;
    }
    const int deg = int(r.size());
    for (int s = 0; s < deg; ++s) {
      int i = (first + s) % deg;
      if (relabel[r[i]] >= 0) {
        nr.push_back(relabel[r[i]]);
        nc.push_back(cv[i]);
      } else {
        auto& m = nc.back();
        m.items.insert(m.items.end(), cv[i].items.begin(), cv[i].items.end());
        if (m.mark < 0) m.mark = cv[i].mark;
      }
    }
    rot.push_back(std::move(nr));
    corners.push_back(std::move(nc));
  }
  std::vector<MapEdge> edges;
  for (int e = 0; e < map.num_edges(); ++e)
    if (in[e]) {
      MapEdge me = map.edges()[e];
      me.h1 = relabel[me.h1];
      me.h2 = relabel[me.h2];
      edges.push_back(me);
    }
  return ColouredMap(std::move(rot), std::move(edges), std::move(corners));
}

ColouredMap to_chord_diagram(const ColouredMap& map, const std::vector<int>& spanning_tree) {
  std::set<int> tree(spanning_tree.begin(), spanning_tree.end());
  if (tree.size() != spanning_tree.size()) throw std::invalid_argument("repeated tree edge");
  UnionFind uf(map.num_vertices());
  for (int e : spanning_tree) {
    if (e < 0 || e >= map.num_edges()) throw std::invalid_argument("edge index out of range");
    const auto& ed = map.edges()[e];
    if (!uf.unite(map.vertex_of(ed.h1), map.vertex_of(ed.h2)))
      throw std::invalid_argument("tree edges contain a cycle");
  }
  if (map.num_vertices() - int(spanning_tree.size()) != map.num_components())
    throw std::invalid_argument("edge set does not span every component");
  auto d = partial_dual(map, spanning_tree);
  for (int e = 0; e < d.num_edges(); ++e) d.edges()[e].dashed = !tree.count(e);
  return d;
}

ColouredMap disjoint_union(const std::vector<ColouredMap>& maps) {
  std::vector<std::vector<int>> rot;
  std::vector<std::vector<Corner>> corners;
  std::vector<MapEdge> edges;
  int offset = 0;
  for (const auto& m : maps) {
    for (int v = 0; v < m.num_vertices(); ++v) {
      auto r = m.rotation()[v];
      for (int& h : r) h += offset;
      rot.push_back(std::move(r));
      corners.push_back(m.corners()[v]);
    }
    for (auto e : m.edges()) {
      e.h1 += offset;
      e.h2 += offset;
      edges.push_back(e);
    }
    offset += m.num_darts();
  }
  return ColouredMap(std::move(rot), std::move(edges), std::move(corners));
}

ColouredMap quadruple(const ColouredMap& map) { return disjoint_union({map, map, map, map}); }

std::vector<std::pair<int, int>> chord_crossings(const ColouredMap& d) {
  if (d.num_vertices() != 1) throw std::invalid_argument("not a one-vertex map");
  std::vector<std::pair<int, int>> out;
  auto span = [&](int e) {
    int a = d.position_of(d.edges()[e].h1), b = d.position_of(d.edges()[e].h2);
    return std::pair{std::min(a, b), std::max(a, b)};
  };
  for (int e = 0; e < d.num_edges(); ++e)
    for (int f = e + 1; f < d.num_edges(); ++f) {
      auto [a, b] = span(e);
      auto [c, x] = span(f);
      if ((a < c && c < b && b < x) || (c < a && a < x && x < b)) out.emplace_back(e, f);
    }
  return out;
}

ChordCut cut_chord_diagram(const ColouredMap& d, int corner_a, int corner_b) {
  if (d.num_vertices() != 1) throw std::invalid_argument("not a one-vertex map");
  const auto& r = d.rotation()[0];
  const int deg = int(r.size());
  if (corner_a < 0 || corner_b < 0 || corner_a >= deg || corner_b >= deg || corner_a == corner_b)
    throw std::invalid_argument("cut needs two distinct corners");
  std::vector<int> side(deg, 1);
  for (int p = (corner_a + 1) % deg;; p = (p + 1) % deg) {
    side[p] = 0;
    if (p == corner_b) break;
  }
  auto is_cut = [&](int h) {
    if (d.is_external(h)) return false;
    return side[d.position_of(h)] != side[d.position_of(d.alpha(h))];
  };
  ChordCut cut;
  for (int s = 1; s <= deg; ++s) {
    int p = (corner_a + s) % deg;
    if (side[p] == 0 && is_cut(r[p])) cut.arc_a.push_back(d.edge_of(r[p]));
  }
  for (int s = 0; s < deg; ++s) {
    int p = ((corner_a - s) % deg + deg) % deg;
    if (side[p] == 1 && is_cut(r[p])) cut.arc_b.push_back(d.edge_of(r[p]));
  }
  for (int e : cut.arc_a) {
    int idx = int(std::find(cut.arc_b.begin(), cut.arc_b.end(), e) - cut.arc_b.begin());
    cut.permutation.push_back(idx);
  }
  for (size_t i = 0; i < cut.permutation.size(); ++i) cut.identity &= cut.permutation[i] == int(i);
  return cut;
}

// ---------------------------------------------------------------------------
// derivative terms

std::string to_string(Insertion i) {
  switch (i) {
    case Insertion::U: return "U";
    case Insertion::U_marked: return "U'";
    case Insertion::Sigma: return "S";
    case Insertion::Sigma_marked: return "S'";
    case Insertion::R: return "R";
    case Insertion::dU: return "dU";
    case Insertion::dU_marked: return "dU'";
    case Insertion::D1: return "D1";
    case Insertion::D1_marked: return "D1'";
    case Insertion::D2_marked: return "D2'";
    case Insertion::Q: return "Q";
  }
  return "?";
}

int LoopTerm::delta_count() const {
  return int(std::count_if(word.begin(), word.end(), [](const Token& t) {
    return t.kind == Insertion::dU || t.kind == Insertion::dU_marked;
  }));
}

int LoopTerm::marked_count() const {
  return int(std::count_if(word.begin(), word.end(), [](const Token& t) {
    return t.kind == Insertion::U_marked || t.kind == Insertion::Sigma_marked ||
           t.kind == Insertion::dU_marked || t.kind == Insertion::D1_marked ||
           t.kind == Insertion::D2_marked;
  }));
}

std::string LoopTerm::str() const {
  std::ostringstream os;
  os << to_string(coeff);
  if (lambda_power) os << " l^" << lambda_power;
  os << (q_term ? " <" : " Tr[");
  for (size_t i = 0; i < word.size(); ++i) {
    if (i) os << ' ';
    os << to_string(word[i].kind);
    if (word[i].kind == Insertion::dU || word[i].kind == Insertion::dU_marked) os << word[i].index;
  }
  os << (q_term ? ">" : "]");
  return os.str();
}

namespace {

using I = Insertion;
Token t(I k, int i = 0) { return {k, i}; }
Token d(int i) { return {I::dU, i}; }
Token dj(int i) { return {I::dU_marked, i}; }

LoopTerm term(std::vector<Token> w, Rational c = 1) {
  LoopTerm lt;
  lt.word = std::move(w);
  lt.coeff = c;
  return lt;
}

LoopTerm q_term(std::vector<Token> w, Rational c) {
  LoopTerm lt = term(std::move(w), c);
  lt.q_term = true;
  lt.lambda_power = 2;
  return lt;
}

// prefix + R + prod (dU_tau(i) R) over all orderings of rest
void append_chains(std::vector<LoopTerm>& out, const std::vector<Token>& prefix, std::vector<int> rest) {
  std::sort(rest.begin(), rest.end());
  do {
    std::vector<Token> w = prefix;
    w.push_back(t(I::R));
    for (int i : rest) {
      w.push_back(d(i));
      w.push_back(t(I::R));
    }
    out.push_back(term(std::move(w)));
  } while (std::next_permutation(rest.begin(), rest.end()));
}

std::vector<int> without(int k, std::initializer_list<int> drop) {
  std::vector<int> r;
  for (int i = 1; i <= k; ++i)
    if (std::find(drop.begin(), drop.end(), i) == drop.end()) r.push_back(i);
  return r;
}

std::vector<Token> canonical_word(const LoopTerm& lt) {
  auto w = lt.word;
  if (lt.q_term && w.size() == 3 && w[2] < w[0]) std::swap(w[0], w[2]);
  return w;
}

std::map<std::pair<std::vector<Token>, std::pair<bool, int>>, Rational> collect(const std::vector<LoopTerm>& v) {
  std::map<std::pair<std::vector<Token>, std::pair<bool, int>>, Rational> m;
  for (const auto& lt : v) m[{canonical_word(lt), {lt.q_term, lt.lambda_power}}] += lt.coeff;
  for (auto it = m.begin(); it != m.end();) it = it->second == 0 ? m.erase(it) : std::next(it);
  return m;
}

}  // namespace

DiagramBatch derivative_terms(int k, int slice) {
  if (k < 1) throw std::invalid_argument("need at least one derivative");
  DiagramBatch b;
  b.k = k;
  b.slice = slice;
  auto& T = b.terms;
  const Token U = t(I::U), Up = t(I::U_marked), S = t(I::Sigma), Sp = t(I::Sigma_marked), R = t(I::R),
              D1 = t(I::D1), D1p = t(I::D1_marked), D2p = t(I::D2_marked), Q = t(I::Q);
  if (k == 1) {
    T.push_back(q_term({d(1), Q, S}, -1));
    T.push_back(term({dj(1), U, U, R}));
    T.push_back(term({Up, d(1), U, R}));
    T.push_back(term({Up, U, d(1), R}));
    T.push_back(term({Up, U, U, R, d(1), R}));
    T.push_back(term({D1p, d(1), S}, -1));
    T.push_back(term({D1p, S, d(1)}, -1));
    T.push_back(term({D1, dj(1), S}, -1));
    T.push_back(term({D1, Sp, d(1)}, -1));
    T.push_back(term({D1, d(1), Sp}, -1));
    T.push_back(term({D1, S, dj(1)}, -1));
    T.push_back(term({D2p, d(1)}, 3));
    return b;
  }
  if (k == 2) {
    T.push_back(q_term({d(1), Q, d(2)}, -1));
    T.push_back(term({dj(1), d(2), U, R}));
    T.push_back(term({dj(1), U, d(2), R}));
    T.push_back(term({dj(1), U, U, R, d(2), R}));
    T.push_back(term({dj(2), d(1), U, R}));
    T.push_back(term({Up, d(1), d(2), R}));
    T.push_back(term({Up, d(1), U, R, d(2), R}));
    T.push_back(term({dj(2), U, d(1), R}));
    T.push_back(term({Up, d(2), d(1), R}));
    T.push_back(term({Up, U, d(1), R, d(2), R}));
    T.push_back(term({dj(2), U, U, R, d(1), R}));
    T.push_back(term({Up, d(2), U, R, d(1), R}));
    T.push_back(term({Up, U, d(2), R, d(1), R}));
    T.push_back(term({Up, U, U, R, d(2), R, d(1), R}));
    T.push_back(term({Up, U, U, R, d(1), R, d(2), R}));
    T.push_back(term({D1p, d(1), d(2)}, -1));
    T.push_back(term({D1p, d(2), d(1)}, -1));
    T.push_back(term({D1, dj(1), d(2)}, -1));
    T.push_back(term({D1, dj(2), d(1)}, -1));
    T.push_back(term({D1, d(1), dj(2)}, -1));
    T.push_back(term({D1, d(2), dj(1)}, -1));
    return b;
  }
  append_chains(T, {Up, U, U}, without(k, {}));
  for (int i0 = 1; i0 <= k; ++i0) {
    auto rest = without(k, {i0});
    append_chains(T, {dj(i0), U, U}, rest);
    append_chains(T, {Up, d(i0), U}, rest);
    append_chains(T, {Up, U, d(i0)}, rest);
  }
  for (int i0 = 1; i0 <= k; ++i0)
    for (int i1 = i0 + 1; i1 <= k; ++i1) {
      auto rest = without(k, {i0, i1});
      append_chains(T, {dj(i0), d(i1), U}, rest);
      append_chains(T, {dj(i0), U, d(i1)}, rest);
      append_chains(T, {dj(i1), d(i0), U}, rest);
      append_chains(T, {Up, d(i0), d(i1)}, rest);
      append_chains(T, {dj(i1), U, d(i0)}, rest);
      append_chains(T, {Up, d(i1), d(i0)}, rest);
    }
  for (int i0 = 1; i0 <= k; ++i0)
    for (int i1 = i0 + 1; i1 <= k; ++i1)
      for (int i2 = i1 + 1; i2 <= k; ++i2) {
        auto rest = without(k, {i0, i1, i2});
        std::vector<int> kappa{i0, i1, i2};
        do append_chains(T, {dj(kappa[0]), d(kappa[1]), d(kappa[2])}, rest);
        while (std::next_permutation(kappa.begin(), kappa.end()));
      }
  return b;
}

std::vector<LoopTerm> symbolic_derivative(int k) {
  if (k < 1) throw std::invalid_argument("need at least one derivative");
  const Token U = t(I::U), Up = t(I::U_marked), S = t(I::Sigma), Sp = t(I::Sigma_marked), R = t(I::R),
              D1 = t(I::D1), D1p = t(I::D1_marked), D2p = t(I::D2_marked), Q = t(I::Q);
  // integrand of -V_j up to sigma-independent pieces
  std::vector<LoopTerm> cur{
      q_term({S, Q, S}, Rational(-1, 2)),
      term({Up, U, U, R}),
      term({D1p, S, S}, -1),
      term({D1, Sp, S}, -1),
      term({D1, S, Sp}, -1),
      term({D2p, S}, 3),
  };
  for (int i = 1; i <= k; ++i) {
    std::vector<LoopTerm> next;
    for (const auto& lt : cur)
      for (size_t p = 0; p < lt.word.size(); ++p) {
        std::vector<Token> repl;
        switch (lt.word[p].kind) {
          case I::U:
          case I::Sigma: repl = {d(i)}; break;
          case I::U_marked:
          case I::Sigma_marked: repl = {dj(i)}; break;
          case I::R: repl = {R, d(i), R}; break;
          default: continue;
        }
        LoopTerm n = lt;
        n.word.erase(n.word.begin() + long(p));
        n.word.insert(n.word.begin() + long(p), repl.begin(), repl.end());
        next.push_back(std::move(n));
      }
    // merge Q terms equal up to the symmetry of Q
    std::vector<LoopTerm> merged;
    for (const auto& [key, c] : collect(next)) {
      LoopTerm lt;
      lt.word = key.first;
      lt.q_term = key.second.first;
      lt.lambda_power = key.second.second;
      lt.coeff = c;
      merged.push_back(std::move(lt));
    }
    cur = std::move(merged);
  }
  return cur;
}

bool same_terms(const std::vector<LoopTerm>& a, const std::vector<LoopTerm>& b) { return collect(a) == collect(b); }

// ---------------------------------------------------------------------------
// skeleton and resolvent graphs

namespace {

void check_tree(const Forest& tree) {
  if (tree.n < 1) throw std::invalid_argument("empty block");
  if (!tree.is_acyclic() || tree.components() != 1) throw std::invalid_argument("block forest must be a tree");
}

}  // namespace

ColouredMap skeleton_graph(const Forest& tree, const std::vector<std::vector<std::vector<int>>>& partitions,
                           const std::vector<int>& scales, const std::vector<EdgeColour>& colours) {
  check_tree(tree);
  const int n = tree.n, m = int(tree.edges.size());
  if (int(partitions.size()) != n) throw std::invalid_argument("one partition per node required");
  if (!scales.empty() && int(scales.size()) != n) throw std::invalid_argument("one scale per node required");
  if (!colours.empty() && int(colours.size()) != m) throw std::invalid_argument("one colour per edge required");
  // dart 2l sits at the first endpoint of tree edge l, 2l+1 at the second
  std::vector<std::vector<int>> rot;
  std::vector<std::vector<Corner>> corners;
  for (int a = 0; a < n; ++a) {
    std::vector<int> incident, covered;
    for (int l = 0; l < m; ++l)
      if (tree.edges[l].first == a || tree.edges[l].second == a) incident.push_back(l);
    const int j = scales.empty() ? 1 : scales[a];
    for (const auto& block : partitions[a]) {
      if (block.empty()) throw std::invalid_argument("empty partition block");
      std::vector<int> r;
      for (int l : block) {
        if (l < 0 || l >= m || std::find(incident.begin(), incident.end(), l) == incident.end())
          throw std::invalid_argument("partition block uses an edge not incident to its node");
        r.push_back(tree.edges[l].first == a ? 2 * l : 2 * l + 1);
        covered.push_back(l);
      }
      std::vector<Corner> cs(r.size(), Corner{{CornerLabel{CornerKind::prop_leq, j}}, -1});
      cs[0] = Corner{{CornerLabel{CornerKind::prop_exact, j}}, j};
      rot.push_back(std::move(r));
      corners.push_back(std::move(cs));
    }
    std::sort(covered.begin(), covered.end());
    if (covered != incident) throw std::invalid_argument("partition does not cover the node's edges exactly");
  }
  std::vector<MapEdge> edges(m);
  for (int l = 0; l < m; ++l) edges[l] = {2 * l, 2 * l + 1, colours.empty() ? EdgeColour{} : colours[l], false};
  return ColouredMap(std::move(rot), std::move(edges), std::move(corners));
}

DiagramBatch skeleton_graphs(const Forest& tree, const std::vector<int>& scales,
                             const std::vector<EdgeColour>& colours) {
  check_tree(tree);
  const int n = tree.n;
  std::vector<std::vector<SetPartition>> choices(n);
  for (int a = 0; a < n; ++a) {
    std::vector<int> incident;
    for (int l = 0; l < int(tree.edges.size()); ++l)
      if (tree.edges[l].first == a || tree.edges[l].second == a) incident.push_back(l);
    for (auto p : faa_di_bruno(int(incident.size()))) {
      for (auto& blk : p)
        for (int& x : blk) x = incident[x];
      choices[a].push_back(std::move(p));
    }
  }
  long total = 1;
  for (const auto& c : choices) total *= long(c.size());
  DiagramBatch b;
  b.graphs.resize(total);
  tbb::parallel_for(0L, total, [&](long idx) {
    std::vector<std::vector<std::vector<int>>> parts(n);
    long r = idx;
    for (int a = 0; a < n; ++a) {
      parts[a] = choices[a][r % long(choices[a].size())];
      r /= long(choices[a].size());
    }
    b.graphs[idx] = skeleton_graph(tree, parts, scales, colours);
  });
  return b;
}

bool has_marked_corners(const ColouredMap& map) {
  for (const auto& cv : map.corners()) {
    int marks = 0, exact = 0;
    for (const auto& c : cv) {
      marks += c.mark >= 0;
      for (const auto& it : c.items) exact += it.kind == CornerKind::prop_exact;
    }
    if (marks != 1 || exact != 1) return false;
  }
  return true;
}

ColouredMap resolvent_graph(const ColouredMap& skeleton, const std::vector<LoopTerm>& terms) {
  if (int(terms.size()) != skeleton.num_vertices()) throw std::invalid_argument("one term per vertex required");
  std::vector<std::vector<int>> rot;
  std::vector<std::vector<Corner>> corners;
  for (int v = 0; v < skeleton.num_vertices(); ++v) {
    const auto& lt = terms[v];
    const auto& r = skeleton.rotation()[v];
    if (lt.q_term) throw std::invalid_argument("Q terms are not loop vertices");
    if (lt.delta_count() != int(r.size()) || lt.marked_count() != 1)
      throw std::invalid_argument("term does not fit vertex " + std::to_string(v));
    int j = 1;
    for (const auto& c : skeleton.corners()[v])
      if (c.mark >= 0) j = c.mark;
    // cyclic item sequence: a propagator before every insertion
    struct Item {
      CornerLabel label;
      int dart = -1;
    };
    std::vector<Item> seq;
    for (const auto& tok : lt.word) {
      bool marked = tok.kind == I::U_marked || tok.kind == I::Sigma_marked || tok.kind == I::dU_marked ||
                    tok.kind == I::D1_marked || tok.kind == I::D2_marked;
      seq.push_back({{marked ? CornerKind::prop_exact : CornerKind::prop_leq, j}, -1});
      switch (tok.kind) {
        case I::dU:
        case I::dU_marked:
          if (tok.index < 1 || tok.index > int(r.size())) throw std::invalid_argument("derivative label out of range");
          seq.push_back({{CornerKind::delta_insertion, j}, r[tok.index - 1]});
          break;
        case I::U:
        case I::U_marked:
        case I::Sigma:
        case I::Sigma_marked: seq.push_back({{CornerKind::sigma_plus_B, j}, -1}); break;
        case I::R: seq.push_back({{CornerKind::resolvent, j}, -1}); break;
        case I::D1:
        case I::D1_marked: seq.push_back({{CornerKind::D1_block, j}, -1}); break;
        case I::D2_marked: seq.push_back({{CornerKind::D2_block, j}, -1}); break;
        case I::Q: throw std::invalid_argument("Q inside a loop vertex");
      }
    }
    std::vector<int> nr;
    std::vector<Corner> nc;
    const int L = int(seq.size());
    int start = 0;
    while (seq[start].dart < 0) ++start;
    for (int s = 0; s < L; ++s) {
      const auto& it = seq[(start + s) % L];
      if (it.dart >= 0) {
        nr.push_back(it.dart);
        nc.push_back(Corner{{}, -1});
      } else {
        nc.back().items.push_back(it.label);
        if (it.label.kind == CornerKind::prop_exact) nc.back().mark = j;
      }
    }
    rot.push_back(std::move(nr));
    corners.push_back(std::move(nc));
  }
  return ColouredMap(std::move(rot), skeleton.edges(), std::move(corners));
}

// ---------------------------------------------------------------------------
// divergent graphs

std::string to_string(DivergenceClass d) {
  static const char* names[] = {"M1", "M2", "V1", "V2", "V3", "V4", "V5", "V6", "V7", "N1", "N2", "N3", "convergent"};
  return names[int(d)];
}

std::vector<DivergenceClass> divergent_classes() {
  using D = DivergenceClass;
  return {D::M1, D::M2, D::V1, D::V2, D::V3, D::V4, D::V5, D::V6, D::V7, D::N1, D::N2, D::N3};
}

ColouredMap library_graph(DivergenceClass d, const std::vector<int>& colours) {
  using D = DivergenceClass;
  std::vector<std::vector<int>> rot;
  std::vector<std::pair<int, int>> ed;
  switch (d) {
    case D::M1: rot = {{0, 1}, {2}}; ed = {{1, 2}}; break;
    case D::M2: rot = {{0, 1}, {2, 3}, {4}}; ed = {{1, 2}, {3, 4}}; break;
    case D::V1: rot = {{0}, {1}}; ed = {{0, 1}}; break;
    case D::V2: rot = {{0}, {1, 2}, {3}}; ed = {{0, 1}, {2, 3}}; break;
    case D::V3: rot = {{0}, {1, 2}, {3, 4}, {5}}; ed = {{0, 1}, {2, 3}, {4, 5}}; break;
    case D::V4: rot = {{0}, {1, 2}, {3, 4}, {5, 6}, {7}}; ed = {{0, 1}, {2, 3}, {4, 5}, {6, 7}}; break;
    case D::V5: rot = {{0, 1, 2}, {3}, {4}, {5}}; ed = {{0, 3}, {1, 4}, {2, 5}}; break;
    case D::V6: rot = {{0, 1, 2}, {3}, {4}, {5, 6}, {7}}; ed = {{0, 3}, {1, 4}, {2, 5}, {6, 7}}; break;
    case D::V7: rot = {{0, 1, 2, 3}, {4}, {5}, {6}, {7}}; ed = {{0, 4}, {1, 5}, {2, 6}, {3, 7}}; break;
    case D::N1: rot = {{0, 1}}; ed = {{0, 1}}; break;
    case D::N2: rot = {{0, 1}, {2, 3}}; ed = {{0, 3}, {1, 2}}; break;
    case D::N3: rot = {{0, 1, 2}, {3}}; ed = {{0, 1}, {2, 3}}; break;
    case D::convergent: throw std::invalid_argument("no library graph for the convergent class");
  }
  if (!colours.empty() && colours.size() != ed.size()) throw std::invalid_argument("one colour per edge required");
  std::vector<MapEdge> edges;
  for (size_t e = 0; e < ed.size(); ++e)
    edges.push_back({ed[e].first, ed[e].second, EdgeColour{colours.empty() ? 1 : colours[e], false}, false});
  return ColouredMap(std::move(rot), std::move(edges));
}

namespace {

std::vector<int> component_code(const ColouredMap& m, int start, bool mirror, bool colour_blind) {
  const int H = m.num_darts();
  std::vector<int> label(H, -1), order;
  label[start] = 0;
  order.push_back(start);
  auto step = [&](int h) {
    if (!mirror) return m.sigma(h);
    const auto& r = m.rotation()[m.vertex_of(h)];
    return r[(m.position_of(h) + r.size() - 1) % r.size()];
  };
  for (size_t i = 0; i < order.size(); ++i) {
    for (int nb : {step(order[i]), m.alpha(order[i])})
      if (label[nb] < 0) {
        label[nb] = int(order.size());
        order.push_back(nb);
      }
  }
  std::vector<int> code;
  for (int h : order) {
    code.push_back(label[step(h)]);
    code.push_back(m.is_external(h) ? -1 : label[m.alpha(h)]);
    if (m.is_external(h)) {
      code.push_back(0);
    } else {
      const auto& c = m.edges()[m.edge_of(h)].colour;
      code.push_back(colour_blind ? 1 : 2 * c.c + c.hat);
    }
  }
  return code;
}

}  // namespace

std::string canonical_form(const ColouredMap& map, bool colour_blind) {
  std::vector<std::string> parts;
  UnionFind uf(std::max(1, map.num_darts()));
  for (int h = 0; h < map.num_darts(); ++h) {
    uf.unite(h, map.sigma(h));
    uf.unite(h, map.alpha(h));
  }
  std::map<int, std::vector<int>> comp;
  for (int h = 0; h < map.num_darts(); ++h) comp[uf.find(h)].push_back(h);
  for (const auto& [root, darts] : comp) {
    std::vector<int> best;
    for (int s : darts)
      for (bool mirror : {false, true}) {
        auto c = component_code(map, s, mirror, colour_blind);
        if (best.empty() || c < best) best = std::move(c);
      }
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < best.size(); ++i) os << (i ? "," : "") << best[i];
    os << ')';
    parts.push_back(os.str());
  }
  for (int v = 0; v < map.num_vertices(); ++v)
    if (map.rotation()[v].empty()) parts.push_back("(o)");
  std::sort(parts.begin(), parts.end());
  std::string out;
  for (const auto& p : parts) out += p;
  return out;
}

namespace {

bool same_colour_edges(const ColouredMap& m) {
  for (const auto& e : m.edges())
    if (!(e.colour == m.edges()[0].colour)) return false;
  return true;
}

}  // namespace

int coloured_versions(DivergenceClass d) {
  const int e = library_graph(d).num_edges();
  std::set<std::string> seen;
  std::vector<int> col(e, 1);
  for (long code = 0; code < ipow(4, e); ++code) {
    long r = code;
    for (int i = 0; i < e; ++i, r /= 4) col[i] = int(r % 4) + 1;
    auto g = library_graph(d, col);
    if (d == DivergenceClass::N2 && !same_colour_edges(g)) continue;
    seen.insert(canonical_form(g));
  }
  return int(seen.size());
}

DivergenceClass classify(const ColouredMap& map) {
  if (map.num_external() > 1) throw std::invalid_argument("only vacuum and 2-point graphs are classified");
  if (map.num_components() != 1) throw std::invalid_argument("graph must be connected");
  for (const auto& e : map.edges())
    if (e.colour.hat) throw std::invalid_argument("tensor graphs carry single colours");
  if (map.num_edges() > 4) {
    if (superficial_degree(map) < 0) return DivergenceClass::convergent;
    throw std::invalid_argument("order > 4 with non-negative degree is outside the library");
  }
  static const auto library = [] {
    std::vector<std::pair<std::string, DivergenceClass>> lib;
    for (auto d : divergent_classes()) lib.emplace_back(canonical_form(library_graph(d), true), d);
    return lib;
  }();
  const auto key = canonical_form(map, true);
  for (const auto& [code, d] : library)
    if (code == key) {
      if (d == DivergenceClass::N2 && !same_colour_edges(map)) return DivergenceClass::convergent;
      return d;
    }
  return DivergenceClass::convergent;
}

ColouredMap random_map(std::mt19937_64& rng, int vertices, int edges, int external) {
  if (vertices < 1 || edges < 0 || external < 0) throw std::invalid_argument("bad random map size");
  const int H = 2 * edges + external;
  std::vector<int> darts(H);
  std::iota(darts.begin(), darts.end(), 0);
  std::shuffle(darts.begin(), darts.end(), rng);
  std::uniform_int_distribution<int> pick(0, vertices - 1), colour(1, 4), coin(0, 1);
  std::vector<std::vector<int>> rot(vertices);
  for (int h : darts) rot[pick(rng)].push_back(h);
  std::shuffle(darts.begin(), darts.end(), rng);
  std::vector<MapEdge> es;
  for (int e = 0; e < edges; ++e)
    es.push_back({darts[2 * e], darts[2 * e + 1], EdgeColour{colour(rng), coin(rng) == 1}, false});
  return ColouredMap(std::move(rot), std::move(es));
}

std::vector<ColouredMap> enumerate_vacuum_maps(int edges, const std::vector<int>& colours) {
  if (edges < 1 || edges > 3) throw std::invalid_argument("enumeration supports 1..3 edges");
  if (colours.empty()) throw std::invalid_argument("need at least one colour");
  const int H = 2 * edges;
  // uncoloured shapes: every rotation permutation times every perfect matching
  std::vector<std::vector<std::pair<int, int>>> matchings;
  std::vector<std::pair<int, int>> cur;
  std::vector<char> used(H, 0);
  auto rec = [&](auto&& self) -> void {
    int a = 0;
    while (a < H && used[a]) ++a;
    if (a == H) {
      matchings.push_back(cur);
      return;
    }
    used[a] = 1;
    for (int b = a + 1; b < H; ++b)
      if (!used[b]) {
        used[b] = 1;
        cur.emplace_back(a, b);
        self(self);
        cur.pop_back();
        used[b] = 0;
      }
    used[a] = 0;
  };
  rec(rec);

  std::map<std::string, ColouredMap> shapes;
  std::vector<int> perm(H);
  std::iota(perm.begin(), perm.end(), 0);
  do {
    std::vector<std::vector<int>> rot;
    std::vector<char> seen(H, 0);
    for (int h = 0; h < H; ++h) {
      if (seen[h]) continue;
      std::vector<int> cyc;
      for (int x = h; !seen[x]; x = perm[x]) {
        seen[x] = 1;
        cyc.push_back(x);
      }
      rot.push_back(std::move(cyc));
    }
    for (const auto& mt : matchings) {
      std::vector<MapEdge> es;
      for (auto [a, b] : mt) es.push_back({a, b, EdgeColour{}, false});
      ColouredMap m(rot, es);
      if (m.num_components() != 1) continue;
      shapes.emplace(canonical_form(m, true), m);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  std::map<std::string, ColouredMap> out;
  const int nc = int(colours.size());
  for (const auto& [key, shape] : shapes) {
    for (long code = 0; code < ipow(nc, edges); ++code) {
      auto es = shape.edges();
      long r = code;
      for (auto& e : es) {
        e.colour.c = colours[r % nc];
        r /= nc;
      }
      ColouredMap m(shape.rotation(), es);
      out.emplace(canonical_form(m), m);
    }
  }
  std::vector<ColouredMap> res;
  for (auto& [k, m] : out) res.push_back(std::move(m));
  return res;
}

// ---------------------------------------------------------------------------
// serialization

nlohmann::json to_json(const ColouredMap& map) {
  using nlohmann::json;
  json j;
  j["vertices"] = map.rotation();
  json edges = json::array(), colours = json::array(), dashed = json::array();
  for (const auto& e : map.edges()) {
    edges.push_back({e.h1, e.h2});
    colours.push_back({{"c", e.colour.c}, {"hat", e.colour.hat}});
    dashed.push_back(e.dashed);
  }
  j["edges"] = edges;
  j["colours"] = colours;
  j["dashed"] = dashed;
  json labels = json::array(), marks = json::array();
  for (const auto& cv : map.corners()) {
    json lv = json::array(), mv = json::array();
    for (const auto& c : cv) {
      json items = json::array();
      for (const auto& it : c.items) items.push_back({to_string(it.kind), it.scale});
      lv.push_back(items);
      mv.push_back(c.mark);
    }
    labels.push_back(lv);
    marks.push_back(mv);
  }
  j["corner_labels"] = labels;
  j["marks"] = marks;
  return j;
}

ColouredMap map_from_json(const nlohmann::json& j) {
  auto rot = j.at("vertices").get<std::vector<std::vector<int>>>();
  std::vector<MapEdge> edges;
  const auto& je = j.at("edges");
  for (size_t e = 0; e < je.size(); ++e) {
    MapEdge me;
    me.h1 = je[e].at(0).get<int>();
    me.h2 = je[e].at(1).get<int>();
    if (j.contains("colours")) {
      me.colour.c = j["colours"][e].at("c").get<int>();
      me.colour.hat = j["colours"][e].at("hat").get<bool>();
    }
    if (j.contains("dashed")) me.dashed = j["dashed"][e].get<bool>();
    edges.push_back(me);
  }
  if (!j.contains("corner_labels")) return ColouredMap(std::move(rot), std::move(edges));
  std::vector<std::vector<Corner>> corners;
  const auto& jl = j["corner_labels"];
  for (size_t v = 0; v < jl.size(); ++v) {
    std::vector<Corner> cv;
    for (size_t i = 0; i < jl[v].size(); ++i) {
      Corner c;
      c.items.clear();
      for (const auto& it : jl[v][i])
        c.items.push_back({corner_kind_from_string(it.at(0).get<std::string>()), it.at(1).get<int>()});
      if (j.contains("marks")) c.mark = j["marks"][v][i].get<int>();
      cv.push_back(std::move(c));
    }
    corners.push_back(std::move(cv));
  }
  return ColouredMap(std::move(rot), std::move(edges), std::move(corners));
}

std::string to_dot(const ColouredMap& map, const std::string& name) {
  std::ostringstream os;
  os << "graph " << name << " {\n";
  for (int v = 0; v < map.num_vertices(); ++v) {
    os << "  v" << v << " [label=\"v" << v;
    for (const auto& c : map.corners()[v])
      if (c.mark >= 0) os << " j=" << c.mark;
    os << "\"];\n";
  }
  for (const auto& e : map.edges()) {
    os << "  v" << map.vertex_of(e.h1) << " -- v" << map.vertex_of(e.h2) << " [label=\""
       << (e.colour.hat ? "^" : "") << e.colour.c << "\"" << (e.dashed ? ", style=dashed" : "") << "];\n";
  }
  for (int h = 0; h < map.num_darts(); ++h)
    if (map.is_external(h)) {
      os << "  x" << h << " [shape=point];\n";
      os << "  v" << map.vertex_of(h) << " -- x" << h << ";\n";
    }
  os << "}\n";
  return os.str();
}

}  // namespace mlve
