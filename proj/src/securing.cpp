#include "mlve/securing.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>

#include <tbb/parallel_for_each.h>

#include "mlve/bkar.hpp"

namespace mlve {

namespace {

bool is_resolvent(CornerKind k) { return k == CornerKind::resolvent || k == CornerKind::resolvent_dagger; }
bool is_block(CornerKind k) {
  return k == CornerKind::D1_block || k == CornerKind::D2_block || k == CornerKind::renorm_block;
}
bool is_prop(CornerKind k) { return k == CornerKind::prop_leq || k == CornerKind::prop_exact; }

Element item(CornerKind k, int scale) { return Element{-1, CornerLabel{k, scale}}; }
Element dart(int h) { return Element{h, CornerLabel{}}; }

CornerLabel conjugate(CornerLabel l) {
  if (l.kind == CornerKind::resolvent)
    l.kind = CornerKind::resolvent_dagger;
  else if (l.kind == CornerKind::resolvent_dagger)
    l.kind = CornerKind::resolvent;
  return l;
}

int max_dart(const Cycles& c) {
  int m = -1;
  for (const auto& cyc : c.cycles)
    for (const auto& e : cyc) m = std::max(m, e.dart);
  for (const auto& e : c.edges) m = std::max({m, e.h1, e.h2});
  return m;
}

struct UF {
  std::vector<int> p;
  explicit UF(int n) : p(n) { std::iota(p.begin(), p.end(), 0); }
  int find(int x) { return p[x] == x ? x : p[x] = find(p[x]); }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    p[a] = b;
    return true;
  }
};

SideScan scan(const std::vector<ElementKind>& kinds, int pos, int side) {
  SideScan s;
  const int L = int(kinds.size());
  for (int step = 1; step < L; ++step) {
    int p = ((pos + side * step) % L + L) % L;
    switch (kinds[p]) {
      case ElementKind::half_loop:
      case ElementKind::safe_block: ++s.safe; break;
      case ElementKind::half_tree:
      case ElementKind::resolvent:
      case ElementKind::external:
        s.stop = p;
        s.stop_kind = kinds[p];
        return s;
      case ElementKind::other: break;
    }
  }
  return s;
}

std::vector<TreeResolvent> tree_resolvents_of(const std::vector<Element>& seq, const std::vector<ElementKind>& kinds) {
  std::vector<TreeResolvent> out;
  int ordinal = 0;
  for (int p = 0; p < int(seq.size()); ++p) {
    if (kinds[p] != ElementKind::resolvent) continue;
    auto l = scan(kinds, p, -1), r = scan(kinds, p, +1);
    TreeResolvent t;
    t.position = p;
    t.ordinal = ordinal++;
    t.right_tree = l.reaches_tree() && l.safe <= 6;
    t.left_tree = r.reaches_tree() && r.safe <= 6;
    t.left = l.safe;
    t.right = r.safe;
    if (t.right_tree || t.left_tree) out.push_back(t);
  }
  return out;
}

std::string tag(const char* side, int component, int j) {
  return std::string(side) + "(" + std::to_string(component) + "," + std::to_string(j) + ")";
}

}  // namespace

// ---------------------------------------------------------------------------
// reading sequences

Cycles to_cycles(const ColouredMap& map) {
  Cycles c;
  c.edges = map.edges();
  for (int v = 0; v < map.num_vertices(); ++v) {
    std::vector<Element> seq;
    const auto& r = map.rotation()[v];
    const auto& cs = map.corners()[v];
    if (r.empty()) {
      for (const auto& l : cs[0].items) seq.push_back({-1, l});
    } else {
      for (size_t i = 0; i < r.size(); ++i) {
        seq.push_back(dart(r[i]));
        for (const auto& l : cs[i].items) seq.push_back({-1, l});
      }
    }
    c.cycles.push_back(std::move(seq));
  }
  return c;
}

ColouredMap from_cycles(const Cycles& c) {
  std::map<int, int> relabel;
  for (const auto& cyc : c.cycles)
    for (const auto& e : cyc)
      if (e.is_dart()) {
        if (relabel.count(e.dart)) throw std::invalid_argument("dart used twice");
        int next = int(relabel.size());
        relabel[e.dart] = next;
      }
  std::vector<std::vector<int>> rot;
  std::vector<std::vector<Corner>> corners;
  for (const auto& cyc : c.cycles) {
    std::vector<int> r;
    std::vector<Corner> cs;
    const int L = int(cyc.size());
    int first = -1;
    for (int i = 0; i < L; ++i)
      if (cyc[i].is_dart()) {
        first = i;
        break;
      }
    if (first < 0) {
      Corner k{{}, -1};
      for (const auto& e : cyc) {
        k.items.push_back(e.label);
        if (e.label.kind == CornerKind::prop_exact && k.mark < 0) k.mark = e.label.scale;
      }
      rot.emplace_back();
      corners.push_back({k});
      continue;
    }
    for (int s = 0; s < L; ++s) {
      const auto& e = cyc[(first + s) % L];
      if (e.is_dart()) {
        r.push_back(relabel[e.dart]);
        cs.push_back(Corner{{}, -1});
      } else {
        cs.back().items.push_back(e.label);
        if (e.label.kind == CornerKind::prop_exact && cs.back().mark < 0) cs.back().mark = e.label.scale;
      }
    }
    rot.push_back(std::move(r));
    corners.push_back(std::move(cs));
  }
  std::vector<MapEdge> edges;
  for (auto e : c.edges) {
    auto a = relabel.find(e.h1), b = relabel.find(e.h2);
    if (a == relabel.end() || b == relabel.end()) continue;
    e.h1 = a->second;
    e.h2 = b->second;
    edges.push_back(e);
  }
  return ColouredMap(std::move(rot), std::move(edges), std::move(corners));
}

std::vector<ElementKind> element_kinds(const std::vector<Element>& cycle, const std::vector<MapEdge>& edges) {
  std::map<int, bool> dashed;
  for (const auto& e : edges) dashed[e.h1] = dashed[e.h2] = e.dashed;
  std::vector<ElementKind> k;
  k.reserve(cycle.size());
  for (const auto& e : cycle) {
    if (e.is_dart()) {
      auto it = dashed.find(e.dart);
      k.push_back(it == dashed.end() ? ElementKind::external
                                     : (it->second ? ElementKind::half_loop : ElementKind::half_tree));
    } else if (is_resolvent(e.label.kind)) {
      k.push_back(ElementKind::resolvent);
    } else if (is_block(e.label.kind)) {
      k.push_back(ElementKind::safe_block);
    } else {
      k.push_back(ElementKind::other);
    }
  }
  return k;
}

ResolventDiagram::ResolventDiagram(ColouredMap chord_form, std::vector<std::string> history)
    : map_(std::move(chord_form)), history_(std::move(history)) {
  for (const auto& e : map_.edges())
    if (map_.vertex_of(e.h1) != map_.vertex_of(e.h2))
      throw std::invalid_argument("not in chord-diagram form: an edge joins two vertices");
  for (const auto& cv : map_.corners())
    for (const auto& c : cv)
      for (const auto& l : c.items)
        if (l.kind == CornerKind::sigma_plus_B)
          throw std::invalid_argument("sigma insertions must be contracted first");
  cycles_ = to_cycles(map_);
  for (const auto& cyc : cycles_.cycles) kinds_.push_back(element_kinds(cyc, cycles_.edges));
}

int ResolventDiagram::num_resolvents(int component) const {
  const auto& k = kinds_.at(component);
  return int(std::count(k.begin(), k.end(), ElementKind::resolvent));
}

int ResolventDiagram::num_resolvents() const {
  int r = 0;
  for (int i = 0; i < num_components(); ++i) r += num_resolvents(i);
  return r;
}

std::vector<int> ResolventDiagram::resolvent_positions(int component) const {
  std::vector<int> out;
  const auto& k = kinds_.at(component);
  for (int p = 0; p < int(k.size()); ++p)
    if (k[p] == ElementKind::resolvent) out.push_back(p);
  return out;
}

ResolventDiagram chord_form(const ColouredMap& g) {
  UF uf(g.num_vertices());
  std::vector<int> tree;
  for (int e = 0; e < g.num_edges(); ++e)
    if (uf.unite(g.vertex_of(g.edges()[e].h1), g.vertex_of(g.edges()[e].h2))) tree.push_back(e);
  return ResolventDiagram(to_chord_diagram(g, tree));
}

// ---------------------------------------------------------------------------
// security

SideScan scan_side(const ResolventDiagram& d, int component, int pos, int side) {
  if (side != 1 && side != -1) throw std::invalid_argument("side must be +1 or -1");
  return scan(d.kinds(component), pos, side);
}

std::vector<TreeResolvent> tree_resolvents(const ResolventDiagram& d, int component) {
  return tree_resolvents_of(d.sequence(component), d.kinds(component));
}

SecurityState security_state(const ResolventDiagram& d) {
  SecurityState st;
  st.c = std::max(1, d.num_components());
  for (int i = 0; i < d.num_components(); ++i) {
    const auto& seq = d.sequence(i);
    const auto& kinds = d.kinds(i);
    bool ok = true;
    for (const auto& t : tree_resolvents_of(seq, kinds)) {
      for (int side : {-1, 1}) {
        bool has = side < 0 ? t.right_tree : t.left_tree;
        if (!has) continue;
        auto s = scan(kinds, t.position, side);
        st.pairs.push_back({i, seq[s.stop].dart, t.position, side, s.safe});
        st.m += 6 - s.safe;
        if (s.safe < 6) ok = false;
      }
    }
    st.resolvents += d.num_resolvents(i);
    if (!ok) st.unsecured.push_back(i);
  }
  st.psi = 18 * (st.c - 1) + st.m;
  return st;
}

bool component_secured(const ResolventDiagram& d, int component) {
  if (d.num_resolvents(component) == 0) return true;
  for (const auto& t : tree_resolvents(d, component)) {
    if (t.right_tree && t.left != 6) return false;
    if (t.left_tree && t.right != 6) return false;
  }
  return true;
}

namespace {

std::vector<ResolventDiagram> expand(const ResolventDiagram& d, int comp, int j, int side) {
  if (comp < 0 || comp >= d.num_components()) throw std::invalid_argument("component index out of range");
  auto positions = d.resolvent_positions(comp);
  if (j < 0 || j >= int(positions.size())) throw std::invalid_argument("resolvent index out of range");
  const int p = positions[j];
  const CornerLabel R = d.sequence(comp)[p].label;
  const Element prop = item(CornerKind::prop_leq, R.scale);
  const std::string base = tag(side > 0 ? "R" : "L", comp, j);
  auto hist = [&](const std::string& what) {
    auto h = d.history();
    h.push_back(base + ":" + what);
    return h;
  };

  std::vector<ResolventDiagram> out;
  {
    Cycles c = d.cycles();
    c.cycles[comp][p] = prop;
    out.emplace_back(from_cycles(c), hist("id"));
  }
  {
    Cycles c = d.cycles();
    auto& s = c.cycles[comp];
    if (side > 0)
      s.insert(s.begin() + p + 1, {prop, item(CornerKind::D1_block, R.scale)});
    else
      s.insert(s.begin() + p, {item(CornerKind::D1_block, R.scale), prop});
    out.emplace_back(from_cycles(c), hist("D"));
  }
  const int h1 = max_dart(d.cycles()) + 1, h2 = h1 + 1;
  for (int k = 0; k < d.num_components(); ++k) {
    for (int q : d.resolvent_positions(k)) {
      Cycles c = d.cycles();
      const CornerLabel Rk = d.sequence(k)[q].label;
      const Element pk = item(CornerKind::prop_leq, Rk.scale);
      std::map<std::pair<int, int>, std::vector<Element>> repl;
      if (k == comp && q == p) {
        if (side > 0)
          repl[{k, q}] = {{-1, R}, prop, dart(h2), prop, {-1, R}, prop, dart(h1), prop};
        else
          repl[{k, q}] = {prop, dart(h1), prop, {-1, R}, prop, dart(h2), prop, {-1, R}};
      } else {
        if (side > 0)
          repl[{comp, p}] = {{-1, R}, prop, dart(h1), prop};
        else
          repl[{comp, p}] = {prop, dart(h1), prop, {-1, R}};
        repl[{k, q}] = {{-1, Rk}, pk, dart(h2), pk, {-1, Rk}};
      }
      for (int v : {comp, k}) {
        std::vector<Element> ns;
        const auto& old = d.sequence(v);
        for (int i = 0; i < int(old.size()); ++i) {
          auto it = repl.find({v, i});
          if (it == repl.end())
            ns.push_back(old[i]);
          else
            ns.insert(ns.end(), it->second.begin(), it->second.end());
        }
        c.cycles[v] = std::move(ns);
      }
      const bool loop = k == comp;
      c.edges.push_back(MapEdge{h1, h2, EdgeColour{1, false}, loop});
      ColouredMap m = from_cycles(c);
      std::string what = (loop ? "loop(" : "tree(") + std::to_string(k) + "," + std::to_string(q) + ")";
      if (!loop) {
        // merge the two components by partial duality on the new edge
        m = partial_dual(m, {m.num_edges() - 1});
        m.edges().back().dashed = false;
      }
      out.emplace_back(std::move(m), hist(what));
    }
  }
  return out;
}

}  // namespace

std::vector<ResolventDiagram> expand_right(const ResolventDiagram& d, int component, int j) {
  return expand(d, component, j, +1);
}

std::vector<ResolventDiagram> expand_left(const ResolventDiagram& d, int component, int j) {
  return expand(d, component, j, -1);
}

std::vector<ResolventDiagram> choose_expand(const ResolventDiagram& d, int component) {
  if (component < 0 || component >= d.num_components()) throw std::invalid_argument("component index out of range");
  if (component_secured(d, component)) throw std::invalid_argument("component is already secured");
  for (const auto& t : tree_resolvents(d, component)) {
    if (t.right_tree && t.left <= 5) return expand_left(d, component, t.ordinal);
    if (t.left_tree && t.right <= 5) return expand_right(d, component, t.ordinal);
  }
  throw std::runtime_error("unsecured component without an expandable tree-resolvent");
}

double log_leaf_bound(int n) {
  if (n < 1) throw std::invalid_argument("leaf bound needs n >= 1");
  return (42.0 * n - 30.0) * std::log(98.0 * n - 28.0);
}

std::vector<std::pair<int, int>> between_resolvents_violations(const ResolventDiagram& d) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < d.num_components(); ++i) {
    auto P = d.resolvent_positions(i);
    const auto& k = d.kinds(i);
    const int L = int(k.size()), r = int(P.size());
    for (int a = 0; a < r; ++a) {
      int from = P[a], to = P[(a + 1) % r];
      int blocks = 0, loops = 0;
      for (int p = (from + 1) % L; p != to; p = (p + 1) % L) {
        loops += k[p] == ElementKind::half_loop;
        blocks += k[p] == ElementKind::safe_block;
      }
      if (blocks < 3 && loops == 0) out.push_back({i, a});
    }
  }
  return out;
}

bool resolvent_spacing_ok(const ResolventDiagram& d) {
  for (int i = 0; i < d.num_components(); ++i) {
    auto P = d.resolvent_positions(i);
    const auto& k = d.kinds(i);
    const int L = int(k.size()), r = int(P.size());
    for (int a = 0; a < r; ++a) {
      int blocks = 0, darts = 0;
      for (int p = (P[a] + 1) % L; p != P[(a + 1) % r]; p = (p + 1) % L) {
        blocks += k[p] == ElementKind::safe_block;
        darts += d.sequence(i)[p].is_dart();
      }
      if (blocks < 3 && darts == 0) return false;
    }
  }
  return true;
}

SecureResult secure(const ResolventDiagram& root, const SecureOptions& opt) {
  struct Work {
    ResolventDiagram d;
    SecurityState st;
    int depth = 0;
  };
  SecureResult res;
  auto st0 = security_state(root);
  res.psi_initial = st0.psi;
  res.r_initial = st0.resolvents;
  const bool spacing = resolvent_spacing_ok(root);

  std::mutex mu;
  std::atomic<long> nodes{0}, leaves{0};
  std::atomic<int> depth{0};
  std::atomic<bool> stop{false}, between{true}, secured_ok{true};

  std::vector<Work> start{{root, st0, 0}};
  tbb::parallel_for_each(start.begin(), start.end(), [&](const Work& w, tbb::feeder<Work>& feeder) {
    if (stop.load()) return;
    if (nodes.fetch_add(1) + 1 > opt.max_nodes) {
      stop = true;
      return;
    }
    int cur = depth.load();
    while (w.depth > cur && !depth.compare_exchange_weak(cur, w.depth)) {
    }
    if (w.st.secured()) {
      leaves.fetch_add(1);
      if (opt.audit) {
        for (const auto& p : w.st.pairs)
          if (p.distance != 6) secured_ok = false;
        if (spacing && !between_resolvents_violations(w.d).empty()) between = false;
      }
      if (opt.keep_leaves) {
        std::lock_guard<std::mutex> lock(mu);
        res.leaves.push_back(w.d);
      }
      return;
    }
    for (auto& child : choose_expand(w.d, w.st.unsecured.front())) {
      auto st = security_state(child);
      if (opt.audit && st.psi >= w.st.psi) {
        std::string h;
        for (const auto& s : child.history()) h += s + " ";
        throw std::runtime_error("psi did not decrease (" + std::to_string(w.st.psi) + " -> " +
                                 std::to_string(st.psi) + ") at " + h);
      }
      feeder.add(Work{std::move(child), std::move(st), w.depth + 1});
    }
  });

  res.nodes = nodes.load();
  res.leaf_count = leaves.load();
  res.max_depth = depth.load();
  res.complete = !stop.load();
  res.between_ok = between.load();
  res.leaves_secured = secured_ok.load();
  std::sort(res.leaves.begin(), res.leaves.end(),
            [](const ResolventDiagram& a, const ResolventDiagram& b) { return a.history() < b.history(); });
  res.log_tree_bound = res.psi_initial * std::log(double(res.r_initial + res.psi_initial + 2));
  const double log_leaves = std::log(double(std::max(1L, res.leaf_count)));
  res.bound_ok = log_leaves <= res.log_tree_bound + 1e-9;
  if (opt.block_n >= 1) {
    res.log_lemma_bound = log_leaf_bound(opt.block_n);
    res.bound_ok = res.bound_ok && log_leaves <= res.log_lemma_bound + 1e-9;
  }
  res.depth_ok = res.max_depth <= res.psi_initial;
  return res;
}

SampleAudit secure_sampled(const ResolventDiagram& root, std::mt19937_64& rng, int paths, int exhaustive_psi,
                           const SecureOptions& opt) {
  if (paths < 1) throw std::invalid_argument("need at least one sample path");
  SampleAudit a;
  auto st0 = security_state(root);
  a.psi_initial = st0.psi;
  a.r_initial = st0.resolvents;
  a.log_tree_bound = st0.psi * std::log(double(st0.resolvents + st0.psi + 2));
  if (opt.block_n >= 1) a.log_lemma_bound = log_leaf_bound(opt.block_n);
  const bool spacing = resolvent_spacing_ok(root);
  std::vector<double> logs;
  for (int t = 0; t < paths; ++t) {
    ResolventDiagram d = root;
    SecurityState st = st0;
    double log_w = 0.0;
    int depth = 0;
    while (!st.secured() && st.psi > exhaustive_psi) {
      auto kids = choose_expand(d, st.unsecured.front());
      ++a.nodes;
      log_w += std::log(double(kids.size()));
      std::uniform_int_distribution<size_t> pick(0, kids.size() - 1);
      ResolventDiagram next = std::move(kids[pick(rng)]);
      auto ns = security_state(next);
      if (opt.audit && ns.psi >= st.psi)
        throw std::runtime_error("psi did not decrease (" + std::to_string(st.psi) + " -> " +
                                 std::to_string(ns.psi) + ")");
      d = std::move(next);
      st = std::move(ns);
      ++depth;
    }
    SecureOptions sub = opt;
    sub.keep_leaves = false;
    sub.block_n = -1;
    auto r = secure(d, sub);
    a.nodes += r.nodes;
    a.subtree_leaves += r.leaf_count;
    a.complete = a.complete && r.complete;
    a.leaves_secured = a.leaves_secured && r.leaves_secured;
    a.between_ok = a.between_ok && (!spacing || r.between_ok);
    a.max_depth = std::max(a.max_depth, depth + r.max_depth);
    const double lw = log_w + std::log(double(std::max(1L, r.leaf_count)));
    logs.push_back(lw);
    a.bound_ok = a.bound_ok && lw <= a.log_tree_bound + 1e-9;
    if (opt.block_n >= 1) a.bound_ok = a.bound_ok && lw <= a.log_lemma_bound + 1e-9;
    // sample leaf: keep descending at random below the threshold
    while (r.complete && !st.secured()) {
      auto kids = choose_expand(d, st.unsecured.front());
      std::uniform_int_distribution<size_t> pick(0, kids.size() - 1);
      d = std::move(kids[pick(rng)]);
      st = security_state(d);
    }
    if (st.secured()) a.leaves.push_back(std::move(d));
  }
  // log of the mean of exp(logs)
  const double mx = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (double l : logs) sum += std::exp(l - mx);
  a.log_leaf_estimate = mx + std::log(sum / double(logs.size()));
  a.paths = paths;
  a.depth_ok = a.max_depth <= a.psi_initial;
  return a;
}

// ---------------------------------------------------------------------------
// contraction process

namespace {

struct SigmaSite {
  int v, p;
};

std::vector<SigmaSite> sites(const Cycles& c, CornerKind k) {
  std::vector<SigmaSite> out;
  for (int v = 0; v < int(c.cycles.size()); ++v)
    for (int p = 0; p < int(c.cycles[v].size()); ++p)
      if (!c.cycles[v][p].is_dart() && c.cycles[v][p].label.kind == k) out.push_back({v, p});
  return out;
}

std::vector<SigmaSite> resolvent_sites(const Cycles& c) {
  std::vector<SigmaSite> out;
  for (int v = 0; v < int(c.cycles.size()); ++v)
    for (int p = 0; p < int(c.cycles[v].size()); ++p)
      if (!c.cycles[v][p].is_dart() && is_resolvent(c.cycles[v][p].label.kind)) out.push_back({v, p});
  return out;
}

// number of options for the first sigma insertion
int contraction_options(const Cycles& c) {
  auto s = sites(c, CornerKind::sigma_plus_B);
  if (s.empty()) return 0;
  return int(s.size()) - 1 + int(resolvent_sites(c).size());
}

// apply option o (sigma partners first, then resolvents) to the first sigma
Cycles contract_once(const Cycles& c, int o) {
  auto s = sites(c, CornerKind::sigma_plus_B);
  auto rs = resolvent_sites(c);
  const SigmaSite a = s.front();
  const int h1 = max_dart(c) + 1, h2 = h1 + 1;
  Cycles out = c;
  std::map<std::pair<int, int>, std::vector<Element>> repl;
  repl[{a.v, a.p}] = {dart(h1)};
  if (o < int(s.size()) - 1) {
    const SigmaSite b = s[o + 1];
    repl[{b.v, b.p}] = {dart(h2)};
  } else {
    const SigmaSite b = rs.at(o - (int(s.size()) - 1));
    const CornerLabel R = c.cycles[b.v][b.p].label;
    const Element pk = item(CornerKind::prop_leq, R.scale);
    repl[{b.v, b.p}] = {{-1, R}, pk, dart(h2), pk, {-1, R}};
  }
  std::vector<int> touched;
  for (const auto& [key, _] : repl) touched.push_back(key.first);
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  for (int v : touched) {
    std::vector<Element> ns;
    for (int i = 0; i < int(c.cycles[v].size()); ++i) {
      auto it = repl.find({v, i});
      if (it == repl.end())
        ns.push_back(c.cycles[v][i]);
      else
        ns.insert(ns.end(), it->second.begin(), it->second.end());
    }
    out.cycles[v] = std::move(ns);
  }
  out.edges.push_back(MapEdge{h1, h2, EdgeColour{1, false}, false});
  return out;
}

}  // namespace

long contraction_count(int s, int r) {
  if (s < 0 || r < 0) throw std::invalid_argument("negative count");
  if (s == 0) return 1;
  long total = long(r) * contraction_count(s - 1, r + 1);
  if (s >= 2) total += long(s - 1) * contraction_count(s - 2, r);
  return total;
}

DiagramBatch contract_sigmas(const ColouredMap& skeleton, long max_outputs) {
  DiagramBatch b;
  std::function<void(const Cycles&)> rec = [&](const Cycles& c) {
    int n = contraction_options(c);
    if (sites(c, CornerKind::sigma_plus_B).empty()) {
      if (long(b.graphs.size()) >= max_outputs) throw std::runtime_error("contraction output limit exceeded");
      b.graphs.push_back(from_cycles(c));
      return;
    }
    for (int o = 0; o < n; ++o) rec(contract_once(c, o));
  };
  rec(to_cycles(skeleton));
  return b;
}

ColouredMap random_contraction(const ColouredMap& skeleton, std::mt19937_64& rng) {
  Cycles c = to_cycles(skeleton);
  while (!sites(c, CornerKind::sigma_plus_B).empty()) {
    int n = contraction_options(c);
    if (n == 0) throw std::runtime_error("a single sigma insertion with nothing to contract");
    c = contract_once(c, std::uniform_int_distribution<int>(0, n - 1)(rng));
  }
  return from_cycles(c);
}

int count_kind(const ColouredMap& map, CornerKind k) {
  int n = 0;
  for (const auto& cv : map.corners())
    for (const auto& c : cv)
      for (const auto& l : c.items) n += l.kind == k;
  return n;
}

ColouredMap mirror_conjugate(const ColouredMap& map) {
  Cycles c = to_cycles(map);
  for (auto& cyc : c.cycles) {
    std::reverse(cyc.begin(), cyc.end());
    for (auto& e : cyc) e.label = conjugate(e.label);
  }
  return from_cycles(c);
}

ColouredMap skeleton_quadruple(const ColouredMap& g) {
  auto m = mirror_conjugate(g);
  return disjoint_union({g, g, m, m});
}

ResolventDiagram random_resolvent_diagram(std::mt19937_64& rng, int block_size, bool quad) {
  if (block_size < 2) throw std::invalid_argument("block needs at least two nodes");
  auto trees = enumerate_trees(block_size);
  const Forest tree = trees[std::uniform_int_distribution<size_t>(0, trees.size() - 1)(rng)];
  const int n = tree.n, m = int(tree.edges.size());
  std::vector<std::vector<std::vector<int>>> parts(n);
  for (int a = 0; a < n; ++a) {
    std::vector<int> inc;
    for (int l = 0; l < m; ++l)
      if (tree.edges[l].first == a || tree.edges[l].second == a) inc.push_back(l);
    auto all = faa_di_bruno(int(inc.size()));
    auto p = all[std::uniform_int_distribution<size_t>(0, all.size() - 1)(rng)];
    for (auto& blk : p)
      for (int& x : blk) x = inc[x];
    parts[a] = p;
  }
  std::vector<int> scales(n);
  std::iota(scales.begin(), scales.end(), 1);
  std::shuffle(scales.begin(), scales.end(), rng);
  std::vector<EdgeColour> colours(m);
  for (auto& c : colours) c = EdgeColour{std::uniform_int_distribution<int>(1, 4)(rng), false};
  auto g = skeleton_graph(tree, parts, scales, colours);
  std::vector<LoopTerm> terms;
  for (int v = 0; v < g.num_vertices(); ++v) {
    const int k = int(g.rotation()[v].size());
    std::vector<LoopTerm> fit;
    for (const auto& t : derivative_terms(k).terms)
      if (!t.q_term && t.delta_count() == k && t.marked_count() == 1) fit.push_back(t);
    if (fit.empty()) throw std::runtime_error("no loop-vertex term with " + std::to_string(k) + " insertions");
    terms.push_back(fit[std::uniform_int_distribution<size_t>(0, fit.size() - 1)(rng)]);
  }
  auto rg = resolvent_graph(g, terms);
  if (quad) rg = skeleton_quadruple(rg);
  const int sigmas = count_kind(rg, CornerKind::sigma_plus_B);
  const int resolvents = count_kind(rg, CornerKind::resolvent) + count_kind(rg, CornerKind::resolvent_dagger);
  if (contraction_count(sigmas, resolvents) == 0) return random_resolvent_diagram(rng, block_size, quad);
  return chord_form(random_contraction(rg, rng));
}

// ---------------------------------------------------------------------------
// cutting scheme

namespace {

enum class CutType { through, split, gap };
struct CutPoint {
  int pos;
  CutType type;
};

struct Arc {
  std::vector<Element> elems;
  bool dedup_front = false, dedup_back = false;
};

// elements met going forward from a to b
Arc make_arc(const std::vector<Element>& seq, CutPoint a, CutPoint b) {
  const int L = int(seq.size());
  Arc arc;
  if (a.type != CutType::through) arc.elems.push_back(seq[a.pos]);
  for (int p = (a.pos + 1) % L; p != b.pos; p = (p + 1) % L) arc.elems.push_back(seq[p]);
  if (b.type == CutType::split) arc.elems.push_back(seq[b.pos]);
  auto prop_end = [&](const Element& e) { return !e.is_dart() && is_prop(e.label.kind); };
  if (!arc.elems.empty()) {
    arc.dedup_front = a.type != CutType::gap && prop_end(arc.elems.front());
    arc.dedup_back = b.type != CutType::gap && prop_end(arc.elems.back());
  }
  return arc;
}

// the arc glued to its mirror image
Cycles double_arc(const Arc& arc, const std::vector<MapEdge>& edges) {
  std::map<int, int> id;
  for (const auto& e : arc.elems)
    if (e.is_dart()) id[e.dart] = int(id.size());
  const int offset = int(id.size());
  std::vector<Element> seq, mirror;
  for (const auto& e : arc.elems) seq.push_back(e.is_dart() ? dart(id[e.dart]) : e);
  for (auto it = arc.elems.rbegin(); it != arc.elems.rend(); ++it)
    mirror.push_back(it->is_dart() ? dart(id[it->dart] + offset) : Element{-1, conjugate(it->label)});
  if (arc.dedup_back && !mirror.empty()) mirror.erase(mirror.begin());
  if (arc.dedup_front && !mirror.empty() && !(arc.elems.size() == 1 && arc.dedup_back)) mirror.pop_back();
  seq.insert(seq.end(), mirror.begin(), mirror.end());
  Cycles c;
  c.cycles.push_back(std::move(seq));
  for (const auto& e : edges) {
    auto a = id.find(e.h1), b = id.find(e.h2);
    bool ia = a != id.end(), ib = b != id.end();
    if (ia && ib) {
      c.edges.push_back({a->second, b->second, e.colour, e.dashed});
      c.edges.push_back({a->second + offset, b->second + offset, e.colour, e.dashed});
    } else if (ia || ib) {
      int h = ia ? a->second : b->second;
      c.edges.push_back({h, h + offset, e.colour, e.dashed});
    }
  }
  return c;
}

void count_corners(CutNode& n) {
  const auto& seq = n.cycle.cycles[0];
  const int L = int(seq.size());
  n.c_a.clear();
  n.c_ar.clear();
  n.resolvents = 0;
  for (int p = 0; p < L; ++p) {
    const auto& e = seq[p];
    if (e.is_dart()) continue;
    if (is_resolvent(e.label.kind)) ++n.resolvents;
    if (e.label.kind != CornerKind::prop_exact) continue;
    ++n.c_a[e.label.scale];
    n.c_ar.emplace(e.label.scale, 0);
    auto res = [&](int q) {
      const auto& f = seq[(q % L + L) % L];
      return L > 1 && !f.is_dart() && is_resolvent(f.label.kind);
    };
    if (res(p - 1) || res(p + 1)) ++n.c_ar[e.label.scale];
  }
}

std::pair<Cycles, Cycles> odd_cut(const Cycles& c) {
  const auto& seq = c.cycles[0];
  auto kinds = element_kinds(seq, c.edges);
  const int L = int(seq.size());
  int r0 = -1, dir = 0;
  auto trs = tree_resolvents_of(seq, kinds);
  if (!trs.empty()) {
    r0 = trs.front().position;
    dir = trs.front().right_tree ? -1 : +1;
  } else {
    // no tree-resolvent: take the first resolvent with a long run of safe elements
    for (int p = 0; p < L && r0 < 0; ++p) {
      if (kinds[p] != ElementKind::resolvent) continue;
      for (int side : {+1, -1})
        if (scan(kinds, p, side).safe >= 4) {
          r0 = p;
          dir = side;
          break;
        }
    }
    if (r0 < 0) throw std::runtime_error("no odd cut available");
  }
  if (scan(kinds, r0, dir).safe < 4) throw std::runtime_error("odd cut needs four safe elements next to the resolvent");
  int safe = 0, q = r0, q3 = -1;
  while (true) {
    q = ((q + dir) % L + L) % L;
    if (kinds[q] == ElementKind::half_loop || kinds[q] == ElementKind::safe_block) {
      if (++safe == 3) {
        q3 = q;
        break;
      }
    }
  }
  // first propagator between the third and fourth safe element, if any
  CutPoint end{-1, CutType::gap};
  for (int p = ((q3 + dir) % L + L) % L;; p = ((p + dir) % L + L) % L) {
    if (kinds[p] == ElementKind::half_loop || kinds[p] == ElementKind::safe_block) break;
    if (!seq[p].is_dart() && is_prop(seq[p].label.kind)) {
      end = {p, CutType::split};
      break;
    }
  }
  const CutPoint at_r{r0, CutType::through};
  Arc small, rest;
  if (dir > 0) {
    if (end.pos < 0) end = {(q3 + 1) % L, CutType::gap};
    small = make_arc(seq, at_r, end);
    rest = make_arc(seq, end, at_r);
  } else {
    if (end.pos < 0) end = {q3, CutType::gap};
    small = make_arc(seq, end, at_r);
    rest = make_arc(seq, at_r, end);
  }
  return {double_arc(small, c.edges), double_arc(rest, c.edges)};
}

std::pair<Cycles, Cycles> even_cut(const Cycles& c) {
  const auto& seq = c.cycles[0];
  std::vector<int> P;
  for (int p = 0; p < int(seq.size()); ++p)
    if (!seq[p].is_dart() && is_resolvent(seq[p].label.kind)) P.push_back(p);
  const int k = int(P.size()) / 2;
  const CutPoint a{P[0], CutType::through}, b{P[k], CutType::through};
  return {double_arc(make_arc(seq, a, b), c.edges), double_arc(make_arc(seq, b, a), c.edges)};
}

}  // namespace

CutScheme cut_component(const ResolventDiagram& d, int component) {
  if (component < 0 || component >= d.num_components()) throw std::invalid_argument("component index out of range");
  if (!component_secured(d, component)) throw std::invalid_argument("cutting scheme needs a secured diagram");
  CutScheme s;
  s.component = component;
  CutNode root;
  root.cycle.cycles.push_back(d.sequence(component));
  std::set<int> here;
  for (const auto& e : d.sequence(component))
    if (e.is_dart()) here.insert(e.dart);
  for (const auto& e : d.cycles().edges)
    if (here.count(e.h1) && here.count(e.h2)) root.cycle.edges.push_back(e);
  count_corners(root);
  s.r = root.resolvents;
  const int r = s.r;
  s.k_tilde = r == 0 ? 0 : (r == 2 ? 2 : (r % 2 ? r : r / 2));
  s.nodes.push_back(root);
  for (size_t i = 0; i < s.nodes.size(); ++i) {
    if (s.nodes[i].resolvents == 0) continue;
    const bool odd = i == 0 && (r == 2 || r % 2 == 1);
    if (!odd && s.nodes[i].resolvents % 2) throw std::runtime_error("odd number of resolvents after the first cut");
    auto [c0, c1] = odd ? odd_cut(s.nodes[i].cycle) : even_cut(s.nodes[i].cycle);
    s.nodes[i].cut = odd ? "odd" : "even";
    for (int b = 0; b < 2; ++b) {
      CutNode ch;
      ch.word = s.nodes[i].word + char('0' + b);
      ch.cycle = b ? c1 : c0;
      ch.alpha = s.nodes[i].alpha / 2;
      count_corners(ch);
      s.nodes.push_back(std::move(ch));
    }
  }
  for (int i = 0; i < int(s.nodes.size()); ++i)
    if (s.nodes[i].cut.empty()) s.leaves.push_back(i);
  std::sort(s.leaves.begin(), s.leaves.end(), [&](int a, int b) { return s.nodes[a].word < s.nodes[b].word; });
  return s;
}

std::vector<CutScheme> cut_scheme(const ResolventDiagram& d) {
  for (int i = 0; i < d.num_components(); ++i)
    if (!component_secured(d, i)) throw std::invalid_argument("cutting scheme needs a secured diagram");
  std::vector<CutScheme> out;
  for (int i = 0; i < d.num_components(); ++i) out.push_back(cut_component(d, i));
  return out;
}

EdgeContent edge_content(const ColouredMap& map) {
  EdgeContent c;
  for (const auto& e : map.edges()) (e.dashed ? c.loop : c.tree)++;
  c.tree += count_kind(map, CornerKind::D1_block) + 2 * count_kind(map, CornerKind::D2_block) +
            count_kind(map, CornerKind::renorm_block);
  return c;
}

bool convergence_predicate(const ColouredMap& map) {
  auto c = edge_content(map);
  return c.tree >= 5 || (c.tree >= 2 && c.loop >= 1) || c.loop >= 2;
}

ExponentAudit exponent_audit(const CutScheme& s) {
  ExponentAudit a;
  const auto& root = s.nodes.at(0);
  a.c_a = root.c_a;
  a.c_ar = root.c_ar;
  a.edges = int(root.cycle.edges.size());
  for (const auto& [sc, n] : root.c_a) {
    a.closed[sc] = Rational(n) - Rational(root.c_ar.count(sc) ? root.c_ar.at(sc) : 0) / 2;
    a.recursive[sc] = 0;
  }
  a.edges_recursive = 0;
  for (int i : s.leaves) {
    const auto& n = s.nodes[i];
    for (const auto& [sc, cnt] : n.c_a) a.recursive[sc] += n.alpha * cnt;
    a.edges_recursive += n.alpha * int(n.cycle.edges.size());
  }
  for (const auto& [sc, v] : a.recursive) {
    if (!a.closed.count(sc) || a.closed.at(sc) != v) a.consistent = false;
    a.closed.emplace(sc, 0);
  }
  if (a.edges_recursive != a.edges) a.consistent = false;
  for (const auto& [sc, n] : a.c_a)
    if (n >= 4 && a.closed.at(sc) < 2) a.bound_ok = false;
  return a;
}

// ---------------------------------------------------------------------------
// serialization

nlohmann::json to_json(const ResolventDiagram& d) {
  return nlohmann::json{{"map", to_json(d.map())}, {"history", d.history()}};
}

ResolventDiagram resolvent_diagram_from_json(const nlohmann::json& j) {
  if (j.contains("map"))
    return ResolventDiagram(map_from_json(j.at("map")), j.value("history", std::vector<std::string>{}));
  return ResolventDiagram(map_from_json(j));
}

nlohmann::json to_json(const SecurityState& s) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : s.pairs)
    pairs.push_back({{"component", p.component},
                     {"dart", p.dart},
                     {"resolvent", p.resolvent},
                     {"side", p.side},
                     {"distance", p.distance}});
  return {{"m", s.m},          {"c", s.c},           {"psi", s.psi},
          {"resolvents", s.resolvents}, {"secured", s.secured()}, {"pairs", pairs}};
}

nlohmann::json to_json(const CutScheme& s) {
  nlohmann::json leaves = nlohmann::json::array();
  for (int i : s.leaves) {
    const auto& n = s.nodes[i];
    auto m = n.map();
    leaves.push_back({{"word", n.word},
                      {"alpha", n.alpha.get_str()},
                      {"convergent", convergence_predicate(m)},
                      {"map", to_json(m)}});
  }
  return {{"component", s.component}, {"r", s.r},           {"k_tilde", s.k_tilde},
          {"direction", s.direction}, {"nodes", s.nodes.size()}, {"leaves", leaves}};
}

}  // namespace mlve
