#include <cmath>
#include <gtest/gtest.h>

#include <random>

#include "mlve/securing.hpp"

using namespace mlve;

namespace {

using K = CornerKind;

Element d(int h) { return Element{h, {}}; }
Element it(K k, int scale = 1) { return Element{-1, {k, scale}}; }
Element P(int scale = 1) { return it(K::prop_leq, scale); }
Element X(int scale = 1) { return it(K::prop_exact, scale); }
Element R(int scale = 1) { return it(K::resolvent, scale); }
Element D(int scale = 1) { return it(K::D1_block, scale); }

ResolventDiagram diagram(std::vector<std::vector<Element>> cycles, std::vector<MapEdge> edges) {
  return ResolventDiagram(from_cycles(Cycles{std::move(cycles), std::move(edges)}));
}

MapEdge tree_edge(int a, int b) { return {a, b, EdgeColour{1, true}, false}; }
MapEdge loop_edge(int a, int b) { return {a, b, EdgeColour{2, false}, true}; }

// s1 [S^a] R [S^b] s2 with a tree chord (s1, s2)
ResolventDiagram one_tree_chord(int a, int b) {
  std::vector<Element> seq{d(0), P()};
  for (int i = 0; i < a; ++i) seq.insert(seq.end(), {D(), P()});
  seq.push_back(R());
  for (int i = 0; i < b; ++i) seq.insert(seq.end(), {P(), D()});
  seq.push_back(X());
  seq.push_back(d(1));
  return diagram({seq}, {tree_edge(0, 1)});
}

std::vector<ResolventDiagram> corpus(int count, unsigned seed, int max_psi) {
  std::mt19937_64 rng(seed);
  std::vector<ResolventDiagram> out;
  int tries = 0;
  while (int(out.size()) < count && tries < 200 * count) {
    ++tries;
    int size = 2 + int(rng() % 2);
    auto rd = random_resolvent_diagram(rng, size);
    if (security_state(rd).psi <= max_psi) out.push_back(rd);
  }
  return out;
}

}  // namespace

TEST(Securing, CyclesRoundTrip) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    auto m = random_map(rng, 1 + int(rng() % 3), int(rng() % 5));
    auto y = from_cycles(to_cycles(m));
    EXPECT_EQ(canonical_form(y), canonical_form(m));
    EXPECT_EQ(from_cycles(to_cycles(y)), y);
  }
}

TEST(Securing, ResolventFreeIsSecured) {
  auto g = diagram({{d(0), P(), d(1), X()}, {d(2), P(), d(3), P()}}, {tree_edge(0, 1), loop_edge(2, 3)});
  auto st = security_state(g);
  EXPECT_TRUE(st.secured());
  EXPECT_EQ(st.m, 0);
  EXPECT_EQ(st.c, 2);
  EXPECT_EQ(st.psi, 18);
  auto res = secure(g);
  EXPECT_EQ(res.leaf_count, 1);
  EXPECT_EQ(res.max_depth, 0);
}

TEST(Securing, DistanceZeroPair) {
  // R adjacent to s1 on its left; six D-blocks separate it from s2 on the right
  auto g = one_tree_chord(0, 6);
  auto st = security_state(g);
  ASSERT_EQ(st.pairs.size(), 2u);
  EXPECT_EQ(st.m, 6);
  EXPECT_EQ(st.psi, 6);
  EXPECT_FALSE(st.secured());
  auto tr = tree_resolvents(g, 0);
  ASSERT_EQ(tr.size(), 1u);
  EXPECT_TRUE(tr[0].right_tree);
  EXPECT_TRUE(tr[0].left_tree);
  EXPECT_EQ(tr[0].left, 0);
  EXPECT_EQ(tr[0].right, 6);
}

TEST(Securing, AllDistancesSixIsSecured) {
  auto g = one_tree_chord(6, 6);
  auto st = security_state(g);
  EXPECT_EQ(st.m, 0);
  EXPECT_TRUE(st.secured());
  EXPECT_TRUE(component_secured(g, 0));
  // seven on one side: not a tree-resolvent on that side
  auto h = one_tree_chord(7, 6);
  auto tr = tree_resolvents(h, 0);
  ASSERT_EQ(tr.size(), 1u);
  EXPECT_FALSE(tr[0].right_tree);
  EXPECT_TRUE(tr[0].left_tree);
  EXPECT_TRUE(security_state(h).secured());
}

TEST(Securing, ExpandChildren) {
  auto g = one_tree_chord(2, 6);
  ASSERT_EQ(g.num_resolvents(), 1);
  auto kids = expand_left(g, 0, 0);
  ASSERT_EQ(kids.size(), 3u);
  EXPECT_EQ(kids[0].num_resolvents(), 0);
  auto st = security_state(g);
  EXPECT_EQ(st.m, 4);
  EXPECT_EQ(security_state(kids[1]).m, 3);  // D term
  EXPECT_EQ(kids[2].num_resolvents(), 2);   // loop on itself
  EXPECT_EQ(security_state(kids[2]).m, 3);
  EXPECT_EQ(kids[2].map().num_edges(), 2);
  EXPECT_EQ(kids[0].history().back(), "L(0,0):id");
  EXPECT_THROW(expand_right(g, 0, 1), std::invalid_argument);
  EXPECT_THROW(expand_right(g, 1, 0), std::invalid_argument);
}

TEST(Securing, TreeEdgeChildMergesComponents) {
  // component A: s1 [S^2] R [S^6] s2 ; component B: t1 R' t2 with R' six away from both
  std::vector<Element> a{d(0), P(), D(), P(), D(), P(), R(), P()};
  for (int i = 0; i < 6; ++i) a.insert(a.end(), {D(), P()});
  a.push_back(d(1));
  std::vector<Element> b{d(2), P()};
  for (int i = 0; i < 6; ++i) b.insert(b.end(), {D(), P()});
  b.push_back(R(2));
  for (int i = 0; i < 6; ++i) b.insert(b.end(), {P(2), D(2)});
  b.push_back(d(3));
  auto g = diagram({a, b}, {tree_edge(0, 1), tree_edge(2, 3)});
  auto st = security_state(g);
  EXPECT_EQ(st.c, 2);
  EXPECT_EQ(st.m, 4);
  auto kids = expand_left(g, 0, 0);
  ASSERT_EQ(kids.size(), 4u);
  const auto& tree_child = kids[3];
  EXPECT_EQ(tree_child.num_components(), 1);
  auto sk = security_state(tree_child);
  EXPECT_EQ(sk.c, st.c - 1);
  EXPECT_EQ(sk.m - st.m, 12 + 2);
  EXPECT_LT(sk.psi, st.psi);
  EXPECT_NE(tree_child.history().back().find("tree"), std::string::npos);
}

TEST(Securing, ChooseExpandBranches) {
  // right tree-resolvent with Left = 0: expand on the left
  auto g = one_tree_chord(0, 7);
  auto kids = choose_expand(g, 0);
  EXPECT_EQ(kids[0].history().back().substr(0, 1), "L");
  // left tree-resolvent only, Right = 5: expand on the right
  auto h = one_tree_chord(7, 5);
  kids = choose_expand(h, 0);
  EXPECT_EQ(kids[0].history().back().substr(0, 1), "R");
  EXPECT_THROW(choose_expand(one_tree_chord(6, 6), 0), std::invalid_argument);
}

TEST(Securing, SmallestNontrivialTerminates) {
  auto g = one_tree_chord(0, 6);
  auto res = secure(g);
  EXPECT_TRUE(res.complete);
  EXPECT_GT(res.leaf_count, 1);
  EXPECT_TRUE(res.leaves_secured);
  EXPECT_TRUE(res.depth_ok);
  EXPECT_TRUE(res.bound_ok);
  EXPECT_LE(res.max_depth, res.psi_initial);
  for (const auto& l : res.leaves) EXPECT_TRUE(security_state(l).secured());
}

TEST(Securing, ContractionCounts) {
  EXPECT_EQ(contraction_count(0, 5), 1);
  EXPECT_EQ(contraction_count(2, 0), 1);
  EXPECT_EQ(contraction_count(4, 0), 3);
  EXPECT_EQ(contraction_count(1, 2), 2);
  // first step offers the other sigma or one of the r resolvents
  for (int r = 0; r <= 3; ++r) EXPECT_EQ(contraction_count(2, r), 1 + r * (r + 1));

  // zero insertions: unchanged
  auto m = ColouredMap({{0, 1}}, {{0, 1, EdgeColour{}, false}});
  auto b = contract_sigmas(m);
  ASSERT_EQ(b.graphs.size(), 1u);
  EXPECT_EQ(b.graphs[0], m);

  // two insertions on one vertex with r resolvents: brute force vs recursion
  for (int r = 0; r <= 2; ++r) {
    std::vector<Element> seq{d(0), P(), it(K::sigma_plus_B), P(), it(K::sigma_plus_B)};
    for (int i = 0; i < r; ++i) seq.insert(seq.end(), {P(), R()});
    seq.push_back(d(1));
    auto g = from_cycles(Cycles{{seq}, {MapEdge{0, 1, EdgeColour{}, false}}});
    auto out = contract_sigmas(g);
    EXPECT_EQ(long(out.graphs.size()), contraction_count(2, r));
    for (const auto& x : out.graphs) {
      EXPECT_EQ(count_kind(x, K::sigma_plus_B), 0);
      // one edge per contraction step: 1 for sigma-sigma, 2 through resolvents
      EXPECT_TRUE(x.num_edges() == 2 || x.num_edges() == 3);
    }
  }
}

TEST(Securing, ContractionEdgeBound) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 40; ++t) {
    int size = 2 + int(rng() % 2);
    auto rd = random_resolvent_diagram(rng, size, true);
    EXPECT_LE(rd.map().num_edges(), 4 * (size - 1) + 24 * (size - 1));
    EXPECT_TRUE(resolvent_spacing_ok(rd));
  }
}

TEST(Securing, MirrorAndQuadruple) {
  std::vector<Element> seq{d(0), X(), R(), P(), D(), d(1), P()};
  auto g = from_cycles(Cycles{{seq}, {MapEdge{0, 1, EdgeColour{}, false}}});
  auto m = mirror_conjugate(g);
  EXPECT_EQ(count_kind(m, K::resolvent_dagger), 1);
  EXPECT_EQ(count_kind(m, K::resolvent), 0);
  EXPECT_EQ(mirror_conjugate(m), g);
  auto q = skeleton_quadruple(g);
  EXPECT_EQ(q.num_vertices(), 4);
  EXPECT_EQ(q.num_edges(), 4);
}

TEST(Securing, ExhaustiveSmallDiagrams) {
  for (int a = 2; a <= 6; ++a)
    for (int b = 6 - a; b <= 6; ++b) {
      auto g = one_tree_chord(a, b);
      auto res = secure(g);
      ASSERT_TRUE(res.complete);
      EXPECT_EQ(res.psi_initial, 12 - a - b);
      EXPECT_TRUE(res.leaves_secured);
      EXPECT_TRUE(res.between_ok);
      EXPECT_TRUE(res.depth_ok);
      EXPECT_TRUE(res.bound_ok);
      EXPECT_EQ(res.leaf_count, long(res.leaves.size()));
      for (const auto& l : res.leaves) EXPECT_TRUE(security_state(l).secured());
    }
}

TEST(Securing, SampledCorpusAudit) {
  auto diagrams = corpus(12, 5, 14);
  ASSERT_EQ(diagrams.size(), 12u);
  std::mt19937_64 rng(17);
  for (const auto& g : diagrams) {
    SecureOptions opt;
    opt.block_n = 2;
    auto a = secure_sampled(g, rng, 3, 3, opt);
    ASSERT_TRUE(a.complete);
    EXPECT_TRUE(a.leaves_secured);
    EXPECT_TRUE(a.between_ok);
    EXPECT_TRUE(a.depth_ok);
    EXPECT_TRUE(a.bound_ok);
    EXPECT_EQ(a.leaves.size(), 3u);
    for (const auto& l : a.leaves) EXPECT_TRUE(security_state(l).secured());
  }
}

TEST(Securing, SampledMatchesExhaustive) {
  // with the whole tree below the threshold the estimate is exact
  auto g = one_tree_chord(3, 4);
  auto full = secure(g);
  std::mt19937_64 rng(1);
  auto a = secure_sampled(g, rng, 2, 10);
  EXPECT_NEAR(a.log_leaf_estimate, std::log(double(full.leaf_count)), 1e-12);
}

TEST(Securing, CutSchemeExponents) {
  // r = 0: identity
  auto g0 = one_tree_chord(6, 6);
  auto id = diagram({{d(0), X(), D(), P(), d(1), P()}}, {tree_edge(0, 1)});
  auto s0 = cut_component(id, 0);
  EXPECT_EQ(s0.leaves.size(), 1u);
  EXPECT_EQ(s0.nodes[s0.leaves[0]].alpha, 1);

  // r = 1
  auto s1 = cut_component(g0, 0);
  ASSERT_EQ(s1.leaves.size(), 2u);
  EXPECT_EQ(s1.nodes[s1.leaves[0]].word, "0");
  EXPECT_EQ(s1.nodes[s1.leaves[0]].alpha, Rational(1, 2));
  EXPECT_EQ(s1.nodes[s1.leaves[1]].word, "1");
  EXPECT_EQ(s1.k_tilde, 1);
  for (int i : s1.leaves) EXPECT_TRUE(convergence_predicate(s1.nodes[i].map()));
  EXPECT_THROW(cut_component(one_tree_chord(0, 6), 0), std::invalid_argument);
}

namespace {

// a secured one-vertex diagram with r resolvents, each six D-blocks away from
// a tree chord on both sides
ResolventDiagram secured_ring(int r) {
  std::vector<Element> seq;
  std::vector<MapEdge> edges;
  int h = 0;
  for (int i = 0; i < r; ++i) {
    int a = h++, b = h++;
    seq.push_back(d(a));
    for (int k = 0; k < 6; ++k) seq.insert(seq.end(), {P(), D()});
    seq.insert(seq.end(), {X(1 + i % 2), R(1 + i % 2), P()});
    for (int k = 0; k < 6; ++k) seq.insert(seq.end(), {D(), P()});
    seq.push_back(d(b));
    seq.push_back(P());
    edges.push_back(tree_edge(a, b));
  }
  return diagram({seq}, edges);
}

}  // namespace

TEST(Securing, CutSchemePatterns) {
  auto check = [](int r, std::vector<std::pair<std::string, Rational>> want) {
    auto g = secured_ring(r);
    ASSERT_TRUE(security_state(g).secured());
    auto s = cut_component(g, 0);
    ASSERT_EQ(s.leaves.size(), want.size()) << "r=" << r;
    for (size_t i = 0; i < want.size(); ++i) {
      const auto& n = s.nodes[s.leaves[i]];
      EXPECT_EQ(n.word, want[i].first);
      EXPECT_EQ(n.alpha, want[i].second);
      EXPECT_EQ(n.resolvents, 0);
      EXPECT_TRUE(convergence_predicate(n.map())) << "r=" << r << " word " << n.word;
    }
    auto a = exponent_audit(s);
    EXPECT_TRUE(a.consistent);
    EXPECT_TRUE(a.bound_ok);
  };
  const Rational h(1, 2), q(1, 4), e(1, 8), s(1, 16);
  check(1, {{"0", h}, {"1", h}});
  check(2, {{"0", h}, {"10", q}, {"11", q}});
  check(3, {{"0", h}, {"100", e}, {"101", e}, {"110", e}, {"111", e}});
  check(4, {{"00", q}, {"01", q}, {"10", q}, {"11", q}});
  std::vector<std::pair<std::string, Rational>> five{{"0", h}};
  for (int w = 0; w < 16; ++w) {
    std::string word = "1";
    for (int b = 3; b >= 0; --b) word += char('0' + ((w >> b) & 1));
    five.push_back({word, Rational(1, 32)});
  }
  check(5, five);
  (void)s;
}

TEST(Securing, ExponentAuditClosedForm) {
  // resolvent-free: m = c_a
  auto g = diagram({{d(0), X(3), D(), P(), X(3), d(1), X(3), P(), X(3)}}, {tree_edge(0, 1)});
  auto a = exponent_audit(cut_component(g, 0));
  EXPECT_EQ(a.closed.at(3), 4);
  EXPECT_EQ(a.recursive.at(3), 4);
  // four marked corners of one scale, all next to resolvents: m = 2
  auto ring = secured_ring(4);
  auto cyc = ring.cycles();
  for (auto& e : cyc.cycles[0])
    if (e.label.kind == K::prop_exact) e.label.scale = 7;
  auto s = cut_component(ResolventDiagram(from_cycles(cyc)), 0);
  auto b = exponent_audit(s);
  EXPECT_EQ(b.c_a.at(7), 4);
  EXPECT_EQ(b.c_ar.at(7), 4);
  EXPECT_EQ(b.closed.at(7), 2);
  EXPECT_EQ(b.recursive.at(7), 2);
  EXPECT_TRUE(b.bound_ok);
}

TEST(Securing, CutSchemeOnSecuredCorpus) {
  auto diagrams = corpus(6, 9, 12);
  std::mt19937_64 rng(4);
  int cut = 0;
  for (const auto& g : diagrams) {
    auto a = secure_sampled(g, rng, 2, 3);
    ASSERT_TRUE(a.complete);
    for (const auto& leaf : a.leaves) {
      for (const auto& s : cut_scheme(leaf)) {
        auto e = exponent_audit(s);
        EXPECT_TRUE(e.consistent);
        for (int l : s.leaves) EXPECT_EQ(s.nodes[l].resolvents, 0);
        ++cut;
      }
    }
  }
  EXPECT_GT(cut, 0);
}

TEST(Securing, JsonRoundTrip) {
  auto g = one_tree_chord(1, 3);
  auto back = resolvent_diagram_from_json(to_json(g));
  EXPECT_EQ(back.map(), g.map());
  auto j = to_json(security_state(g));
  EXPECT_EQ(j["m"], 5 + 3);
  auto s = to_json(cut_component(one_tree_chord(6, 6), 0));
  EXPECT_EQ(s["leaves"].size(), 2u);
}
