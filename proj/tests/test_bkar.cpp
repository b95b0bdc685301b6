#include <gtest/gtest.h>

#include <set>

#include "mlve/bkar.hpp"

using namespace mlve;

namespace {

// independent count: acyclic edge subsets of size n-1
long brute_tree_count(int n) {
  std::vector<Edge> all;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) all.emplace_back(a, b);
  long count = 0;
  for (unsigned long mask = 0; mask < (1UL << all.size()); ++mask) {
    if (__builtin_popcountl(mask) != n - 1) continue;
    Forest f;
    f.n = n;
    for (size_t e = 0; e < all.size(); ++e)
      if (mask >> e & 1UL) f.edges.push_back(all[e]);
    count += f.is_acyclic();
  }
  return count;
}

}  // namespace

TEST(Bkar, TreeCounts) {
  EXPECT_EQ(enumerate_trees(1).size(), 1u);
  EXPECT_TRUE(enumerate_trees(1)[0].edges.empty());
  EXPECT_EQ(enumerate_trees(2).size(), 1u);
  EXPECT_EQ(enumerate_trees(3).size(), 3u);
  EXPECT_EQ(enumerate_trees(5).size(), 125u);
  for (int n = 2; n <= 6; ++n) EXPECT_EQ(long(enumerate_trees(n).size()), brute_tree_count(n));
  EXPECT_THROW(enumerate_trees(9), std::invalid_argument);
  EXPECT_THROW(enumerate_trees(0), std::invalid_argument);
}

TEST(Bkar, TreesAreDistinctSpanningTrees) {
  auto trees = enumerate_trees(5);
  std::set<std::vector<Edge>> seen;
  for (auto t : trees) {
    EXPECT_TRUE(t.is_acyclic());
    EXPECT_EQ(t.components(), 1);
    std::sort(t.edges.begin(), t.edges.end());
    seen.insert(t.edges);
  }
  EXPECT_EQ(seen.size(), trees.size());
}

TEST(Bkar, TwoLevelTreeCounts) {
  EXPECT_EQ(enumerate_two_level_trees(2).size(), 2u);
  EXPECT_EQ(enumerate_two_level_trees(3).size(), 12u);
  EXPECT_EQ(enumerate_two_level_trees(4).size(), 128u);
  for (int n = 1; n <= 6; ++n) {
    long closed = ipow(2, n - 1) * (n >= 2 ? ipow(n, n - 2) : 1);
    EXPECT_EQ(long(enumerate_two_level_trees(n).size()), closed);
  }
  for (int n = 1; n <= 5; ++n)
    EXPECT_EQ(count_two_level_trees_bruteforce(n), long(enumerate_two_level_trees(n).size()));
  for (const auto& j : enumerate_two_level_trees(4)) {
    EXPECT_TRUE(j.valid(1));
    EXPECT_EQ(j.union_forest().components(), 1);
  }
}

TEST(Bkar, HardCore) {
  Jungle j;
  j.bosonic.n = j.fermionic.n = 3;
  j.bosonic.add_edge(0, 1);
  j.fermionic.add_edge(1, 2);
  j.scales = {1, 2, 2};
  EXPECT_EQ(hard_core_weight(j), 1);  // nodes 1,2 share a scale but sit in different blocks
  j.scales = {2, 2, 1};
  EXPECT_EQ(hard_core_weight(j), 0);
  j.scales = {0, 1, 1};
  EXPECT_FALSE(j.valid(3));
}

TEST(Bkar, WeakeningMatrixExamples) {
  Forest empty{3, {}};
  EXPECT_TRUE(weakening_matrix(empty, {}).isApprox(Eigen::MatrixXd::Identity(3, 3)));
  Forest path{3, {}};
  path.add_edge(0, 1);
  path.add_edge(1, 2);
  auto X = weakening_matrix(path, {0.3, 0.7});
  EXPECT_DOUBLE_EQ(X(0, 2), 0.3);
  EXPECT_DOUBLE_EQ(X(1, 2), 0.7);
  EXPECT_DOUBLE_EQ(X(1, 1), 1.0);
  auto T = weakening_matrix(path, {0.3, 0.7}, Covariance::tau);
  EXPECT_NEAR(T(0, 2), 0.09, 1e-15);
  EXPECT_THROW(weakening_matrix(path, {0.3}), std::invalid_argument);
  EXPECT_THROW(weakening_matrix(path, {0.3, 1.5}), std::invalid_argument);
}

TEST(Bkar, WeakeningMatrixPsdProperty) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < 500; ++s) {
    int n = 2 + s % 6;
    auto f = random_forest(n, rng);
    std::vector<double> w(f.edges.size());
    for (auto& x : w) x = u(rng);
    auto X = weakening_matrix(f, w);
    EXPECT_TRUE(is_psd(X));
    EXPECT_TRUE(is_psd(hadamard_square(X)));
    EXPECT_GE(X.minCoeff(), 0.0);
    EXPECT_LE(X.maxCoeff(), 1.0);
  }
}

TEST(Bkar, HadamardSquare) {
  auto I = Eigen::MatrixXd::Identity(4, 4);
  EXPECT_TRUE(hadamard_square(I).isApprox(I));
  auto J = Eigen::MatrixXd::Ones(4, 4);
  EXPECT_TRUE(hadamard_square(J).isApprox(J));
}

TEST(Bkar, ForestFormulaSmallExamples) {
  EntryPolynomial p(2);
  p.add_term(1, {{0, 1}});
  auto r = forest_formula(p);
  EXPECT_EQ(r.value, 1);
  EXPECT_EQ(r.forests, 2);

  EntryPolynomial q(3);
  q.add_term(1, {{0, 1}, {1, 2}});
  EXPECT_EQ(forest_formula(q).value, 1);

  EntryPolynomial s(3);
  s.add_term(1, {{0, 1}, {0, 1}});
  EXPECT_EQ(forest_formula(s).value, 1);
  // the single-edge forest alone gives int 2w dw = 1, the empty forest gives 0
  Forest e01{3, {{0, 1}}};
  EXPECT_EQ(forest_term_exact(s, e01), 1);
  EXPECT_EQ(forest_term_exact(s, Forest{3, {}}), 0);
}

TEST(Bkar, ForestFormulaMatchesAllOnes) {
  for (int n = 1; n <= 4; ++n)
    for (const auto& m : all_monomials(n, 4)) {
      auto r = forest_formula(m);
      ASSERT_TRUE(r.exact);
      EXPECT_EQ(r.value, m.eval_all_ones()) << "n=" << n;
    }
  EntryPolynomial mixed(4);
  mixed.add_term(Rational(3, 7), {{0, 1}, {2, 3}});
  mixed.add_term(-2, {{0, 3}, {0, 3}, {1, 2}});
  mixed.add_term(5, {});
  EXPECT_EQ(forest_formula(mixed).value, mixed.eval_all_ones());
}

TEST(Bkar, ForestFormulaMonteCarloFallback) {
  EntryPolynomial p(3);
  p.add_term(1, {{0, 1}, {1, 2}, {0, 2}});
  auto r = forest_formula(p, 1, 5, 100000);
  EXPECT_FALSE(r.exact);
  EXPECT_GT(r.std_error, 0.0);
  EXPECT_NEAR(to_double(r.value), 1.0, 6 * r.std_error);
}

TEST(Bkar, SetPartitions) {
  EXPECT_EQ(faa_di_bruno(1).size(), 1u);
  EXPECT_EQ(faa_di_bruno(3).size(), 5u);
  EXPECT_EQ(faa_di_bruno(5).size(), 52u);
  for (int n = 0; n <= 8; ++n) EXPECT_EQ(long(faa_di_bruno(n).size()), bell_number(n));
  for (const auto& p : faa_di_bruno(5)) {
    std::vector<int> hit(5, 0);
    for (const auto& b : p) {
      EXPECT_FALSE(b.empty());
      for (int x : b) ++hit[x];
    }
    for (int h : hit) EXPECT_EQ(h, 1);
  }
}

TEST(Bkar, GrassmannMinors) {
  auto I = Eigen::MatrixXd::Identity(4, 4);
  EXPECT_DOUBLE_EQ(grassmann_factor(I, {}, {}), 1.0);
  EXPECT_DOUBLE_EQ(grassmann_factor(I, {0}, {1}), 0.0);
  Eigen::MatrixXd bad = I;
  bad(0, 0) = -1;
  EXPECT_THROW(grassmann_factor(bad, {}, {}), std::invalid_argument);
  EXPECT_THROW(grassmann_factor(I, {0}, {}), std::invalid_argument);

  std::mt19937_64 rng(3);
  for (int s = 0; s < 200; ++s) {
    int n = 2 + s % 5;
    auto Y = random_unit_diagonal_psd(n, rng);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) EXPECT_LE(std::abs(grassmann_factor(Y, {r}, {c})), 1.0 + 1e-9);
  }
}
