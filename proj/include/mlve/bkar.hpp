#pragma once

#include <functional>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mlve/core.hpp"

namespace mlve {

using Edge = std::pair<int, int>;  // 0-based, first < second

struct Forest {
  int n = 0;
  std::vector<Edge> edges;

  void add_edge(int a, int b);
  bool is_acyclic() const;
  int components() const;
  std::vector<int> component_labels() const;
  // edge indices on the unique path a -> b; false if disconnected
  bool path_edges(int a, int b, std::vector<int>& out) const;
};

bool operator==(const Forest& a, const Forest& b);

// n^{n-2} labelled trees via Pruefer sequences; n = 1 yields the empty tree
std::vector<Forest> enumerate_trees(int n, int cap = 8);
void for_each_tree(int n, const std::function<void(const Forest&)>& f, int cap = 8);
// all forests on [n] (acyclic edge subsets of the complete graph)
std::vector<Forest> enumerate_forests(int n, int cap = 6);
Forest random_forest(int n, std::mt19937_64& rng, double keep = 0.6);

// sigma covariance uses X, tau covariance uses the Hadamard square of X
enum class Covariance { sigma, tau };

struct Jungle {
  Forest bosonic;
  Forest fermionic;
  std::vector<int> scales;  // per node, in [1, j_max]
  std::vector<int> fermionic_scales;  // per fermionic edge
  Covariance covariance = Covariance::sigma;

  Forest union_forest() const;
  bool valid(int j_max) const;
};

// spanning trees with every edge marked bosonic or fermionic: 2^{n-1} n^{n-2}
std::vector<Jungle> enumerate_two_level_trees(int n, int cap = 8);
// independent count by labelling edges of K_n with {absent, B, F}
long count_two_level_trees_bruteforce(int n);
// zero if two nodes of one bosonic block share a scale
int hard_core_weight(const Jungle& j);

Eigen::MatrixXd weakening_matrix(const Forest& f, const std::vector<double>& w,
                                 Covariance kind = Covariance::sigma);
Eigen::MatrixXd hadamard_square(const Eigen::MatrixXd& X);
bool is_psd(const Eigen::MatrixXd& X, double tol = 1e-10);

// polynomial in the off-diagonal entries x_ab (a < b) of a symmetric n x n matrix
class EntryPolynomial {
 public:
  explicit EntryPolynomial(int n);
  int n() const { return n_; }
  int num_vars() const { return n_ * (n_ - 1) / 2; }
  int var(int a, int b) const;
  // add coeff * prod x_{pairs}
  void add_term(const Rational& coeff, const std::vector<Edge>& pairs);
  Rational eval_all_ones() const;
  int degree() const;
  const std::map<std::vector<int>, Rational>& terms() const { return terms_; }

 private:
  int n_;
  std::map<std::vector<int>, Rational> terms_;  // exponent vector -> coefficient
};

struct ForestFormulaResult {
  Rational value;
  long forests = 0;
  bool exact = true;
  double std_error = 0.0;  // Monte Carlo fallback only
};

// sum over forests F of int dw d_F P(X(w)); exact by sector decomposition up to 7 edges
ForestFormulaResult forest_formula(const EntryPolynomial& p, int max_exact_edges = 7,
                                   unsigned seed = 1, long mc_samples = 200000);
// contribution of a single forest
Rational forest_term_exact(const EntryPolynomial& p, const Forest& f);

// all monomials of total degree <= d in the off-diagonal entries
std::vector<EntryPolynomial> all_monomials(int n, int max_degree);

using SetPartition = std::vector<std::vector<int>>;
std::vector<SetPartition> faa_di_bruno(int size);
long bell_number(int n);

// minor of Y with the listed rows and columns deleted; Y must be PSD with unit diagonal
double grassmann_factor(const Eigen::MatrixXd& Y, const std::vector<int>& del_rows,
                        const std::vector<int>& del_cols);
Eigen::MatrixXd random_unit_diagonal_psd(int n, std::mt19937_64& rng);

}  // namespace mlve
