#include "mlve/bkar.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <tbb/parallel_for.h>

namespace mlve {

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

std::vector<Edge> complete_edges(int n) {
  std::vector<Edge> out;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) out.emplace_back(a, b);
  return out;
}

void check_cap(int n, int cap) {
  if (n < 1) throw std::invalid_argument("enumeration needs n >= 1");
  if (n > cap) throw std::invalid_argument("n exceeds enumeration cap " + std::to_string(cap));
}

Forest pruefer_decode(const std::vector<int>& seq, int n) {
  Forest f;
  f.n = n;
  std::vector<int> degree(n, 1);
  for (int x : seq) ++degree[x];
  for (int x : seq) {
    for (int leaf = 0; leaf < n; ++leaf) {
      if (degree[leaf] == 1) {
        f.add_edge(leaf, x);
        --degree[leaf];
        --degree[x];
        break;
      }
    }
  }
  int u = -1;
  for (int v = 0; v < n; ++v) {
    if (degree[v] == 1) {
      if (u < 0) {
        u = v;
      } else {
        f.add_edge(u, v);
        break;
      }
    }
  }
  return f;
}

}  // namespace

void Forest::add_edge(int a, int b) {
  if (a == b) throw std::invalid_argument("forest edge cannot be a self-loop");
  if (a < 0 || b < 0 || a >= n || b >= n) throw std::invalid_argument("forest edge out of range");
  edges.emplace_back(std::min(a, b), std::max(a, b));
}

bool Forest::is_acyclic() const {
  UnionFind uf(n);
  for (auto [a, b] : edges)
    if (!uf.unite(a, b)) return false;
  return true;
}

std::vector<int> Forest::component_labels() const {
  UnionFind uf(n);
  for (auto [a, b] : edges) uf.unite(a, b);
  std::vector<int> out(n);
  for (int v = 0; v < n; ++v) out[v] = uf.find(v);
  return out;
}

int Forest::components() const {
  auto lab = component_labels();
  std::sort(lab.begin(), lab.end());
  return int(std::unique(lab.begin(), lab.end()) - lab.begin());
}

bool Forest::path_edges(int a, int b, std::vector<int>& out) const {
  out.clear();
  if (a == b) return true;
  // BFS from a recording the edge used to reach each vertex
  std::vector<int> via(n, -1), prev(n, -1);
  std::vector<char> seen(n, 0);
  std::vector<int> queue{a};
  seen[a] = 1;
  for (size_t h = 0; h < queue.size(); ++h) {
    int v = queue[h];
    for (int e = 0; e < int(edges.size()); ++e) {
      auto [x, y] = edges[e];
      int w = x == v ? y : (y == v ? x : -1);
      if (w < 0 || seen[w]) continue;
      seen[w] = 1;
      via[w] = e;
      prev[w] = v;
      queue.push_back(w);
    }
  }
  if (!seen[b]) return false;
  for (int v = b; v != a; v = prev[v]) out.push_back(via[v]);
  return true;
}

bool operator==(const Forest& a, const Forest& b) {
  if (a.n != b.n) return false;
  auto ea = a.edges, eb = b.edges;
  std::sort(ea.begin(), ea.end());
  std::sort(eb.begin(), eb.end());
  return ea == eb;
}

void for_each_tree(int n, const std::function<void(const Forest&)>& f, int cap) {
  check_cap(n, cap);
  if (n == 1) {
    f(Forest{1, {}});
    return;
  }
  std::vector<int> seq(n - 2, 0);
  while (true) {
    f(pruefer_decode(seq, n));
    int i = n - 3;
    while (i >= 0 && seq[i] == n - 1) seq[i--] = 0;
    if (i < 0) break;
    ++seq[i];
  }
}

std::vector<Forest> enumerate_trees(int n, int cap) {
  std::vector<Forest> out;
  for_each_tree(n, [&](const Forest& t) { out.push_back(t); }, cap);
  return out;
}

std::vector<Forest> enumerate_forests(int n, int cap) {
  check_cap(n, cap);
  auto all = complete_edges(n);
  std::vector<Forest> out;
  const unsigned long subsets = 1UL << all.size();
  for (unsigned long mask = 0; mask < subsets; ++mask) {
    Forest f;
    f.n = n;
    UnionFind uf(n);
    bool ok = true;
    for (size_t e = 0; e < all.size() && ok; ++e) {
      if (!(mask >> e & 1UL)) continue;
      ok = uf.unite(all[e].first, all[e].second);
      f.edges.push_back(all[e]);
    }
    if (ok) out.push_back(std::move(f));
  }
  return out;
}

Forest random_forest(int n, std::mt19937_64& rng, double keep) {
  Forest f;
  f.n = n;
  auto all = complete_edges(n);
  std::shuffle(all.begin(), all.end(), rng);
  std::bernoulli_distribution coin(keep);
  UnionFind uf(n);
  for (auto [a, b] : all)
    if (coin(rng) && uf.find(a) != uf.find(b)) {
      uf.unite(a, b);
      f.edges.emplace_back(a, b);
    }
  return f;
}

Forest Jungle::union_forest() const {
  Forest u = bosonic;
  u.edges.insert(u.edges.end(), fermionic.edges.begin(), fermionic.edges.end());
  return u;
}

bool Jungle::valid(int j_max) const {
  if (bosonic.n != fermionic.n || int(scales.size()) != bosonic.n) return false;
  if (!union_forest().is_acyclic()) return false;
  if (!fermionic_scales.empty() && fermionic_scales.size() != fermionic.edges.size()) return false;
  for (int s : scales)
    if (s < 1 || s > j_max) return false;
  return true;
}

std::vector<Jungle> enumerate_two_level_trees(int n, int cap) {
  std::vector<Jungle> out;
  for_each_tree(
      n,
      [&](const Forest& t) {
        const int k = int(t.edges.size());
        for (unsigned long mark = 0; mark < (1UL << k); ++mark) {
          Jungle j;
          j.bosonic.n = j.fermionic.n = n;
          j.scales.assign(n, 1);
          for (int e = 0; e < k; ++e)
            (mark >> e & 1UL ? j.fermionic : j.bosonic).edges.push_back(t.edges[e]);
          out.push_back(std::move(j));
        }
      },
      cap);
  return out;
}

long count_two_level_trees_bruteforce(int n) {
  check_cap(n, 6);
  auto all = complete_edges(n);
  const int m = int(all.size());
  long total = 1;
  for (int i = 0; i < m; ++i) total *= 3;
  long count = 0;
  std::vector<int> label(m, 0);
  for (long code = 0; code < total; ++code) {
    long c = code;
    int used = 0;
    for (int i = 0; i < m; ++i) {
      label[i] = int(c % 3);
      c /= 3;
      used += label[i] != 0;
    }
    if (used != n - 1) continue;
    UnionFind uf(n);
    bool ok = true;
    for (int i = 0; i < m && ok; ++i)
      if (label[i]) ok = uf.unite(all[i].first, all[i].second);
    count += ok;
  }
  return count;
}

int hard_core_weight(const Jungle& j) {
  auto lab = j.bosonic.component_labels();
  for (int a = 0; a < j.bosonic.n; ++a)
    for (int b = a + 1; b < j.bosonic.n; ++b)
      if (lab[a] == lab[b] && j.scales.at(a) == j.scales.at(b)) return 0;
  return 1;
}

Eigen::MatrixXd weakening_matrix(const Forest& f, const std::vector<double>& w, Covariance kind) {
  if (w.size() != f.edges.size()) throw std::invalid_argument("one weakening parameter per edge");
  for (double x : w)
    if (x < 0.0 || x > 1.0) throw std::invalid_argument("weakening parameters must lie in [0,1]");
  Eigen::MatrixXd X = Eigen::MatrixXd::Identity(f.n, f.n);
  std::vector<int> path;
  for (int a = 0; a < f.n; ++a)
    for (int b = a + 1; b < f.n; ++b) {
      if (!f.path_edges(a, b, path)) continue;
      double m = 1.0;
      for (int e : path) m = std::min(m, w[e]);
      X(a, b) = X(b, a) = m;
    }
  return kind == Covariance::tau ? hadamard_square(X) : X;
}

Eigen::MatrixXd hadamard_square(const Eigen::MatrixXd& X) { return X.cwiseProduct(X); }

bool is_psd(const Eigen::MatrixXd& X, double tol) {
  if (X.rows() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

EntryPolynomial::EntryPolynomial(int n) : n_(n) {
  if (n < 1) throw std::invalid_argument("polynomial needs n >= 1");
}

int EntryPolynomial::var(int a, int b) const {
  if (a == b || a < 0 || b < 0 || a >= n_ || b >= n_)
    throw std::invalid_argument("only off-diagonal entries are variables");
  if (a > b) std::swap(a, b);
  // row-major index over pairs a < b
  return a * n_ - a * (a + 1) / 2 + (b - a - 1);
}

void EntryPolynomial::add_term(const Rational& coeff, const std::vector<Edge>& pairs) {
  std::vector<int> e(num_vars(), 0);
  for (auto [a, b] : pairs) ++e[var(a, b)];
  terms_[e] += coeff;
  if (terms_[e] == 0) terms_.erase(e);
}

Rational EntryPolynomial::eval_all_ones() const {
  Rational s = 0;
  for (const auto& [e, c] : terms_) s += c;
  return s;
}

int EntryPolynomial::degree() const {
  int d = 0;
  for (const auto& [e, c] : terms_) d = std::max(d, std::accumulate(e.begin(), e.end(), 0));
  return d;
}

namespace {

// d_F applied to one monomial; false if it vanishes
bool differentiate(const EntryPolynomial& p, const Forest& f, std::vector<int>& e, Rational& c) {
  for (auto [a, b] : f.edges) {
    int v = p.var(a, b);
    if (e[v] == 0) return false;
    c *= e[v];
    --e[v];
  }
  return true;
}

struct PathTable {
  std::vector<std::vector<int>> paths;  // per variable; empty and disconnected flagged below
  std::vector<char> connected;
};

PathTable path_table(const EntryPolynomial& p, const Forest& f) {
  PathTable t;
  t.paths.resize(p.num_vars());
  t.connected.assign(p.num_vars(), 0);
  for (int a = 0; a < p.n(); ++a)
    for (int b = a + 1; b < p.n(); ++b) {
      int v = p.var(a, b);
      t.connected[v] = f.path_edges(a, b, t.paths[v]);
    }
  return t;
}

}  // namespace

Rational forest_term_exact(const EntryPolynomial& p, const Forest& f) {
  if (f.n != p.n()) throw std::invalid_argument("forest and polynomial sizes differ");
  const int k = int(f.edges.size());
  auto table = path_table(p, f);
  // derivative terms that survive evaluation on X(w)
  std::vector<std::pair<std::vector<int>, Rational>> live;
  for (const auto& [e0, c0] : p.terms()) {
    auto e = e0;
    Rational c = c0;
    if (!differentiate(p, f, e, c)) continue;
    bool ok = true;
    for (int v = 0; v < p.num_vars() && ok; ++v)
      if (e[v] > 0 && !table.connected[v]) ok = false;
    if (ok) live.emplace_back(std::move(e), c);
  }
  if (live.empty()) return 0;
  if (k == 0) {
    Rational s = 0;
    for (auto& [e, c] : live) s += c;
    return s;
  }
  // sector decomposition: rank[e] = position of edge e in increasing w order
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> rank(k), y_exp(k);
  Rational total = 0;
  do {
    for (int i = 0; i < k; ++i) rank[order[i]] = i;
    for (auto& [e, c] : live) {
      std::fill(y_exp.begin(), y_exp.end(), 0);
      for (int v = 0; v < p.num_vars(); ++v) {
        if (e[v] == 0) continue;
        int r = k;
        for (int edge : table.paths[v]) r = std::min(r, rank[edge]);
        y_exp[r] += e[v];
      }
      // integral of prod y_i^{e_i} over 0 < y_1 < ... < y_k < 1
      Rational term = c;
      long acc = 0;
      for (int i = 0; i < k; ++i) {
        acc += y_exp[i] + 1;
        term /= acc;
      }
      total += term;
    }
  } while (std::next_permutation(order.begin(), order.end()));
  return total;
}

namespace {

double forest_term_mc(const EntryPolynomial& p, const Forest& f, std::mt19937_64& rng, long samples,
                      double& std_error) {
  const int k = int(f.edges.size());
  auto table = path_table(p, f);
  std::vector<std::pair<std::vector<int>, double>> live;
  for (const auto& [e0, c0] : p.terms()) {
    auto e = e0;
    Rational c = c0;
    if (differentiate(p, f, e, c)) live.emplace_back(std::move(e), c.get_d());
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(k), x(p.num_vars());
  double sum = 0.0, sum_sq = 0.0;
  for (long s = 0; s < samples; ++s) {
    for (auto& wi : w) wi = u(rng);
    for (int v = 0; v < p.num_vars(); ++v) {
      if (!table.connected[v]) {
        x[v] = 0.0;
        continue;
      }
      double m = 1.0;
      for (int edge : table.paths[v]) m = std::min(m, w[edge]);
      x[v] = m;
    }
    double val = 0.0;
    for (auto& [e, c] : live) {
      double t = c;
      for (int v = 0; v < p.num_vars(); ++v)
        if (e[v]) t *= std::pow(x[v], e[v]);
      val += t;
    }
    sum += val;
    sum_sq += val * val;
  }
  double mean = sum / samples;
  double var = std::max(0.0, sum_sq / samples - mean * mean);
  std_error = std::sqrt(var / samples);
  return mean;
}

}  // namespace

ForestFormulaResult forest_formula(const EntryPolynomial& p, int max_exact_edges, unsigned seed,
                                   long mc_samples) {
  auto forests = enumerate_forests(p.n());
  std::vector<Rational> exact(forests.size(), 0);
  std::vector<double> approx(forests.size(), 0.0), err(forests.size(), 0.0);
  std::vector<char> is_mc(forests.size(), 0);
  tbb::parallel_for(size_t(0), forests.size(), [&](size_t i) {
    const auto& f = forests[i];
    if (int(f.edges.size()) <= max_exact_edges) {
      exact[i] = forest_term_exact(p, f);
    } else {
      std::mt19937_64 rng(seed + 7919UL * i);
      is_mc[i] = 1;
      approx[i] = forest_term_mc(p, f, rng, mc_samples, err[i]);
    }
  });
  ForestFormulaResult r;
  r.forests = long(forests.size());
  r.value = 0;
  double mc_sum = 0.0, var = 0.0;
  for (size_t i = 0; i < forests.size(); ++i) {
    if (is_mc[i]) {
      r.exact = false;
      mc_sum += approx[i];
      var += err[i] * err[i];
    } else {
      r.value += exact[i];
    }
  }
  if (!r.exact) {
    r.value += Rational(mc_sum);
    r.std_error = std::sqrt(var);
  }
  return r;
}

std::vector<EntryPolynomial> all_monomials(int n, int max_degree) {
  const int m = n * (n - 1) / 2;
  std::vector<EntryPolynomial> out;
  std::vector<int> e(m, 0);
  std::function<void(int, int)> rec = [&](int v, int left) {
    if (v == m) {
      EntryPolynomial p(n);
      std::vector<Edge> pairs;
      for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
          for (int r = 0; r < e[p.var(a, b)]; ++r) pairs.emplace_back(a, b);
      p.add_term(1, pairs);
      out.push_back(std::move(p));
      return;
    }
    for (int d = 0; d <= left; ++d) {
      e[v] = d;
      rec(v + 1, left - d);
    }
    e[v] = 0;
  };
  rec(0, max_degree);
  return out;
}

std::vector<SetPartition> faa_di_bruno(int size) {
  if (size < 0) throw std::invalid_argument("set size must be non-negative");
  std::vector<SetPartition> out;
  if (size == 0) {
    out.push_back({});
    return out;
  }
  // restricted growth strings
  std::vector<int> a(size, 0), mx(size, 0);
  while (true) {
    int blocks = *std::max_element(a.begin(), a.end()) + 1;
    SetPartition p(blocks);
    for (int i = 0; i < size; ++i) p[a[i]].push_back(i);
    out.push_back(std::move(p));
    int i = size - 1;
    while (i > 0 && a[i] == mx[i - 1] + 1) --i;
    if (i == 0) break;
    ++a[i];
    for (int k = i; k < size; ++k) {
      if (k > i) a[k] = 0;
      mx[k] = std::max(k > 0 ? mx[k - 1] : 0, a[k]);
    }
  }
  return out;
}

long bell_number(int n) {
  // Bell triangle
  std::vector<long> row{1};
  for (int i = 0; i < n; ++i) {
    std::vector<long> next{row.back()};
    for (long x : row) next.push_back(next.back() + x);
    row = std::move(next);
  }
  return row.front();
}

double grassmann_factor(const Eigen::MatrixXd& Y, const std::vector<int>& del_rows,
                        const std::vector<int>& del_cols) {
  const int n = int(Y.rows());
  if (Y.cols() != n) throw std::invalid_argument("Y must be square");
  if (n == 0) return 1.0;
  if (del_rows.size() != del_cols.size())
    throw std::invalid_argument("equal numbers of deleted rows and columns required");
  if (!Y.isApprox(Y.transpose(), 1e-12) || !is_psd(Y))
    throw std::invalid_argument("Y must be symmetric positive semidefinite");
  for (int a = 0; a < n; ++a)
    if (std::abs(Y(a, a) - 1.0) > 1e-10) throw std::invalid_argument("Y must have unit diagonal");
  auto keep = [n](const std::vector<int>& del) {
    std::vector<char> gone(static_cast<size_t>(std::max(n, 0)), 0);
    for (int d : del) {
      if (d < 0 || d >= n || gone[d]) throw std::invalid_argument("bad deletion index");
      gone[d] = 1;
    }
    std::vector<int> k;
    for (int i = 0; i < n; ++i)
      if (!gone[i]) k.push_back(i);
    return k;
  };
  auto rows = keep(del_rows), cols = keep(del_cols);
  if (rows.empty()) return 1.0;
  Eigen::MatrixXd m(rows.size(), cols.size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < cols.size(); ++j) m(i, j) = Y(rows[i], cols[j]);
  double v = m.determinant();
  if (std::abs(v) > 1.0 + 1e-9) throw std::runtime_error("minor of unit-diagonal PSD matrix exceeds 1");
  return v;
}

Eigen::MatrixXd random_unit_diagonal_psd(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> rank_dist(1, std::max(1, n));
  std::normal_distribution<double> nd;
  const int r = rank_dist(rng);
  Eigen::MatrixXd V(r, n);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < n; ++j) V(i, j) = nd(rng);
  for (int j = 0; j < n; ++j) V.col(j).normalize();
  Eigen::MatrixXd Y = V.transpose() * V;
  for (int j = 0; j < n; ++j) Y(j, j) = 1.0;
  return Y;
}

}  // namespace mlve
