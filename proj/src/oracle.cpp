#include "mlve/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <type_traits>

#include "mlve/bkar.hpp"
#include "mlve/lattice.hpp"

namespace mlve {

GaussianSpec::GaussianSpec(std::vector<std::vector<Rational>> covariance) : cov_(std::move(covariance)) {
  const size_t d = cov_.size();
  for (const auto& row : cov_)
    if (row.size() != d) throw std::invalid_argument("covariance must be square");
  for (size_t a = 0; a < d; ++a)
    for (size_t b = 0; b < d; ++b)
      if (cov_[a][b] != cov_[b][a]) throw std::invalid_argument("covariance must be symmetric");
  if (d > 0 && !is_psd(covariance_double(), 1e-12))
    throw std::invalid_argument("covariance must be positive semidefinite");
}

GaussianSpec GaussianSpec::identity(int dim) {
  std::vector<std::vector<Rational>> c(dim, std::vector<Rational>(dim, 0));
  for (int i = 0; i < dim; ++i) c[i][i] = 1;
  return GaussianSpec(std::move(c));
}

Eigen::MatrixXd GaussianSpec::covariance_double() const {
  const int d = dim();
  Eigen::MatrixXd m(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) m(a, b) = cov_[a][b].get_d();
  return m;
}

void PolynomialObservable::add(const QI& coeff, const std::vector<int>& vars) {
  std::vector<int> key = vars;
  for (int v : key)
    if (v < 0 || v >= dim_) throw std::invalid_argument("observable variable out of range");
  std::sort(key.begin(), key.end());
  auto& slot = terms_[key];
  slot += coeff;
  if (slot.is_zero()) terms_.erase(key);
}

int PolynomialObservable::degree() const {
  int d = 0;
  for (const auto& [k, c] : terms_) d = std::max(d, int(k.size()));
  return d;
}

cplx PolynomialObservable::eval(const Eigen::VectorXd& x) const {
  cplx s = 0;
  for (const auto& [k, c] : terms_) {
    double m = 1.0;
    for (int v : k) m *= x[v];
    s += c.to_complex() * m;
  }
  return s;
}

namespace {

Rational pairing_sum(const GaussianSpec& spec, std::vector<int>& slots) {
  if (slots.empty()) return 1;
  const int first = slots[0];
  Rational total = 0;
  for (size_t j = 1; j < slots.size(); ++j) {
    const Rational& k = spec.cov(first, slots[j]);
    if (k == 0) continue;
    std::vector<int> rest;
    rest.reserve(slots.size() - 2);
    for (size_t i = 1; i < slots.size(); ++i)
      if (i != j) rest.push_back(slots[i]);
    total += k * pairing_sum(spec, rest);
  }
  return total;
}

}  // namespace

QI wick_moment(const GaussianSpec& spec, const PolynomialObservable& obs, int max_degree) {
  if (obs.dim() != spec.dim()) throw std::invalid_argument("observable and Gaussian dimensions differ");
  if (obs.degree() > max_degree) throw std::invalid_argument("observable degree exceeds cap");
  QI total;
  for (const auto& [k, c] : obs.terms()) {
    if (k.size() % 2) continue;
    std::vector<int> slots = k;
    Rational m = pairing_sum(spec, slots);
    if (m != 0) total += c * QI(m);
  }
  total.re.canonicalize();
  total.im.canonicalize();
  return total;
}

cplx quadrature_moment(const GaussianSpec& spec, const PolynomialObservable& obs, int nodes) {
  const int d = spec.dim();
  if (d > 4) throw std::invalid_argument("quadrature limited to dimension 4");
  // probabilists' Gauss-Hermite by Golub-Welsch
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nodes, nodes);
  for (int k = 1; k < nodes; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(double(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Eigen::VectorXd z = es.eigenvalues();
  Eigen::VectorXd w = es.eigenvectors().row(0).array().square();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ce(spec.covariance_double());
  Eigen::MatrixXd L = ce.eigenvectors() * ce.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::vector<int> idx(d, 0);
  cplx total = 0;
  while (true) {
    Eigen::VectorXd u(d);
    double weight = 1.0;
    for (int i = 0; i < d; ++i) {
      u[i] = z[idx[i]];
      weight *= w[idx[i]];
    }
    total += weight * obs.eval(L * u);
    int i = 0;
    while (i < d && ++idx[i] == nodes) idx[i++] = 0;
    if (i == d) break;
  }
  return total;
}

SigmaCoordinates::SigmaCoordinates(int n_cut) : n_(n_cut), side_(2 * n_cut + 1) {
  if (n_cut < 0) throw std::invalid_argument("n_cut must be >= 0");
}

int SigmaCoordinates::diag(int c, int m) const { return c * side_ * side_ + (m + n_); }

int SigmaCoordinates::re_part(int c, int m, int n) const {
  if (m >= n) throw std::invalid_argument("re_part needs m < n");
  int a = m + n_, b = n + n_;
  int pair = a * side_ - a * (a + 1) / 2 + (b - a - 1);
  return c * side_ * side_ + side_ + 2 * pair;
}

int SigmaCoordinates::im_part(int c, int m, int n) const { return re_part(c, m, n) + 1; }

void SigmaCoordinates::add_conj_product(PolynomialObservable& p, const QI& coeff, int c, int m, int n,
                                        int oa, int ob) const {
  if (m == n) {
    p.add(coeff, {oa + diag(c, m), ob + diag(c, m)});
    return;
  }
  const int lo = std::min(m, n), hi = std::max(m, n);
  const int x = re_part(c, lo, hi), y = im_part(c, lo, hi);
  const Rational half(1, 2);
  // sigma_{lo,hi} = (x + i y)/sqrt 2 and sigma_{hi,lo} is its conjugate
  const Rational s = m < n ? half : -half;
  p.add(coeff * QI(half), {oa + x, ob + x});
  p.add(coeff * QI(half), {oa + y, ob + y});
  p.add(coeff * QI(0, s), {oa + x, ob + y});
  p.add(coeff * QI(0, -s), {oa + y, ob + x});
}

WickOrderingResult check_wick_ordering(int n_cut, const Rational& g, int aux_cut, int slice, int M) {
  auto Q = build_q_exact(n_cut, g, aux_cut, slice, M).q;
  SigmaCoordinates sc(n_cut);
  PolynomialObservable obs(sc.dim());
  const int side = 2 * n_cut + 1;
  Rational trace = 0;
  for (int c = 0; c < 4; ++c)
    for (int m = 0; m < side; ++m)
      for (int n = 0; n < side; ++n) {
        const Rational& q = Q.diag[c][m][n];
        trace += q;
        if (q != 0) sc.add_conj_product(obs, QI(q), c, m - n_cut, n - n_cut, 0, 0);
      }
  for (int c = 0; c < 4; ++c)
    for (int cp = 0; cp < 4; ++cp) {
      if (c == cp) continue;
      for (int m = 0; m < side; ++m)
        for (int p = 0; p < side; ++p) {
          const Rational& q = Q.off[c][cp][m][p];
          if (q != 0) obs.add(QI(q), {sc.diag(c, m - n_cut), sc.diag(cp, p - n_cut)});
        }
    }
  WickOrderingResult r;
  r.expectation = wick_moment(GaussianSpec::identity(sc.dim()), obs);
  r.trace = trace;
  r.residual = r.expectation - QI(trace);
  return r;
}

TauIdentityResult check_tau_identity(const std::vector<double>& q0, const Eigen::MatrixXd& X,
                                     cplx lambda) {
  const int nb = int(X.rows());
  if (X.cols() != nb || !X.isApprox(X.transpose()) || !is_psd(X))
    throw std::invalid_argument("X must be symmetric positive semidefinite");
  const int d = int(q0.size());
  const Eigen::MatrixXd X2 = hadamard_square(X);
  const cplx l4 = std::pow(lambda, 4);
  double tr_q0_sq = 0.0;
  for (double q : q0) tr_q0_sq += q * q;

  TauIdentityResult r;
  r.closed_form = std::exp(-l4 / 4.0 * X2.sum() * tr_q0_sq);
  r.factorized = std::pow(std::exp(-l4 / 4.0 * tr_q0_sq), nb);

  // full covariance of the stacked tau vector and the linear form a.tau
  const cplx coef = lambda * lambda / std::sqrt(2.0);
  Eigen::VectorXcd a(nb * d);
  for (int b = 0; b < nb; ++b)
    for (int i = 0; i < d; ++i) a[b * d + i] = coef * q0[i];
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nb * d, nb * d);
  for (int b = 0; b < nb; ++b)
    for (int bp = 0; bp < nb; ++bp)
      for (int i = 0; i < d; ++i) K(b * d + i, bp * d + i) = X2(b, bp);
  const cplx var = (a.transpose() * K.cast<cplx>() * a)(0, 0);
  r.variance_residual = std::abs(var - l4 / 2.0 * X2.sum() * tr_q0_sq);
  // E[e^{iZ}] = sum_k i^{2k} E[Z^{2k}]/(2k)!, E[Z^{2k}] = (2k-1)!! var^k
  cplx sum = 0, term = 1;
  for (int k = 0; k < 400; ++k) {
    sum += term;
    term *= -var / double(2 * k + 2) / double(2 * k + 1) * double(2 * k + 1);
    if (std::abs(term) < 1e-18 * std::max(1.0, std::abs(sum)) && k > 4) break;
  }
  r.moment_series = sum;
  r.residual = std::abs(r.closed_form - r.moment_series);
  return r;
}

SigmaLinkResult check_sigma_link(int n_cut, const Rational& w, const Rational& g, int M, int slice) {
  if (w < 0 || w > 1) throw std::invalid_argument("w must lie in [0,1]");
  auto Q = build_q_exact(n_cut, g, n_cut, slice, M).q0;
  SigmaCoordinates sc(n_cut);
  const int d = sc.dim();
  std::vector<std::vector<Rational>> cov(2 * d, std::vector<Rational>(2 * d, 0));
  for (int i = 0; i < d; ++i) {
    cov[i][i] = cov[d + i][d + i] = 1;
    cov[i][d + i] = cov[d + i][i] = w;
  }
  PolynomialObservable obs(2 * d);
  const int side = 2 * n_cut + 1;
  // (-lambda^2/2)^2 2^2 = lambda^4 = g^2
  const Rational pref = g * g;
  Rational tr_sq = 0;
  for (int c = 0; c < 4; ++c)
    for (int m = 0; m < side; ++m)
      for (int n = 0; n < side; ++n) {
        Rational q2 = Q.diag[c][m][n] * Q.diag[c][m][n];
        tr_sq += q2;
        if (q2 != 0) sc.add_conj_product(obs, QI(pref * q2), c, m - n_cut, n - n_cut, 0, d);
      }
  SigmaLinkResult r;
  r.expectation = wick_moment(GaussianSpec(cov), obs);
  r.expected = QI(w * pref * tr_sq);
  r.residual = r.expectation - r.expected;
  return r;
}

namespace {

// forest side: every amplitude summed by explicit loops, independent of the lattice module
template <class T>
struct ForestSide {
  int outer;  // external box [-outer, outer]
  int inner;  // internal loop box
  std::vector<T> t;     // tadpole t(|y|), y in [0, inner]
  std::vector<T> m2b;   // bare M2 with inner tadpoles, x in [0, outer]
  std::vector<T> m2i;   // M2 with inner tadpole subtracted

  static T prop(long s) {
    if constexpr (std::is_same_v<T, Rational>)
      return Rational(1, s + 1);
    else
      return 1.0 / double(s + 1);
  }

  ForestSide(int outer_cut, int inner_cut) : outer(outer_cut), inner(inner_cut) {
    const int K = inner;
    t.assign(K + 1, T(0));
    for (int y = 0; y <= K; ++y) {
      T s = 0;
      for (int p1 = -K; p1 <= K; ++p1)
        for (int p2 = -K; p2 <= K; ++p2)
          for (int p3 = -K; p3 <= K; ++p3)
            s += prop(long(y) * y + long(p1) * p1 + long(p2) * p2 + long(p3) * p3);
      t[y] = s;
    }
    auto tad = [&](int y) { return tad_at(std::abs(y)); };
    m2b.assign(outer + 1, T(0));
    m2i.assign(outer + 1, T(0));
    const T t0 = t[0];
    for (int x = 0; x <= outer; ++x) {
      T bare = 0, ren = 0;
      T tx = tad(x);
      for (int p1 = -K; p1 <= K; ++p1)
        for (int p2 = -K; p2 <= K; ++p2)
          for (int p3 = -K; p3 <= K; ++p3) {
            T c = prop(long(x) * x + long(p1) * p1 + long(p2) * p2 + long(p3) * p3);
            T c2 = c * c;
            T ins = tx + tad(p1) + tad(p2) + tad(p3);
            bare += c2 * ins;
            ren += c2 * (ins - 4 * t0);
          }
      m2b[x] = bare;
      m2i[x] = ren;
    }
  }

  T tad_at(int y) const {
    if (y <= inner) return t[y];
    // external index beyond the inner box: direct sum
    T s = 0;
    const int K = inner;
    for (int p1 = -K; p1 <= K; ++p1)
      for (int p2 = -K; p2 <= K; ++p2)
        for (int p3 = -K; p3 <= K; ++p3)
          s += prop(long(y) * y + long(p1) * p1 + long(p2) * p2 + long(p3) * p3);
    return s;
  }

  T t0() const { return t[0]; }
  T m1r(int x) const { return tad_at(std::abs(x)) - t0(); }
  // (1 - tau_M2)(1 - tau_M1) M2
  T m2r(int x) const { return m2i[std::abs(x)] - m2i[0]; }

  template <class F>
  void for_box4(F&& f) const {
    const int N = outer;
    for (int a = -N; a <= N; ++a)
      for (int b = -N; b <= N; ++b)
        for (int c = -N; c <= N; ++c)
          for (int d = -N; d <= N; ++d)
            f(std::array<int, 4>{a, b, c, d},
              prop(long(a) * a + long(b) * b + long(c) * c + long(d) * d));
  }

  T v1() const {
    T a = 0, ta = 0, tb = 0;
    for (int x = -outer; x <= outer; ++x) {
      T tx = tad_at(std::abs(x));
      a += tx * tx;
      ta += t0() * tx;
      tb += tx * t0();
    }
    return 4 * (a - ta - tb);
  }

  T v2() const {
    T a00 = 0, a10 = 0, a01 = 0, a11 = 0;
    const T t0v = t0();
    for_box4([&](const std::array<int, 4>& n, const T& c) {
      T c2 = c * c;
      for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) {
          T ti = tad_at(std::abs(n[i])), tk = tad_at(std::abs(n[k]));
          a00 += c2 * ti * tk;
          a10 += c2 * t0v * tk;
          a01 += c2 * ti * t0v;
          a11 += c2 * t0v * t0v;
        }
    });
    // tau_M2 (1 - tau_M1') A: the M2 part at zero external index times the outer tadpole
    T m2_at_zero = 0;
    const int N = outer, K = inner;
    for (int cp = 0; cp < 4; ++cp)
      for (int p1 = -K; p1 <= K; ++p1)
        for (int p2 = -K; p2 <= K; ++p2)
          for (int p3 = -K; p3 <= K; ++p3) {
            std::array<int, 4> n{0, p1, p2, p3};
            T c = prop(long(p1) * p1 + long(p2) * p2 + long(p3) * p3);
            m2_at_zero += c * c * (tad_at(std::abs(n[cp])) - t0v);
          }
    T outer_tad = 0;
    for (int x = -N; x <= N; ++x) outer_tad += tad_at(std::abs(x));
    T tau_m2 = 4 * outer_tad * m2_at_zero;
    T tau_m2p = 4 * outer_tad * m2_at_zero;
    return a00 - a10 - a01 + a11 - tau_m2 - tau_m2p;
  }

  T v3() const {
    T first = 0, second = 0;
    for (int x = -outer; x <= outer; ++x) {
      T r = m2r(x);
      first += r * r;
      second += m2i[0] * m2i[0];
    }
    return 4 * (first - second);
  }

  T v4() const {
    T s = 0;
    for_box4([&](const std::array<int, 4>& n, const T& c) {
      T r = 0;
      for (int i = 0; i < 4; ++i) r += m2r(n[i]);
      s += c * c * r * r;
    });
    return s;
  }

  T v567(int which) const {
    T s = 0;
    for_box4([&](const std::array<int, 4>& n, const T& c) {
      T r1 = 0, r2 = 0;
      for (int i = 0; i < 4; ++i) {
        r1 += m1r(n[i]);
        r2 += m2r(n[i]);
      }
      if (which == 5) s += c * c * c * r1 * r1 * r1;
      if (which == 6) s += c * c * c * r1 * r1 * r2;
      if (which == 7) s += c * c * c * c * r1 * r1 * r1 * r1;
    });
    return s;
  }
};

// operator side built from lattice-module amplitudes
template <class T>
struct OperatorSide {
  int N;
  std::vector<T> A1;  // A^r_M1 = -a1
  std::vector<T> A2;  // A^r_M2 = a2 + 3 a2_cross
  T d1 = 0, d2 = 0;   // delta_M1, delta_M2

  template <class F>
  T sum_box4(F&& f) const {
    T s = 0;
    for (int a = -N; a <= N; ++a)
      for (int b = -N; b <= N; ++b)
        for (int c = -N; c <= N; ++c)
          for (int d = -N; d <= N; ++d) {
            Momentum4 m{{a, b, c, d}};
            T C;
            if constexpr (std::is_same_v<T, Rational>)
              C = propagator(m);
            else
              C = to_double(propagator(m));
            T s1 = A1[std::abs(a)] + A1[std::abs(b)] + A1[std::abs(c)] + A1[std::abs(d)];
            T s2 = A2[std::abs(a)] + A2[std::abs(b)] + A2[std::abs(c)] + A2[std::abs(d)];
            s += f(C, s1, s2);
          }
    return s;
  }
};

template <class T>
std::vector<std::pair<T, T>> identity_sides(const ForestSide<T>& fs, const OperatorSide<T>& op,
                                            const T& g, bool with_counterterms) {
  const int N = op.N;
  const T g2 = g * g, g3 = g2 * g, g4 = g3 * g;
  const T two_n1 = T(2 * N + 1);
  // D1 = (i lambda)^2 C A1 = -g C A1, D2 = (i lambda)(-i lambda^3) C A2 = g^2 C A2
  auto D1 = [&](const T& C, const T& s1) -> T { return -g * C * s1; };
  auto D2 = [&](const T& C, const T& s2) -> T { return g2 * C * s2; };
  std::vector<std::pair<T, T>> out;
  if (with_counterterms) {
    T sum_a1_sq = 0, sum_a1 = 0, sum_a2_sq = 0;
    for (int x = -N; x <= N; ++x) {
      sum_a1_sq += op.A1[std::abs(x)] * op.A1[std::abs(x)];
      sum_a1 += op.A1[std::abs(x)];
      sum_a2_sq += op.A2[std::abs(x)] * op.A2[std::abs(x)];
    }
    // B1 = i lambda A1: (1/2) B1.B1 = -(g/2) sum_c sum_x A1^2
    T rhs1 = -g / 2 * 4 * sum_a1_sq + g / 2 * two_n1 * 4 * op.d1 * op.d1;
    out.emplace_back(-g / 2 * fs.v1(), rhs1);
    // -i lambda^3 delta_M2 Tr_c B1 = lambda^4 delta_M2 sum_x A1
    T half_tr_d1_sq = op.sum_box4([&](const T& C, const T& s1, const T&) -> T {
      T d = D1(C, s1);
      return d * d / 2;
    });
    T rhs2 = half_tr_d1_sq + g2 * 4 * op.d2 * sum_a1 + g2 * two_n1 * 4 * op.d1 * op.d2;
    out.emplace_back(g2 / 2 * fs.v2(), rhs2);
    // B2 = -i lambda^3 A2: (1/2) B2.B2 = -(g^3/2) sum_c sum_x A2^2
    T rhs3 = -g3 / 2 * 4 * sum_a2_sq + g3 / 2 * two_n1 * 4 * op.d2 * op.d2;
    out.emplace_back(-g3 / 2 * fs.v3(), rhs3);
  }
  T rhs4 = op.sum_box4([&](const T& C, const T&, const T& s2) -> T {
    T d = D2(C, s2);
    return d * d / 2;
  });
  out.emplace_back(g4 / 2 * fs.v4(), rhs4);
  T rhs5 = op.sum_box4([&](const T& C, const T& s1, const T&) -> T {
    T d = D1(C, s1);
    return d * d * d / 3;
  });
  out.emplace_back(-g3 / 3 * fs.v567(5), rhs5);
  T rhs6 = op.sum_box4([&](const T& C, const T& s1, const T& s2) -> T {
    T d = D1(C, s1);
    return d * d * D2(C, s2);
  });
  out.emplace_back(g4 * fs.v567(6), rhs6);
  T rhs7 = op.sum_box4([&](const T& C, const T& s1, const T&) -> T {
    T d = D1(C, s1);
    return d * d * d * d / 4;
  });
  out.emplace_back(g4 / 4 * fs.v567(7), rhs7);
  return out;
}

}  // namespace

CancellationReport vacuum_cancellation_shared(int n_cut, const Rational& g) {
  if (n_cut < 0 || n_cut > 3) throw std::invalid_argument("shared-cutoff bench supports 0 <= N <= 3");
  ForestSide<Rational> fs(n_cut, n_cut);
  OperatorSide<Rational> op;
  op.N = n_cut;
  for (int x = 0; x <= n_cut; ++x) {
    op.A1.push_back(-a1_exact(x, n_cut));
    op.A2.push_back(a2_exact(x, n_cut) + 3 * a2_cross_exact(x, n_cut));
  }
  op.d1 = delta_m1(n_cut);
  op.d2 = delta_m2_exact(n_cut, n_cut);
  auto sides = identity_sides<Rational>(fs, op, g, true);
  CancellationReport rep;
  rep.n_cut = n_cut;
  rep.aux_cut = n_cut;
  for (size_t i = 0; i < sides.size(); ++i) {
    IdentityResidual r;
    r.name = "V" + std::to_string(i + 1);
    r.convention = Convention::shared;
    r.exact = true;
    r.exact_residual = sides[i].first - sides[i].second;
    r.exact_residual.canonicalize();
    r.lhs = to_double(sides[i].first);
    r.rhs = to_double(sides[i].second);
    r.residual = to_double(r.exact_residual);
    rep.log_n5 += r.residual;
    rep.identities.push_back(r);
  }
  return rep;
}

CancellationReport vacuum_cancellation_mixed(int n_cut, int aux_cut, double g, int aux_ref) {
  if (n_cut < 0 || n_cut > 2) throw std::invalid_argument("mixed bench supports 0 <= N <= 2");
  if (aux_cut < n_cut || aux_ref < aux_cut)
    throw std::invalid_argument("inconsistent cutoffs: need N <= aux_cut <= aux_ref");
  ForestSide<double> fs(n_cut, aux_cut);
  OperatorSide<double> op;
  op.N = n_cut;
  for (int x = 0; x <= n_cut; ++x) {
    op.A1.push_back(-a1(x, aux_ref));
    op.A2.push_back(a2(x, aux_ref) + 3 * a2_cross(x, aux_ref));
  }
  auto sides = identity_sides<double>(fs, op, g, false);
  CancellationReport rep;
  rep.n_cut = n_cut;
  rep.aux_cut = aux_cut;
  for (size_t i = 0; i < sides.size(); ++i) {
    IdentityResidual r;
    r.name = "V" + std::to_string(i + 4);
    r.convention = Convention::mixed;
    r.lhs = sides[i].first;
    r.rhs = sides[i].second;
    r.residual = r.lhs - r.rhs;
    rep.log_n5 += r.residual;
    rep.identities.push_back(r);
  }
  return rep;
}

CancellationReport vacuum_cancellation(int n_cut, int aux_cut, double g, Convention conv, int aux_ref) {
  if (conv == Convention::shared) {
    if (aux_cut != n_cut)
      throw std::invalid_argument("shared convention evaluates every sum at N; aux_cut must equal N");
    return vacuum_cancellation_shared(n_cut, Rational(g));
  }
  return vacuum_cancellation_mixed(n_cut, aux_cut, g, aux_ref);
}

cplx det2(const Eigen::MatrixXcd& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("det2 needs a square matrix");
  if (A.rows() == 0) return 1.0;
  if (operator_norm(A) >= 1.0) throw std::invalid_argument("det2 requires ||A|| < 1");
  Eigen::MatrixXcd one_minus = Eigen::MatrixXcd::Identity(A.rows(), A.cols()) - A;
  return one_minus.determinant() * std::exp(A.trace());
}

cplx det2_eigen(const Eigen::MatrixXcd& A) {
  if (A.rows() == 0) return 1.0;
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(A);
  cplx p = 1.0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    cplx l = es.eigenvalues()[i];
    p *= (1.0 - l) * std::exp(l);
  }
  return p;
}

namespace {

Eigen::MatrixXcd dense_q(const QBlocks<cplx>& b) {
  const int side = 2 * b.n_cut + 1, s2 = side * side;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(4 * s2, 4 * s2);
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < side; ++i)
      for (int j = 0; j < side; ++j) m(c * s2 + i * side + j, c * s2 + i * side + j) = b.diag[c][i][j];
  for (int c = 0; c < 4; ++c)
    for (int cp = 0; cp < 4; ++cp) {
      if (c == cp || b.off[c][cp].empty()) continue;
      for (int i = 0; i < side; ++i)
        for (int p = 0; p < side; ++p) m(c * s2 + i * side + i, cp * s2 + p * side + p) = b.off[c][cp][i][p];
    }
  return m;
}

// sum_a X (e_aa (x) P_a) as a block matrix on R^|B| (x) H
Eigen::MatrixXcd assemble(const Eigen::MatrixXd& X, const std::vector<Eigen::MatrixXcd>& P) {
  const int nb = int(X.rows());
  const int d = int(P.at(0).rows());
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(nb * d, nb * d);
  for (int b = 0; b < nb; ++b)
    for (int a = 0; a < nb; ++a)
      if (X(b, a) != 0) A.block(b * d, a * d, d, d) = X(b, a) * P[a];
  return A;
}

}  // namespace

DetBoundReport det_bounds_spotcheck(const ModelConfig& cfg, const std::vector<int>& scales, double w,
                                    const std::vector<double>& rhos) {
  const int nb = int(scales.size());
  if (nb < 1) throw std::invalid_argument("need at least one node");
  for (int i = 0; i < nb; ++i)
    for (int k = i + 1; k < nb; ++k)
      if (scales[i] == scales[k]) throw std::invalid_argument("node scales in a block must differ");
  Forest f;
  f.n = nb;
  for (int i = 0; i + 1 < nb; ++i) f.add_edge(i, i + 1);
  const Eigen::MatrixXd X = weakening_matrix(f, std::vector<double>(f.edges.size(), w));
  const int M = cfg.slice_ratio();
  const int j1 = *std::max_element(scales.begin(), scales.end());
  const cplx unit = std::abs(cfg.coupling()) > 0 ? cfg.coupling() / std::abs(cfg.coupling()) : cplx(1.0);

  DetBoundReport rep{cfg.n_cut(), M, scales, w, {}, 0.0};
  std::vector<Eigen::MatrixXcd> q0, q01, q11, q12;
  for (int j : scales) {
    auto Q = build_q(cfg, j);
    q0.push_back(dense_q(Q.q0));
    q11.push_back(dense_q(Q.q1_1));
    q12.push_back(dense_q(Q.q1_2));
    q01.push_back(q0.back() + q11.back());
  }
  for (double rho : rhos) {
    const cplx g = 0.5 * rho * unit;
    std::vector<Eigen::MatrixXcd> p0, p1, p2;
    for (int a = 0; a < nb; ++a) {
      p0.push_back(rho * q0[a]);
      p1.push_back(g.real() * q11[a] + (g * g).real() * q12[a]);
      p2.push_back(rho * q01[a]);
    }
    const Eigen::MatrixXcd A0 = assemble(X, p0), A1 = assemble(X, p1), A2 = assemble(X, p2);
    auto row_det2 = [&](const std::string& name, const Eigen::MatrixXcd& A, double scale) {
      DetBoundRow r;
      r.name = name;
      r.rho = rho;
      r.norm = operator_norm(A);
      if (r.norm >= 1.0) throw std::runtime_error("rho too large: ||" + name + "|| >= 1");
      r.log_inv_det = -std::log(det2(A)).real();
      r.scale = scale;
      r.fitted_k = r.log_inv_det / scale;
      r.generic_bound = 0.5 * std::abs((A * A).trace()) / (1.0 - r.norm);
      r.within_generic = r.log_inv_det <= r.generic_bound + 1e-12;
      rep.rows.push_back(r);
    };
    row_det2("A0", A0, rho * rho * nb);
    row_det2("A1", A1, rho * rho);
    DetBoundRow r;
    r.name = "A2";
    r.rho = rho;
    r.norm = operator_norm(A2);
    if (r.norm >= 1.0) throw std::runtime_error("rho too large: ||A2|| >= 1");
    const Eigen::MatrixXcd one_minus = Eigen::MatrixXcd::Identity(A2.rows(), A2.cols()) - A2;
    r.log_inv_det = -std::log(one_minus.determinant()).real();
    r.scale = rho * double(ipow(M, j1));
    r.fitted_k = r.log_inv_det / r.scale;
    r.generic_bound = std::abs(A2.trace()) / (1.0 - r.norm);
    r.within_generic = r.log_inv_det <= r.generic_bound + 1e-12;
    rep.rows.push_back(r);
    cplx expect = 0;
    for (int a = 0; a < nb; ++a) expect += rho * X(a, a) * q01[a].trace();
    rep.trace_a2_residual = std::max(rep.trace_a2_residual, std::abs(A2.trace() - expect));
  }
  return rep;
}

}  // namespace mlve
