#include "mlve/lattice.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <random>
#include <stdexcept>

namespace mlve {

std::vector<long> box_shell_counts(int dim, int cut) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::vector<long>> cache;
  if (dim < 0 || cut < 0) throw std::invalid_argument("box_shell_counts: negative argument");
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find({dim, cut});
    if (it != cache.end()) return it->second;
  }
  std::vector<long> acc{1};
  for (int d = 0; d < dim; ++d) {
    std::vector<long> next(acc.size() + long(cut) * cut, 0);
    for (size_t s = 0; s < acc.size(); ++s) {
      if (!acc[s]) continue;
      for (int x = -cut; x <= cut; ++x) next[s + long(x) * x] += acc[s];
    }
    acc.swap(next);
  }
  std::lock_guard<std::mutex> lock(mu);
  cache[{dim, cut}] = acc;
  return acc;
}

Rational propagator(const Momentum4& n) { return Rational(1, n.norm_sq() + 1); }

Rational delta_m1(int N) {
  if (N < 0) throw std::invalid_argument("delta_m1: N must be >= 0");
  return tadpole_exact(0, N);
}

Rational tadpole_exact(int x, int K) {
  auto cnt = box_shell_counts(3, K);
  Rational s = 0;
  long x2 = long(x) * x;
  for (size_t k = 0; k < cnt.size(); ++k)
    if (cnt[k]) s += Rational(cnt[k], x2 + long(k) + 1);
  s.canonicalize();
  return s;
}

double tadpole(int x, int K) {
  auto cnt = box_shell_counts(3, K);
  double s = 0;
  double x2 = double(x) * x;
  for (size_t k = 0; k < cnt.size(); ++k)
    if (cnt[k]) s += double(cnt[k]) / (x2 + double(k) + 1);
  return s;
}

Rational a1_exact(int n, int aux_cut) {
  if (aux_cut < 0) throw std::invalid_argument("a1: aux_cut must be >= 0");
  auto cnt = box_shell_counts(3, aux_cut);
  long n2 = long(n) * n;
  Rational s = 0;
  if (n2 == 0) return s;
  for (size_t k = 0; k < cnt.size(); ++k)
    if (cnt[k]) s += Rational(cnt[k] * n2) / Rational((n2 + long(k) + 1) * (long(k) + 1));
  s.canonicalize();
  return s;
}

double a1(int n, int aux_cut) {
  if (aux_cut < 0) throw std::invalid_argument("a1: aux_cut must be >= 0");
  auto cnt = box_shell_counts(3, aux_cut);
  double n2 = double(n) * n;
  double s = 0;
  for (size_t k = 0; k < cnt.size(); ++k)
    if (cnt[k]) s += cnt[k] * n2 / ((n2 + k + 1) * (k + 1.0));
  return s;
}

namespace {

// fraction of the unit sphere outside the cube max|u_i| <= a
double sphere_fraction_outside(double a) {
  if (a >= 1.0) return 0.0;
  if (a * std::sqrt(3.0) <= 1.0) return 1.0;
  const int nz = 400;
  double acc = 0;
  for (int k = 0; k < nz; ++k) {
    double z = (k + 0.5) / nz;  // symmetric in z, integrate over [0,1]
    double g;
    if (z > a) {
      g = 2 * M_PI;
    } else {
      double b = a / std::sqrt(1 - z * z);
      if (b >= 1) g = 0;
      else if (b * std::sqrt(2.0) < 1) g = 2 * M_PI;
      else g = 8 * std::acos(b);
    }
    acc += g / nz;
  }
  return acc / (2 * M_PI);
}

}  // namespace

double a1_tail_estimate(int n, int aux_cut) {
  // continuum integral of the summand over the complement of [-K-1/2, K+1/2]^3
  double n2 = double(n) * n;
  if (n2 == 0) return 0.0;
  double L = aux_cut + 0.5, R = L * std::sqrt(3.0);
  double A = n2 + 1, B = 1;
  auto radial = [&](double r) { return 4 * M_PI * n2 * r * r / ((A + r * r) * (B + r * r)); };
  // beyond R the whole sphere is outside:
  // 4 pi n^2 r^2/((A+r^2)(B+r^2)) = 4 pi n^2 [A/(A+r^2) - B/(B+r^2)]/(A-B)
  double ia = std::sqrt(A) * (M_PI / 2 - std::atan(R / std::sqrt(A)));
  double ib = std::sqrt(B) * (M_PI / 2 - std::atan(R / std::sqrt(B)));
  double outer = 4 * M_PI * n2 * (ia - ib) / (A - B);
  const int nr = 2000;
  double h = (R - L) / nr, inner = 0;
  for (int k = 0; k < nr; ++k) {
    double r = L + (k + 0.5) * h;
    inner += radial(r) * sphere_fraction_outside(L / r) * h;
  }
  return inner + outer;
}

double a1_with_tail(int n, int aux_cut) { return a1(n, aux_cut) + a1_tail_estimate(n, aux_cut); }

Rational s2_exact(int n, int K) {
  auto cnt = box_shell_counts(3, K);
  long n2 = long(n) * n;
  Rational s = 0;
  for (size_t k = 0; k < cnt.size(); ++k)
    if (cnt[k]) {
      long d = n2 + long(k) + 1;
      s += Rational(cnt[k], d * d);
    }
  s.canonicalize();
  return s;
}

double s2(int n, int K) {
  auto cnt = box_shell_counts(3, K);
  double n2 = double(n) * n;
  double s = 0;
  for (size_t k = 0; k < cnt.size(); ++k)
    if (cnt[k]) {
      double d = n2 + k + 1;
      s += cnt[k] / (d * d);
    }
  return s;
}

Rational a2_exact(int n, int aux_cut) {
  Rational r = -a1_exact(n, aux_cut) * s2_exact(n, aux_cut);
  r.canonicalize();
  return r;
}

double a2(int n, int aux_cut) { return -a1(n, aux_cut) * s2(n, aux_cut); }

Rational a2_cross_exact(int n, int aux_cut) {
  auto cnt2 = box_shell_counts(2, aux_cut);
  long n2 = long(n) * n;
  Rational s = 0;
  if (n2 == 0) return s;
  for (int p1 = -aux_cut; p1 <= aux_cut; ++p1) {
    Rational a = a1_exact(p1, aux_cut);
    if (a == 0) continue;
    Rational inner = 0;
    long p12 = long(p1) * p1;
    for (size_t k = 0; k < cnt2.size(); ++k) {
      if (!cnt2[k]) continue;
      long d1 = n2 + p12 + long(k) + 1, d0 = p12 + long(k) + 1;
      inner += Rational(cnt2[k], d1 * d1) - Rational(cnt2[k], d0 * d0);
    }
    s -= a * inner;
  }
  s.canonicalize();
  return s;
}

double a2_cross(int n, int aux_cut) {
  auto cnt2 = box_shell_counts(2, aux_cut);
  double n2 = double(n) * n;
  if (n2 == 0) return 0.0;
  double s = 0;
  for (int p1 = -aux_cut; p1 <= aux_cut; ++p1) {
    double a = a1(p1, aux_cut);
    if (a == 0) continue;
    double p12 = double(p1) * p1, inner = 0;
    for (size_t k = 0; k < cnt2.size(); ++k) {
      if (!cnt2[k]) continue;
      double d1 = n2 + p12 + k + 1, d0 = p12 + k + 1;
      inner += cnt2[k] * (1.0 / (d1 * d1) - 1.0 / (d0 * d0));
    }
    s -= a * inner;
  }
  return s;
}

Rational delta_m2_exact(int N, int aux_cut) {
  if (N < 0 || aux_cut < 0) throw std::invalid_argument("delta_m2: negative cutoff");
  auto cnt2 = box_shell_counts(2, N);
  Rational s = 0;
  for (int p1 = -N; p1 <= N; ++p1) {
    if (p1 == 0) continue;
    Rational inner = 0;
    long p12 = long(p1) * p1;
    for (size_t k = 0; k < cnt2.size(); ++k)
      if (cnt2[k]) {
        long d = p12 + long(k) + 1;
        inner += Rational(cnt2[k], d * d);
      }
    s += inner * a1_exact(p1, aux_cut);
  }
  s *= 3;
  s.canonicalize();
  return s;
}

double delta_m2(int N, int aux_cut) {
  if (N < 0 || aux_cut < 0) throw std::invalid_argument("delta_m2: negative cutoff");
  auto cnt2 = box_shell_counts(2, N);
  double s = 0;
  for (int p1 = -N; p1 <= N; ++p1) {
    if (p1 == 0) continue;
    double inner = 0, p12 = double(p1) * p1;
    for (size_t k = 0; k < cnt2.size(); ++k)
      if (cnt2[k]) {
        double d = p12 + k + 1;
        inner += cnt2[k] / (d * d);
      }
    s += inner * a1(p1, aux_cut);
  }
  return 3 * s;
}

RenormAmplitude renorm_amplitudes(int n_max, int aux_cut) {
  RenormAmplitude r;
  r.aux_cut = aux_cut;
  for (int n = 0; n <= n_max; ++n) {
    r.a1.push_back(a1(n, aux_cut));
    r.a2.push_back(a2(n, aux_cut));
    r.a2_cross.push_back(a2_cross(n, aux_cut));
  }
  return r;
}

// ---------------------------------------------------------------- Q operator

template <class T>
T QBlocks<T>::trace() const {
  T s = T(0);
  for (int c = 0; c < 4; ++c)
    for (auto& row : diag[c])
      for (auto& v : row) s += v;
  return s;
}
template struct QBlocks<cplx>;
template struct QBlocks<Rational>;

namespace {

template <class T>
void init_blocks(QBlocks<T>& b, int N) {
  int s = 2 * N + 1;
  b.n_cut = N;
  for (int c = 0; c < 4; ++c) {
    b.diag[c].assign(s, std::vector<T>(s, T(0)));
    for (int c2 = 0; c2 < 4; ++c2) b.off[c][c2].assign(c2 == c ? 0 : s, std::vector<T>(s, T(0)));
  }
}

// weight of a product of propagators with squared norms q[i] under a slice cutoff:
// 1 if slice==0, else prod 1_{<=j} - prod 1_{<=j-1}
double slice_weight(std::initializer_list<long> norms, int slice, int M) {
  if (slice == 0) return 1.0;
  bool in_j = true, in_jm1 = slice > 1;
  for (long q : norms) {
    in_j = in_j && slice_indicator(slice, q, M, SliceMode::leq);
    if (slice > 1) in_jm1 = in_jm1 && slice_indicator(slice - 1, q, M, SliceMode::leq);
  }
  return double(in_j) - double(in_jm1);
}

// T is the field, A1 gives a1(x), G is the coupling
template <class T, class A1>
void fill_q(int N, const T& g, A1 a1v, int slice, int M, QBlocks<T>& q, QBlocks<T>& q0,
            QBlocks<T>& q11, QBlocks<T>& q12) {
  init_blocks(q, N);
  init_blocks(q0, N);
  init_blocks(q11, N);
  init_blocks(q12, N);
  int s = 2 * N + 1;
  for (int m = -N; m <= N; ++m)
    for (int n = -N; n <= N; ++n) {
      T lead = T(0), corr = T(0);
      for (int x = -N; x <= N; ++x)
        for (int y = -N; y <= N; ++y)
          for (int z = -N; z <= N; ++z) {
            long h = long(x) * x + long(y) * y + long(z) * z;
            long qm = long(m) * m + h, qn = long(n) * n + h;
            double w = slice_weight({qm, qn}, slice, M);
            if (w == 0) continue;
            T base = T(1) / T((qm + 1) * (qn + 1));
            if (w < 0) base = -base;
            lead += base;
            T sa = a1v(m) + a1v(x) + a1v(y) + a1v(z);
            corr += T(2) * base * sa / T(qm + 1);
          }
      for (int c = 0; c < 4; ++c) {
        q0.diag[c][m + N][n + N] = lead;
        q12.diag[c][m + N][n + N] = corr;
        q.diag[c][m + N][n + N] = lead + g * corr;
      }
    }
  std::vector<std::vector<T>> k0(s, std::vector<T>(s, T(0))), k2 = k0;
  for (int m = -N; m <= N; ++m)
    for (int p = -N; p <= N; ++p) {
      T lead = T(0), corr = T(0);
      for (int x = -N; x <= N; ++x)
        for (int y = -N; y <= N; ++y) {
          long qq = long(m) * m + long(p) * p + long(x) * x + long(y) * y;
          double w = slice_weight({qq}, slice, M);
          if (w == 0) continue;
          T base = T(1) / T((qq + 1) * (qq + 1));
          if (w < 0) base = -base;
          lead += base;
          corr += T(2) * base * (a1v(m) + a1v(p) + a1v(x) + a1v(y)) / T(qq + 1);
        }
      k0[m + N][p + N] = lead;
      k2[m + N][p + N] = corr;
    }
  for (int c = 0; c < 4; ++c)
    for (int c2 = 0; c2 < 4; ++c2) {
      if (c == c2) continue;
      q11.off[c][c2] = k0;
      q12.off[c][c2] = k2;
      auto& tgt = q.off[c][c2];
      for (int i = 0; i < s; ++i)
        for (int k = 0; k < s; ++k) tgt[i][k] = k0[i][k] + g * k2[i][k];
    }
}

void check_q_size(int N) {
  if (N > 12)
    throw std::runtime_error("build_q: n_cut = " + std::to_string(N) +
                             " exceeds the supported bound 12 (blocks of size " +
                             std::to_string((2 * N + 1) * (2 * N + 1)) + " per colour)");
}

}  // namespace

QOperator build_q(const ModelConfig& cfg, int slice) {
  int N = cfg.n_cut();
  check_q_size(N);
  std::vector<double> a1t(N + 1);
  for (int x = 0; x <= N; ++x) a1t[x] = a1(x, cfg.aux_cut());
  QOperator out;
  fill_q<cplx>(N, cfg.coupling(), [&](int x) { return cplx(a1t[std::abs(x)], 0.0); }, slice,
               cfg.slice_ratio(), out.q, out.q0, out.q1_1, out.q1_2);
  return out;
}

QOperatorExact build_q_exact(int n_cut, const Rational& g, int aux_cut, int slice, int M) {
  check_q_size(n_cut);
  std::vector<Rational> a1t(n_cut + 1);
  for (int x = 0; x <= n_cut; ++x) a1t[x] = a1_exact(x, aux_cut);
  QOperatorExact out;
  fill_q<Rational>(n_cut, g, [&](int x) { return a1t[std::abs(x)]; }, slice, M, out.q, out.q0,
                   out.q1_1, out.q1_2);
  return out;
}

QSliceStats q_slice_stats(int j, int M) {
  if (j < 1) throw std::invalid_argument("q_slice_stats: j must be >= 1");
  long K = ipow(M, j);
  auto cnt = box_shell_counts(3, int(K));
  QSliceStats st{j, 0, 0, 0};
  auto leq = [&](int jj, long q) { return jj >= 1 && slice_indicator(jj, q, M, SliceMode::leq); };
  for (long m = 0; m <= K; ++m)
    for (long n = 0; n <= K; ++n) {
      double v = 0;
      for (size_t s = 0; s < cnt.size(); ++s) {
        if (!cnt[s]) continue;
        long qm = m * m + long(s), qn = n * n + long(s);
        double w = double(leq(j, qm) && leq(j, qn)) - double(leq(j - 1, qm) && leq(j - 1, qn));
        if (w != 0) v += w * cnt[s] / (double(qm + 1) * double(qn + 1));
      }
      double mult = (m ? 2.0 : 1.0) * (n ? 2.0 : 1.0) * 4.0;
      st.trace += mult * v;
      st.trace_sq += mult * v * v;
      st.op_norm = std::max(st.op_norm, std::abs(v));
    }
  return st;
}

// ---------------------------------------------------------------- dense operators

TensorSpace::TensorSpace(int n_cut, long max_dim) : n_(n_cut) {
  if (n_cut < 0) throw std::invalid_argument("TensorSpace: n_cut must be >= 0");
  long s = 2 * n_cut + 1;
  dim_ = s * s * s * s;
  if (dim_ > max_dim)
    throw std::runtime_error("TensorSpace: dimension " + std::to_string(dim_) +
                             " exceeds the cap " + std::to_string(max_dim));
}

long TensorSpace::index(const Momentum4& m) const {
  long s = side(), idx = 0, mul = 1;
  for (int c = 0; c < 4; ++c) {
    idx += (m.c[c] + n_) * mul;
    mul *= s;
  }
  return idx;
}

Momentum4 TensorSpace::momentum(long idx) const {
  Momentum4 m;
  long s = side();
  for (int c = 0; c < 4; ++c) {
    m.c[c] = int(idx % s) - n_;
    idx /= s;
  }
  return m;
}

HermitianField random_hermitian_field(int n_cut, unsigned seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  int s = 2 * n_cut + 1;
  HermitianField f;
  for (int c = 0; c < 4; ++c) {
    f[c] = Eigen::MatrixXcd::Zero(s, s);
    for (int a = 0; a < s; ++a) {
      f[c](a, a) = scale * nd(rng);
      for (int b = a + 1; b < s; ++b) {
        cplx z(nd(rng), nd(rng));
        z *= scale / std::sqrt(2.0);
        f[c](a, b) = z;
        f[c](b, a) = std::conj(z);
      }
    }
  }
  return f;
}

double SliceCut::weight(long norm_sq) const {
  if (j == 0) return 1.0;
  if (j > 1 && slice_indicator(j - 1, norm_sq, M, SliceMode::leq)) return 1.0;
  return slice_indicator(j, norm_sq, M, SliceMode::exact) ? t : 0.0;
}

DiagonalOp propagator_diag(const TensorSpace& sp, const SliceCut& cut) {
  DiagonalOp d(sp.dim());
  for (long i = 0; i < sp.dim(); ++i) {
    long q = sp.momentum(i).norm_sq();
    double w = cut.weight(q);
    d[i] = w * w / double(q + 1);
  }
  return d;
}

DiagonalOp slice_projector(const TensorSpace& sp, int j, int M) {
  DiagonalOp d(sp.dim());
  for (long i = 0; i < sp.dim(); ++i)
    d[i] = slice_indicator(j, sp.momentum(i).norm_sq(), M, SliceMode::exact) ? 1.0 : 0.0;
  return d;
}

DiagonalOp d1_diag(const TensorSpace& sp, const ModelConfig& cfg, const RenormAmplitude& ra,
                   const SliceCut& cut) {
  DiagonalOp c = propagator_diag(sp, cut);
  for (long i = 0; i < sp.dim(); ++i) {
    auto m = sp.momentum(i);
    double am1 = 0;
    for (int k = 0; k < 4; ++k) am1 += ra.m1(m.c[k]);
    // (i lambda)^2 C A^r_M1
    c[i] *= -cfg.coupling() * am1;
  }
  return c;
}

DiagonalOp d2_diag(const TensorSpace& sp, const ModelConfig& cfg, const RenormAmplitude& ra,
                   const SliceCut& cut) {
  DiagonalOp c = propagator_diag(sp, cut);
  for (long i = 0; i < sp.dim(); ++i) {
    auto m = sp.momentum(i);
    double am2 = 0;
    for (int k = 0; k < 4; ++k) am2 += ra.m2(m.c[k]);
    // i lambda (-i lambda^3) C A^r_M2
    c[i] *= cfg.coupling() * cfg.coupling() * am2;
  }
  return c;
}

OperatorGrid build_sigma_operator(const TensorSpace& sp, const HermitianField& sigma, cplx lambda,
                                  const SliceCut& cut) {
  int s = sp.side(), N = sp.n_cut();
  for (int c = 0; c < 4; ++c) {
    if (sigma[c].rows() != s || sigma[c].cols() != s)
      throw std::invalid_argument("build_sigma_operator: sigma block has wrong size");
    if (!sigma[c].isApprox(sigma[c].adjoint(), 1e-12) &&
        (sigma[c] - sigma[c].adjoint()).norm() > 1e-12)
      throw std::invalid_argument("build_sigma_operator: sigma is not Hermitian");
  }
  std::vector<double> w(sp.dim());
  for (long i = 0; i < sp.dim(); ++i) {
    long q = sp.momentum(i).norm_sq();
    w[i] = cut.weight(q) / std::sqrt(double(q + 1));
  }
  OperatorGrid S = OperatorGrid::Zero(sp.dim(), sp.dim());
  cplx il = cplx(0, 1) * lambda;
  for (long i = 0; i < sp.dim(); ++i) {
    if (w[i] == 0) continue;
    Momentum4 m = sp.momentum(i);
    for (int c = 0; c < 4; ++c) {
      Momentum4 n = m;
      for (int y = -N; y <= N; ++y) {
        n.c[c] = y;
        long k = sp.index(n);
        if (w[k] == 0) continue;
        S(i, k) += il * w[i] * sigma[c](m.c[c] + N, y + N) * w[k];
      }
    }
  }
  return S;
}

double operator_norm(const OperatorGrid& A) {
  if (A.size() == 0) return 0.0;
  if (A.rows() <= 1500) {
    Eigen::BDCSVD<OperatorGrid> svd(A);
    return svd.singularValues()(0);
  }
  return operator_norm_power(A);
}

double operator_norm_power(const OperatorGrid& A, double rel_tol, int max_iter) {
  if (A.size() == 0) return 0.0;
  Eigen::VectorXcd v = Eigen::VectorXcd::Ones(A.cols());
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  for (long i = 0; i < v.size(); ++i) v[i] = cplx(nd(rng), nd(rng));
  v.normalize();
  double est = 0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXcd w = A.adjoint() * (A * v);
    double nw = w.norm();
    if (nw == 0) return 0.0;
    double next = std::sqrt(nw);
    v = w / nw;
    if (it > 0 && std::abs(next - est) <= rel_tol * next) return next;
    est = next;
  }
  return est;
}

ResolventResult resolvent(const HermitianField& sigma, const ModelConfig& cfg) {
  TensorSpace sp(cfg.n_cut());
  RenormAmplitude ra = renorm_amplitudes(cfg.n_cut(), cfg.aux_cut());
  OperatorGrid U = build_sigma_operator(sp, sigma, cfg.lambda());
  U.diagonal() += d1_diag(sp, cfg, ra) + d2_diag(sp, cfg, ra);
  OperatorGrid one_minus = OperatorGrid::Identity(sp.dim(), sp.dim()) - U;
  Eigen::PartialPivLU<OperatorGrid> lu(one_minus);
  OperatorGrid R = lu.inverse();
  if (!R.allFinite())
    throw std::runtime_error("invariant violation: 1 - U is singular");
  double norm = operator_norm(R);
  double bound = 2.0 / std::cos(0.5 * std::arg(cfg.coupling()));
  return {R, norm, bound};
}

cplx trace_log(const OperatorGrid& one_minus_u) {
  Eigen::ComplexEigenSolver<OperatorGrid> es(one_minus_u, false);
  if (es.info() != Eigen::Success) throw std::runtime_error("trace_log: eigen decomposition failed");
  cplx s = 0;
  for (long i = 0; i < es.eigenvalues().size(); ++i) {
    cplx mu = es.eigenvalues()[i];
    if (std::abs(mu) == 0) throw std::runtime_error("trace_log: singular operator");
    s += std::log(mu);
  }
  return s;
}

cplx trace_log_series(const OperatorGrid& u, int terms) {
  if (operator_norm(u) >= 0.9)
    throw std::runtime_error("trace_log_series: requires ||U|| < 0.9");
  OperatorGrid pw = u;
  cplx s = 0;
  for (int k = 1; k <= terms; ++k) {
    s -= pw.trace() / double(k);
    if (k < terms) pw = pw * u;
  }
  return s;
}

cplx trace_log_p(const OperatorGrid& u, int p) {
  OperatorGrid one_minus = OperatorGrid::Identity(u.rows(), u.cols()) - u;
  cplx s = trace_log(one_minus);
  OperatorGrid pw = u;
  for (int k = 1; k < p; ++k) {
    s += pw.trace() / double(k);
    if (k + 1 < p) pw = pw * u;
  }
  return s;
}

SliceOperators slice_operators(const TensorSpace& sp, const HermitianField& sigma,
                               const ModelConfig& cfg, const RenormAmplitude& ra,
                               const SliceCut& cut) {
  SliceOperators o;
  o.sigma = build_sigma_operator(sp, sigma, cfg.lambda(), cut);
  o.d1 = d1_diag(sp, cfg, ra, cut);
  o.d2 = d2_diag(sp, cfg, ra, cut);
  return o;
}

namespace {

cplx e_closed(const DiagonalOp& d1, const DiagonalOp& d2) {
  cplx s = 0;
  for (long i = 0; i < d1.size(); ++i) {
    cplx a = d1[i], b = d2[i];
    s += a * a * a / 3.0 + a * a * b + a * a * a * a / 4.0;
  }
  return s;
}

cplx d_conv(const DiagonalOp& d1, const DiagonalOp& d2) {
  cplx s = 0;
  for (long i = 0; i < d1.size(); ++i) {
    cplx a = d1[i], b = d2[i], d = a + b;
    s += b * b * b / 3.0 + a * b * b + (d * d * d * d - a * a * a * a) / 4.0;
  }
  return s;
}

SliceCut make_cut(int j, double t, const ModelConfig& cfg) { return SliceCut{j, t, cfg.slice_ratio()}; }

}  // namespace

cplx eval_v_ge3_leq(const HermitianField& sigma, int j, double t_j, const ModelConfig& cfg,
                    const RenormAmplitude& ra) {
  TensorSpace sp(cfg.n_cut());
  auto o = slice_operators(sp, sigma, cfg, ra, make_cut(j, t_j, cfg));
  OperatorGrid U = o.sigma;
  U.diagonal() += o.d1 + o.d2;
  cplx tl3 = trace_log_p(U, 3);
  cplx d1s2 = (o.d1.asDiagonal() * (o.sigma * o.sigma)).trace();
  return tl3 + d1s2 + e_closed(o.d1, o.d2);
}

cplx eval_v_ge3(const HermitianField& sigma, int j, const ModelConfig& cfg,
                const RenormAmplitude& ra) {
  if (j < 1) throw std::invalid_argument("eval_v_ge3: j must be >= 1");
  cplx hi = eval_v_ge3_leq(sigma, j, 1.0, cfg, ra);
  if (j == 1) return hi;
  return hi - eval_v_ge3_leq(sigma, j - 1, 1.0, cfg, ra);
}

cplx v_ge3_sigma0_closed(int j, double t_j, const ModelConfig& cfg, const RenormAmplitude& ra) {
  TensorSpace sp(cfg.n_cut());
  SliceCut cut = make_cut(j, t_j, cfg);
  DiagonalOp d1 = d1_diag(sp, cfg, ra, cut), d2 = d2_diag(sp, cfg, ra, cut);
  cplx s = 0;
  for (long i = 0; i < d1.size(); ++i) {
    cplx d = d1[i] + d2[i];
    s += std::log(1.0 - d) + d + d * d / 2.0;
  }
  return s + e_closed(d1, d2);
}

cplx vj_ready(const HermitianField& sigma, int j, double t_j, const ModelConfig& cfg,
              const RenormAmplitude& ra) {
  TensorSpace sp(cfg.n_cut());
  auto o = slice_operators(sp, sigma, cfg, ra, make_cut(j, t_j, cfg));
  long n = sp.dim();
  OperatorGrid I = OperatorGrid::Identity(n, n);
  OperatorGrid S = o.sigma;
  OperatorGrid D = (o.d1 + o.d2).asDiagonal();
  OperatorGrid D2 = o.d2.asDiagonal();
  OperatorGrid P = slice_projector(sp, j, cfg.slice_ratio()).asDiagonal();
  OperatorGrid R = (I - S - D).inverse();
  OperatorGrid S2 = S * S, Dsq = D * D, D3 = Dsq * D, D4 = D3 * D, D5 = D4 * D;
  OperatorGrid acc = 2.0 * S2 * P * S2 * R + 2.0 * D * S * P * S2 * R + 2.0 * S2 * P * S * D * R +
                     3.0 * S * D * P * S2 * R + 4.0 * (S * P * D) * (D * P * S * R) +
                     3.0 * (S * P * D) * (P * S * D * R) + 2.0 * (D * S * P) * (P * S * D * R) +
                     5.0 * S * D3 * P * S * R + 4.0 * D4 * P * S * R + 2.0 * S * P * D4 * R +
                     2.0 * S2 * S * P + 3.0 * D2 * P * S2 * P + 2.0 * D2 * S * P * S +
                     4.0 * Dsq * P * S + D5 * P * R;
  DiagonalOp d1l = d1_diag(sp, cfg, ra, make_cut(j - 1 >= 1 ? j - 1 : 0, 1.0, cfg));
  DiagonalOp d2l = d2_diag(sp, cfg, ra, make_cut(j - 1 >= 1 ? j - 1 : 0, 1.0, cfg));
  cplx dconv_j = d_conv(o.d1, o.d2) - (j > 1 ? d_conv(d1l, d2l) : cplx(0));
  return -acc.trace() + dconv_j;
}

std::vector<std::pair<std::string, cplx>> UVertices::table() const {
  return {{"U0a", u0a}, {"U0b", u0b}, {"U0c", u0c}, {"U1a", u1a}, {"U1b", u1b}, {"U2a", u2a},
          {"U2b", u2b}, {"U2c", u2c}, {"U2d", u2d}, {"U2e", u2e}, {"U3", u3},   {"U4", u4}};
}

double UVertices::quartic_rhs(double rho) const {
  double k0 = std::abs(u0a) + std::abs(u0b) + std::abs(u0c);
  double k1 = std::abs(u1a) + std::abs(u1b);
  double k2 = std::abs(u2a) + std::abs(u2b) + std::abs(u2c) + std::abs(u2d) + std::abs(u2e);
  return rho * rho * std::abs(u4) + std::pow(rho, 1.5) * std::abs(u3) + std::pow(rho, 3) * k2 +
         std::pow(rho, 2.5) * k1 + std::pow(rho, 5) * k0;
}

UVertices eval_u_vertices(const HermitianField& sigma, int j, const ModelConfig& cfg,
                          const RenormAmplitude& ra) {
  if (j < 1) throw std::invalid_argument("eval_u_vertices: j must be >= 1");
  TensorSpace sp(cfg.n_cut());
  auto o = slice_operators(sp, sigma, cfg, ra, make_cut(j, 1.0, cfg));
  double ag = std::abs(cfg.coupling());
  if (ag == 0) throw std::invalid_argument("eval_u_vertices: g must be nonzero");
  OperatorGrid S = o.sigma, Sd = S.adjoint();
  OperatorGrid P = slice_projector(sp, j, cfg.slice_ratio()).asDiagonal();
  OperatorGrid D = (o.d1 + o.d2).asDiagonal(), D2 = o.d2.asDiagonal();
  OperatorGrid Dsq = D * D, D3 = Dsq * D, D4 = D3 * D;
  OperatorGrid abs2 = Sd * S;
  UVertices u;
  u.u0a = (D4 * Dsq * P).trace() / std::pow(ag, 6);
  u.u0b = (D4 * D * P).trace() / std::pow(ag, 5);
  DiagonalOp d1l, d2l;
  cplx dconv_lo = 0;
  if (j > 1) {
    d1l = d1_diag(sp, cfg, ra, make_cut(j - 1, 1.0, cfg));
    d2l = d2_diag(sp, cfg, ra, make_cut(j - 1, 1.0, cfg));
    dconv_lo = d_conv(d1l, d2l);
  }
  u.u0c = (d_conv(o.d1, o.d2) - dconv_lo) / std::pow(ag, 5);
  u.u1a = (Dsq * P * S).trace() / std::pow(ag, 2.5);
  u.u1b = (D3 * P * S).trace() / std::pow(ag, 3.5);
  u.u2a = (Dsq * P * abs2).trace() / std::pow(ag, 3);
  u.u2b = (Dsq * Sd * P * S).trace() / std::pow(ag, 3);
  u.u2c = (D4 * P * abs2).trace() / std::pow(ag, 5);
  u.u2d = (D2 * P * abs2).trace() / std::pow(ag, 3);
  u.u2e = (D2 * Sd * P * S).trace() / std::pow(ag, 3);
  u.u3 = (S * S * S * P).trace() / std::pow(ag, 1.5);
  u.u4 = (abs2 * abs2 * P).trace() / std::pow(ag, 2);
  return u;
}

double quadratic_form_qj(const HermitianField& sigma, int j, const ModelConfig& cfg) {
  TensorSpace sp(cfg.n_cut());
  OperatorGrid S = build_sigma_operator(sp, sigma, cfg.lambda(), make_cut(j, 1.0, cfg));
  DiagonalOp p = slice_projector(sp, j, cfg.slice_ratio());
  return (S.adjoint() * p.asDiagonal() * S).trace().real() / std::abs(cfg.coupling());
}

}  // namespace mlve
