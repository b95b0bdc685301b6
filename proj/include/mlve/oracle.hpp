#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlve/core.hpp"

namespace mlve {

// exact element of Q(i)
struct QI {
  Rational re = 0, im = 0;
  QI() = default;
  QI(const Rational& r) : re(r) {}
  QI(const Rational& r, const Rational& i) : re(r), im(i) {}
  QI operator+(const QI& o) const { return {re + o.re, im + o.im}; }
  QI operator-(const QI& o) const { return {re - o.re, im - o.im}; }
  QI operator*(const QI& o) const { return {re * o.re - im * o.im, re * o.im + im * o.re}; }
  QI& operator+=(const QI& o) { re += o.re; im += o.im; return *this; }
  bool is_zero() const { return re == 0 && im == 0; }
  cplx to_complex() const { return {to_double(re), to_double(im)}; }
};

// centred Gaussian on R^dim with exact covariance
class GaussianSpec {
 public:
  explicit GaussianSpec(std::vector<std::vector<Rational>> covariance);
  static GaussianSpec identity(int dim);
  int dim() const { return int(cov_.size()); }
  const Rational& cov(int a, int b) const { return cov_[a][b]; }
  Eigen::MatrixXd covariance_double() const;

 private:
  std::vector<std::vector<Rational>> cov_;
};

class PolynomialObservable {
 public:
  explicit PolynomialObservable(int dim) : dim_(dim) {}
  int dim() const { return dim_; }
  // add coeff * prod_{v in vars} x_v (repeats allowed)
  void add(const QI& coeff, const std::vector<int>& vars);
  const std::map<std::vector<int>, QI>& terms() const { return terms_; }
  int degree() const;
  cplx eval(const Eigen::VectorXd& x) const;

 private:
  int dim_;
  std::map<std::vector<int>, QI> terms_;  // sorted variable multiset -> coefficient
};

// exact Isserlis pairing sum; odd monomials give 0
QI wick_moment(const GaussianSpec& spec, const PolynomialObservable& obs, int max_degree = 12);
// tensor-product Gauss-Hermite quadrature, independent check for small dim
cplx quadrature_moment(const GaussianSpec& spec, const PolynomialObservable& obs, int nodes = 8);

// real coordinates of the four Hermitian (2N+1)x(2N+1) blocks of sigma:
// diagonal entries N(0,1), off-diagonal sigma_mn = (x + i y)/sqrt 2 for m < n
class SigmaCoordinates {
 public:
  explicit SigmaCoordinates(int n_cut);
  int n_cut() const { return n_; }
  int dim() const { return 4 * side_ * side_; }
  int diag(int c, int m) const;    // m in [-N, N]
  int re_part(int c, int m, int n) const;  // m < n
  int im_part(int c, int m, int n) const;
  // conj(sigma^a_{c,mn}) sigma^b_{c,mn} as a polynomial; offsets select replicas
  void add_conj_product(PolynomialObservable& p, const QI& coeff, int c, int m, int n,
                        int offset_a, int offset_b) const;

 private:
  int n_, side_;
};

struct WickOrderingResult {
  QI expectation;
  Rational trace;
  QI residual;
};
// E[sigma.Q sigma] - Tr Q with Q = Q_0 + Q_1 (slice = 0) or its slice-j piece
WickOrderingResult check_wick_ordering(int n_cut, const Rational& g, int aux_cut, int slice = 0,
                                       int M = 2);

struct TauIdentityResult {
  cplx closed_form;      // exp(-lambda^4/4 sum_ab X2(a,b) Tr Q0^2)
  cplx moment_series;    // truncated moments of the linear form under the full covariance
  cplx factorized;       // product of single-node values (only meaningful when X = 1)
  double residual;       // |closed_form - moment_series|
  double variance_residual;  // |a^T K a - trace formula|
};
// q0: diagonal of Q_0 on the colour-matrix space; X: weakening matrix of the block
TauIdentityResult check_tau_identity(const std::vector<double>& q0, const Eigen::MatrixXd& X,
                                     cplx lambda);

struct SigmaLinkResult {
  QI expectation;
  QI expected;  // w lambda^4 Tr Q0^2
  QI residual;
};
SigmaLinkResult check_sigma_link(int n_cut, const Rational& w, const Rational& g, int M = 2,
                                 int slice = 0);

enum class Convention { shared, mixed };

struct IdentityResidual {
  std::string name;
  Convention convention;
  double lhs = 0, rhs = 0, residual = 0;
  Rational exact_residual = 0;  // shared convention only
  bool exact = false;
};

struct CancellationReport {
  int n_cut = 0;
  int aux_cut = 0;
  std::vector<IdentityResidual> identities;
  double log_n5 = 0;  // sum of residuals
};

// shared: every sum at cutoff N in rational arithmetic (g must be rational).
// mixed: V4..V7 with forest-side inner loops at aux_cut against closed-form
// relaxed amplitudes at aux_ref.
CancellationReport vacuum_cancellation_shared(int n_cut, const Rational& g);
CancellationReport vacuum_cancellation_mixed(int n_cut, int aux_cut, double g, int aux_ref = 40);
CancellationReport vacuum_cancellation(int n_cut, int aux_cut, double g, Convention conv,
                                       int aux_ref = 40);

// Det_2(1 - A) = det(1 - A) e^{Tr A}; requires ||A|| < 1
cplx det2(const Eigen::MatrixXcd& A);
cplx det2_eigen(const Eigen::MatrixXcd& A);

struct DetBoundRow {
  std::string name;  // A0, A1, A2
  double rho;
  double log_inv_det;  // log Det_2(1-A)^{-1} (A0, A1) or log Det(1-A)^{-1} (A2)
  double scale;        // rho^2 |A|, rho^2, rho M^{j1}
  double fitted_k;     // log_inv_det / scale
  double norm;
  double generic_bound;  // 1/2 |Tr A^2| / (1 - ||A||) for Det_2, Tr A /(1-||A||) for Det
  bool within_generic;
};

struct DetBoundReport {
  int n_cut, M;
  std::vector<int> scales;
  double w;
  std::vector<DetBoundRow> rows;
  double trace_a2_residual;  // Tr A2 - rho sum_a Tr Q01_{j_a}
};

// assembles A0 = rho X Q0_A, A1 = X Q~1_A, A2 = rho X Q01_A for a block with the given scales
DetBoundReport det_bounds_spotcheck(const ModelConfig& cfg, const std::vector<int>& scales, double w,
                                    const std::vector<double>& rhos);

}  // namespace mlve
