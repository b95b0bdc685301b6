#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "mlve/core.hpp"

namespace mlve {

// counts[s] = #{p in [-cut,cut]^dim : p^2 = s}
std::vector<long> box_shell_counts(int dim, int cut);

Rational propagator(const Momentum4& n);

// single colour tadpole counterterm, sum over [-N,N]^3
Rational delta_m1(int N);

// Tr_hat{c} C at index x with the three other indices in [-K,K]^3
Rational tadpole_exact(int x, int K);
double tadpole(int x, int K);

// renormalized sums; aux_cut truncates the Z^3 sums to [-aux,aux]^3
Rational a1_exact(int n, int aux_cut);
double a1(int n, int aux_cut);
// continuum estimate of the neglected tail of a1 beyond aux_cut
double a1_tail_estimate(int n, int aux_cut);
double a1_with_tail(int n, int aux_cut);
Rational s2_exact(int n, int K);
double s2(int n, int K);
Rational a2_exact(int n, int aux_cut);
double a2(int n, int aux_cut);
Rational a2_cross_exact(int n, int aux_cut);
double a2_cross(int n, int aux_cut);
Rational delta_m2_exact(int N, int aux_cut);
double delta_m2(int N, int aux_cut);

// tables over n in [0, n_max]
struct RenormAmplitude {
  int aux_cut = 0;
  std::vector<double> a1, a2, a2_cross;
  double m1(int n) const { return -a1.at(std::abs(n)); }
  double m2(int n) const { return a2.at(std::abs(n)) + 3.0 * a2_cross.at(std::abs(n)); }
};
RenormAmplitude renorm_amplitudes(int n_max, int aux_cut);

// Q operator on the direct sum over colours of H_c (x) H_c.
// diag[c][m][n] is the colour-diagonal entry Q_{cc;mn,mn} (indices shifted by N),
// off[c][c'][m][p] the entry Q_{cc';mm,pp} for c != c'.
template <class T>
struct QBlocks {
  int n_cut = 0;
  std::array<std::vector<std::vector<T>>, 4> diag;
  std::array<std::array<std::vector<std::vector<T>>, 4>, 4> off;
  T trace() const;
};

struct QOperator {
  QBlocks<cplx> q, q0, q1_1, q1_2;  // q = q0 + q1_1 + g * q1_2
};

struct QOperatorExact {
  QBlocks<Rational> q, q0, q1_1, q1_2;
};

// slice: 0 means no slice cutoff, otherwise Q_{.,j} = Q_{.,<=j} - Q_{.,<=j-1}
QOperator build_q(const ModelConfig& cfg, int slice = 0);
QOperatorExact build_q_exact(int n_cut, const Rational& g, int aux_cut, int slice = 0,
                             int M = 2);

struct QSliceStats {
  int j;
  double trace;
  double op_norm;
  double trace_sq;
};
// statistics of Q_{0,j} over all four colours with a box large enough for the slice
QSliceStats q_slice_stats(int j, int M);

// dense operators on the truncated tensor space of dimension (2N+1)^4
using OperatorGrid = Eigen::MatrixXcd;
using DiagonalOp = Eigen::VectorXcd;

class TensorSpace {
 public:
  explicit TensorSpace(int n_cut, long max_dim = 10000);
  int n_cut() const { return n_; }
  int side() const { return 2 * n_ + 1; }
  long dim() const { return dim_; }
  long index(const Momentum4& m) const;
  Momentum4 momentum(long idx) const;

 private:
  int n_;
  long dim_;
};

using HermitianField = std::array<Eigen::MatrixXcd, 4>;
HermitianField random_hermitian_field(int n_cut, unsigned seed, double scale = 1.0);

// cutoff weights for the interpolated slice: 1_{<=j}(t) = 1_{<=j-1} + t 1_j; j = 0 means no cutoff
struct SliceCut {
  int j = 0;
  double t = 1.0;
  int M = 2;
  double weight(long norm_sq) const;
};

DiagonalOp propagator_diag(const TensorSpace& sp, const SliceCut& cut = {});
DiagonalOp slice_projector(const TensorSpace& sp, int j, int M);
// D1 = i lambda C^{1/2} B1 C^{1/2}, D2 likewise with B2 = -i lambda^3 A^r_M2
DiagonalOp d1_diag(const TensorSpace& sp, const ModelConfig& cfg, const RenormAmplitude& ra,
                   const SliceCut& cut = {});
DiagonalOp d2_diag(const TensorSpace& sp, const ModelConfig& cfg, const RenormAmplitude& ra,
                   const SliceCut& cut = {});
OperatorGrid build_sigma_operator(const TensorSpace& sp, const HermitianField& sigma, cplx lambda,
                                  const SliceCut& cut = {});

double operator_norm(const OperatorGrid& A);
double operator_norm_power(const OperatorGrid& A, double rel_tol = 1e-10, int max_iter = 20000);

struct ResolventResult {
  OperatorGrid grid;
  double norm;
  double bound;  // 2 / cos(arg(g)/2)
};
ResolventResult resolvent(const HermitianField& sigma, const ModelConfig& cfg);

// Tr log_p(1 - U) = Tr log(1 - U) + sum_{k<p} Tr U^k / k
cplx trace_log(const OperatorGrid& one_minus_u);
cplx trace_log_series(const OperatorGrid& u, int terms = 400);
cplx trace_log_p(const OperatorGrid& u, int p);

struct SliceOperators {
  OperatorGrid sigma;
  DiagonalOp d1, d2;
};
SliceOperators slice_operators(const TensorSpace& sp, const HermitianField& sigma,
                               const ModelConfig& cfg, const RenormAmplitude& ra,
                               const SliceCut& cut);

// V^{>=3}_{<=j}(t_j); j = 0 means the full truncated space
cplx eval_v_ge3_leq(const HermitianField& sigma, int j, double t_j, const ModelConfig& cfg,
                    const RenormAmplitude& ra);
// V^{>=3}_j = V^{>=3}_{<=j}(1) - V^{>=3}_{<=j-1}(1)
cplx eval_v_ge3(const HermitianField& sigma, int j, const ModelConfig& cfg,
                const RenormAmplitude& ra);
// closed form at sigma = 0 from the diagonal D entries
cplx v_ge3_sigma0_closed(int j, double t_j, const ModelConfig& cfg, const RenormAmplitude& ra);
// integrand in ready form, literal transcription
cplx vj_ready(const HermitianField& sigma, int j, double t_j, const ModelConfig& cfg,
              const RenormAmplitude& ra);

struct UVertices {
  cplx u0a, u0b, u0c, u1a, u1b, u2a, u2b, u2c, u2d, u2e, u3, u4;
  std::vector<std::pair<std::string, cplx>> table() const;
  // rho^2 U^4 + rho^{3/2} U^3 + rho^3 U^2 + rho^{5/2} U^1 + rho^5 U^0
  double quartic_rhs(double rho) const;
};
UVertices eval_u_vertices(const HermitianField& sigma, int j, const ModelConfig& cfg,
                          const RenormAmplitude& ra);

// Q_j(sigma) = Tr[Sigma^* 1_j Sigma] / |g|
double quadratic_form_qj(const HermitianField& sigma, int j, const ModelConfig& cfg);

}  // namespace mlve
