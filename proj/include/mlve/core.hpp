#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <map>
#include <string>
#include <variant>

#include <gmpxx.h>

namespace mlve {

using cplx = std::complex<double>;
using Rational = mpq_class;

constexpr int kColours = 4;

// Model parameters shared by every numeric evaluation.
class ModelConfig {
 public:
  ModelConfig(int n_cut, int slice_ratio, int j_max, cplx coupling, double rho,
              int aux_cut = 20);

  int n_cut() const { return n_cut_; }
  int slice_ratio() const { return slice_ratio_; }
  int j_max() const { return j_max_; }
  int aux_cut() const { return aux_cut_; }
  cplx coupling() const { return g_; }
  cplx lambda() const { return lambda_; }
  double rho() const { return rho_; }
  int side() const { return 2 * n_cut_ + 1; }

  ModelConfig with_coupling(cplx g) const;
  ModelConfig with_n_cut(int n) const;

  // key = value document with keys n_cut, slice_ratio, j_max, g_re, g_im, rho, aux_cut
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
  static std::map<std::string, std::string> parse_kv_file(const std::string& path);
  static std::map<std::string, std::string> parse_kv_text(const std::string& text);

 private:
  int n_cut_;
  int slice_ratio_;
  int j_max_;
  int aux_cut_;
  cplx g_;
  cplx lambda_;
  double rho_;
};

struct Momentum4 {
  std::array<int, 4> c{0, 0, 0, 0};
  long norm_sq() const {
    long s = 0;
    for (int x : c) s += long(x) * x;
    return s;
  }
  bool within(int n_cut) const;
  bool operator==(const Momentum4& o) const { return c == o.c; }
};

class Colour {
 public:
  explicit Colour(int v);
  int value() const { return v_; }
  int index() const { return v_ - 1; }
  std::array<int, 3> complement() const;

 private:
  int v_;
};

enum class SliceMode { leq, exact };

bool slice_indicator(int j, long norm_sq, int M, SliceMode mode);
bool slice_indicator(int j, const Momentum4& n, int M, SliceMode mode);
// smallest j >= 1 with 1 + norm_sq <= M^{2j}
int slice_of(long norm_sq, int M);
long ipow(long base, int e);

bool in_cardioid(cplx g, double rho);

// exact rational or complex float with an attached tolerance
class Scalar {
 public:
  Scalar() : v_(Rational(0)) {}
  Scalar(const Rational& q) : v_(q) {}
  Scalar(cplx z, double tol = 1e-12) : v_(z), tol_(tol) {}

  bool exact() const { return std::holds_alternative<Rational>(v_); }
  const Rational& rational() const;
  cplx to_complex() const;
  double to_double() const { return to_complex().real(); }
  double tolerance() const { return exact() ? 0.0 : tol_; }
  std::string exact_string() const;

  Scalar operator+(const Scalar& o) const;
  Scalar operator-(const Scalar& o) const;
  Scalar operator*(const Scalar& o) const;
  Scalar operator/(const Scalar& o) const;
  bool operator==(const Scalar& o) const;

 private:
  std::variant<Rational, cplx> v_;
  double tol_ = 0.0;
};

std::string to_string(const Rational& q);
double to_double(const Rational& q);

}  // namespace mlve
