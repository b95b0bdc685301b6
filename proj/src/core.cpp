#include "mlve/core.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mlve {

ModelConfig::ModelConfig(int n_cut, int slice_ratio, int j_max, cplx coupling,
                         double rho, int aux_cut)
    : n_cut_(n_cut),
      slice_ratio_(slice_ratio),
      j_max_(j_max),
      aux_cut_(aux_cut),
      g_(coupling),
      lambda_(std::sqrt(coupling)),
      rho_(rho) {
  if (n_cut < 0) throw std::invalid_argument("n_cut must be >= 0");
  if (slice_ratio < 2) throw std::invalid_argument("slice_ratio must be an integer >= 2");
  if (j_max < 1) throw std::invalid_argument("j_max must be >= 1");
  if (aux_cut < 0) throw std::invalid_argument("aux_cut must be >= 0");
  if (!(rho > 0)) throw std::invalid_argument("rho must be positive");
}

ModelConfig ModelConfig::with_coupling(cplx g) const {
  return ModelConfig(n_cut_, slice_ratio_, j_max_, g, rho_, aux_cut_);
}

ModelConfig ModelConfig::with_n_cut(int n) const {
  return ModelConfig(n, slice_ratio_, j_max_, g_, rho_, aux_cut_);
}

static std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::map<std::string, std::string> ModelConfig::parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find_first_of("=:");
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> ModelConfig::parse_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_kv_text(ss.str());
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  static const char* known[] = {"n_cut", "slice_ratio", "j_max", "g_re", "g_im", "rho", "aux_cut"};
  for (auto& [k, v] : kv) {
    bool ok = false;
    for (auto* name : known) ok = ok || k == name;
    if (!ok) throw std::invalid_argument("unknown config key: " + k);
  }
  auto get = [&](const char* k, const std::string& def) {
    auto it = kv.find(k);
    return it == kv.end() ? def : it->second;
  };
  return ModelConfig(std::stoi(get("n_cut", "1")), std::stoi(get("slice_ratio", "2")),
                     std::stoi(get("j_max", "3")),
                     cplx(std::stod(get("g_re", "0.01")), std::stod(get("g_im", "0"))),
                     std::stod(get("rho", "0.1")), std::stoi(get("aux_cut", "20")));
}

bool Momentum4::within(int n_cut) const {
  for (int x : c)
    if (x < -n_cut || x > n_cut) return false;
  return true;
}

Colour::Colour(int v) : v_(v) {
  if (v < 1 || v > 4) throw std::invalid_argument("colour must be in {1,2,3,4}");
}

std::array<int, 3> Colour::complement() const {
  std::array<int, 3> out{};
  int k = 0;
  for (int c = 1; c <= 4; ++c)
    if (c != v_) out[k++] = c;
  return out;
}

long ipow(long base, int e) {
  long r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

static bool leq(int j, long norm_sq, int M) { return 1 + norm_sq <= ipow(M, 2 * j); }

bool slice_indicator(int j, long norm_sq, int M, SliceMode mode) {
  if (j < 1) throw std::invalid_argument("slice index must be >= 1");
  if (M < 2) throw std::invalid_argument("slice ratio must be >= 2");
  if (mode == SliceMode::leq || j == 1) return leq(j, norm_sq, M);
  return leq(j, norm_sq, M) && !leq(j - 1, norm_sq, M);
}

bool slice_indicator(int j, const Momentum4& n, int M, SliceMode mode) {
  return slice_indicator(j, n.norm_sq(), M, mode);
}

int slice_of(long norm_sq, int M) {
  int j = 1;
  while (!leq(j, norm_sq, M)) ++j;
  return j;
}

bool in_cardioid(cplx g, double rho) {
  if (!(rho > 0)) throw std::invalid_argument("rho must be positive");
  if (g == cplx(0, 0)) return true;
  double arg = std::arg(g);
  if (std::abs(arg) >= M_PI) return false;
  double c = std::cos(0.5 * arg);
  return std::abs(g) < rho * c * c;
}

std::string to_string(const Rational& q) {
  Rational r = q;
  r.canonicalize();
  return r.get_str();
}

double to_double(const Rational& q) { return q.get_d(); }

const Rational& Scalar::rational() const {
  if (!exact()) throw std::runtime_error("Scalar holds a float value");
  return std::get<Rational>(v_);
}

cplx Scalar::to_complex() const {
  if (exact()) return cplx(std::get<Rational>(v_).get_d(), 0.0);
  return std::get<cplx>(v_);
}

std::string Scalar::exact_string() const { return exact() ? to_string(rational()) : ""; }

Scalar Scalar::operator+(const Scalar& o) const {
  if (exact() && o.exact()) return Scalar(Rational(rational() + o.rational()));
  return Scalar(to_complex() + o.to_complex(), std::max(tolerance(), o.tolerance()));
}
Scalar Scalar::operator-(const Scalar& o) const {
  if (exact() && o.exact()) return Scalar(Rational(rational() - o.rational()));
  return Scalar(to_complex() - o.to_complex(), std::max(tolerance(), o.tolerance()));
}
Scalar Scalar::operator*(const Scalar& o) const {
  if (exact() && o.exact()) return Scalar(Rational(rational() * o.rational()));
  return Scalar(to_complex() * o.to_complex(), std::max(tolerance(), o.tolerance()));
}
Scalar Scalar::operator/(const Scalar& o) const {
  if (exact() && o.exact()) {
    if (o.rational() == 0) throw std::domain_error("division by zero");
    return Scalar(Rational(rational() / o.rational()));
  }
  return Scalar(to_complex() / o.to_complex(), std::max(tolerance(), o.tolerance()));
}
bool Scalar::operator==(const Scalar& o) const {
  if (exact() && o.exact()) return rational() == o.rational();
  double tol = std::max({tolerance(), o.tolerance(), 1e-15});
  return std::abs(to_complex() - o.to_complex()) <= tol * std::max(1.0, std::abs(to_complex()));
}

}  // namespace mlve
