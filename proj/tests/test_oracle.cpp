#include <gtest/gtest.h>

#include <random>

#include "mlve/bkar.hpp"
#include "mlve/lattice.hpp"
#include "mlve/oracle.hpp"

using namespace mlve;

TEST(Oracle, WickMomentExamples) {
  auto unit = GaussianSpec::identity(1);
  PolynomialObservable x2(1), x4(1), x3(1);
  x2.add(QI(1), {0, 0});
  x4.add(QI(1), {0, 0, 0, 0});
  x3.add(QI(1), {0, 0, 0});
  EXPECT_EQ(wick_moment(unit, x2).re, 1);
  EXPECT_EQ(wick_moment(unit, x4).re, 3);
  EXPECT_TRUE(wick_moment(unit, x3).is_zero());

  std::vector<std::vector<Rational>> K(4, std::vector<Rational>(4));
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) K[a][b] = a == b ? Rational(2) : Rational(1, a + b + 2);
  GaussianSpec spec(K);
  PolynomialObservable p(4);
  p.add(QI(1), {0, 1, 2, 3});
  Rational expect = K[0][1] * K[2][3] + K[0][2] * K[1][3] + K[0][3] * K[1][2];
  EXPECT_EQ(wick_moment(spec, p).re, expect);
}

TEST(Oracle, RejectsBadCovariance) {
  std::vector<std::vector<Rational>> K{{1, 2}, {2, 1}};
  EXPECT_THROW(GaussianSpec{K}, std::invalid_argument);
  std::vector<std::vector<Rational>> A{{1, 0}, {1, 1}};
  EXPECT_THROW(GaussianSpec{A}, std::invalid_argument);
}

TEST(Oracle, IsserlisMatchesQuadrature) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> num(-3, 3), var(0, 2);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 1 + trial % 3;
    // covariance L L^T with small rational entries
    std::vector<std::vector<Rational>> L(d, std::vector<Rational>(d, 0)), K(d, std::vector<Rational>(d, 0));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j <= i; ++j) L[i][j] = Rational(num(rng), 2) + (i == j ? 2 : 0);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) K[i][j] += L[i][k] * L[j][k];
    GaussianSpec spec(K);
    PolynomialObservable obs(d);
    for (int t = 0; t < 5; ++t) {
      std::vector<int> vars;
      int deg = t % 5;
      for (int k = 0; k < deg; ++k) vars.push_back(var(rng) % d);
      obs.add(QI(Rational(num(rng), 3), Rational(num(rng), 5)), vars);
    }
    cplx exact = wick_moment(spec, obs).to_complex();
    cplx quad = quadrature_moment(spec, obs, 8);
    EXPECT_NEAR(std::abs(exact - quad), 0.0, 1e-8 * std::max(1.0, std::abs(exact)));
  }
}

TEST(Oracle, WickOrderingExact) {
  auto r0 = check_wick_ordering(0, Rational(1, 100), 0);
  EXPECT_TRUE(r0.residual.is_zero());
  auto r1 = check_wick_ordering(1, Rational(1, 100), 1);
  EXPECT_TRUE(r1.residual.is_zero());
  EXPECT_GT(r1.trace, 0);
  for (int j = 1; j <= 2; ++j) {
    auto rj = check_wick_ordering(1, Rational(1, 100), 1, j, 2);
    EXPECT_TRUE(rj.residual.is_zero()) << "slice " << j;
  }
}

TEST(Oracle, TauIdentity) {
  // scalar case: lambda^2/sqrt2 = 1 gives E[exp(i a tau)] = exp(-a^2/2)
  const cplx lam = std::pow(2.0, 0.25);
  Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  auto s = check_tau_identity({0.7}, one, lam);
  EXPECT_NEAR(std::abs(s.closed_form - std::exp(-0.49 / 2)), 0.0, 1e-14);
  EXPECT_LT(s.residual, 1e-12);

  auto Q = build_q_exact(1, Rational(1, 100), 1).q0;
  std::vector<double> q0;
  double tr_sq = 0;
  for (int c = 0; c < 4; ++c)
    for (auto& row : Q.diag[c])
      for (auto& v : row) {
        q0.push_back(to_double(v));
        tr_sq += to_double(v) * to_double(v);
      }
  const cplx l = std::sqrt(cplx(0.01, 0.004));
  Forest f{2, {{0, 1}}};
  auto X1 = weakening_matrix(f, {1.0});
  auto r = check_tau_identity(q0, X1, l);
  EXPECT_LT(r.residual, 1e-10);
  EXPECT_LT(r.variance_residual, 1e-12);
  EXPECT_NEAR(std::abs(r.closed_form - std::exp(-std::pow(l, 4) / 4.0 * 4.0 * tr_sq)), 0.0, 1e-14);

  auto X0 = weakening_matrix(f, {0.0});
  auto r0 = check_tau_identity(q0, X0, l);
  EXPECT_NEAR(std::abs(r0.closed_form - r0.factorized), 0.0, 1e-14);

  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    auto fr = random_forest(2 + t % 5, rng);
    std::vector<double> w(fr.edges.size(), 0.37);
    auto rr = check_tau_identity(q0, weakening_matrix(fr, w), l);
    EXPECT_LT(rr.residual, 1e-10);
  }
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 2, 2, 1;
  EXPECT_THROW(check_tau_identity(q0, bad, l), std::invalid_argument);
}

TEST(Oracle, SigmaLink) {
  for (int n = 0; n <= 1; ++n) {
    auto r = check_sigma_link(n, Rational(1, 3), Rational(1, 100));
    EXPECT_TRUE(r.residual.is_zero()) << n;
    EXPECT_GT(r.expected.re, 0);
  }
  EXPECT_TRUE(check_sigma_link(1, 0, Rational(1, 100)).expectation.is_zero());
}

TEST(Oracle, CancellationSharedExact) {
  for (int n = 0; n <= 2; ++n) {
    auto rep = vacuum_cancellation_shared(n, Rational(1, 100));
    ASSERT_EQ(rep.identities.size(), 7u);
    for (const auto& id : rep.identities) EXPECT_EQ(id.exact_residual, 0) << id.name << " N=" << n;
    EXPECT_EQ(rep.log_n5, 0.0);
  }
  auto v5 = vacuum_cancellation_shared(1, Rational(1, 100)).identities[4];
  EXPECT_EQ(v5.name, "V5");
  EXPECT_GT(std::abs(v5.lhs), 0.0);
  for (const auto& id : vacuum_cancellation_shared(1, 0).identities) {
    EXPECT_EQ(id.lhs, 0.0);
    EXPECT_EQ(id.rhs, 0.0);
  }
}

TEST(Oracle, CancellationMixed) {
  std::vector<CancellationReport> reps;
  for (int aux : {5, 10, 20}) reps.push_back(vacuum_cancellation_mixed(1, aux, 0.01));
  ASSERT_EQ(reps[0].identities.size(), 4u);
  // V4, V5, V7 decrease monotonically; V6 is not monotone (its M2 amplitude is not)
  for (size_t i : {0u, 1u, 3u}) {
    double a = std::abs(reps[0].identities[i].residual), b = std::abs(reps[1].identities[i].residual),
           c = std::abs(reps[2].identities[i].residual);
    EXPECT_GT(a, b) << reps[0].identities[i].name;
    EXPECT_GT(b, c) << reps[0].identities[i].name;
  }
  EXPECT_THROW(vacuum_cancellation(1, 20, 0.01, Convention::shared), std::invalid_argument);
  EXPECT_THROW(vacuum_cancellation_mixed(1, 50, 0.01, 40), std::invalid_argument);
}

TEST(Oracle, Det2) {
  Eigen::MatrixXcd Z = Eigen::MatrixXcd::Zero(3, 3);
  EXPECT_NEAR(std::abs(det2(Z) - 1.0), 0.0, 1e-15);
  Eigen::VectorXcd a(3);
  a << 0.1, -0.3, cplx(0.2, 0.1);
  cplx closed = 1.0;
  for (int i = 0; i < 3; ++i) closed *= (1.0 - a[i]) * std::exp(a[i]);
  EXPECT_NEAR(std::abs(det2(Eigen::MatrixXcd(a.asDiagonal())) - closed), 0.0, 1e-14);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 20; ++t) {
    Eigen::MatrixXcd A(5, 5);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) A(i, j) = cplx(nd(rng), nd(rng));
    A *= 0.8 / operator_norm(A);
    EXPECT_NEAR(std::abs(det2(A) - det2_eigen(A)), 0.0, 1e-12);
  }
  EXPECT_THROW(det2(Eigen::MatrixXcd::Identity(2, 2)), std::invalid_argument);
}

TEST(Oracle, DetBoundsSpotcheck) {
  ModelConfig cfg(1, 2, 2, cplx(0.01, 0.0), 0.05, 1);
  auto rep = det_bounds_spotcheck(cfg, {1, 2}, 0.5, {0.005, 0.01, 0.02});
  EXPECT_LT(rep.trace_a2_residual, 1e-10);
  ASSERT_EQ(rep.rows.size(), 9u);
  std::map<std::string, std::pair<double, double>> range;
  for (const auto& r : rep.rows) {
    EXPECT_TRUE(r.within_generic) << r.name << " rho=" << r.rho;
    EXPECT_LT(r.norm, 1.0);
    auto& [lo, hi] = range.try_emplace(r.name, 1e300, -1e300).first->second;
    lo = std::min(lo, r.fitted_k);
    hi = std::max(hi, r.fitted_k);
  }
  // the fitted constant is stable across rho, as the bound form predicts
  for (auto& [name, lh] : range) {
    EXPECT_GT(lh.first, 0.0) << name;
    EXPECT_LT(lh.second / lh.first, 3.0) << name;
  }
  EXPECT_THROW(det_bounds_spotcheck(cfg, {2, 2}, 0.5, {0.01}), std::invalid_argument);
}
