#include <gtest/gtest.h>

#include "mlve/core.hpp"

using namespace mlve;

TEST(Core, SliceIndicatorExamples) {
  EXPECT_TRUE(slice_indicator(1, Momentum4{{0, 0, 0, 0}}, 2, SliceMode::leq));
  Momentum4 n{{2, 0, 0, 0}};
  EXPECT_FALSE(slice_indicator(1, n, 2, SliceMode::exact));
  EXPECT_TRUE(slice_indicator(2, n, 2, SliceMode::exact));
}

TEST(Core, ExactSlicesPartition) {
  const int M = 2, jmax = 4;
  for (long q = 0; q + 1 <= ipow(M, 2 * jmax); ++q) {
    int hits = 0;
    for (int j = 1; j <= jmax; ++j) hits += slice_indicator(j, q, M, SliceMode::exact);
    EXPECT_EQ(hits, 1) << q;
    EXPECT_TRUE(slice_indicator(slice_of(q, M), q, M, SliceMode::exact));
  }
}

TEST(Core, LeqIsIdempotentAndMonotone) {
  for (long q = 0; q < 300; ++q)
    for (int j = 1; j < 5; ++j) {
      bool a = slice_indicator(j, q, 3, SliceMode::leq);
      EXPECT_EQ(a && a, a);
      if (a) EXPECT_TRUE(slice_indicator(j + 1, q, 3, SliceMode::leq));
    }
}

TEST(Core, Cardioid) {
  double rho = 0.3;
  EXPECT_TRUE(in_cardioid(cplx(rho / 2, 0), rho));
  EXPECT_FALSE(in_cardioid(cplx(-rho / 2, 0), rho));
  EXPECT_TRUE(in_cardioid(std::polar(rho / 4, M_PI / 2), rho));
  EXPECT_TRUE(in_cardioid(cplx(0, 0), rho));
  EXPECT_THROW(in_cardioid(cplx(0.1, 0), -1.0), std::invalid_argument);
  for (double arg = -3.0; arg <= 3.0; arg += 0.25) {
    bool seen_out = false;
    for (double r = 0.001; r < 2 * rho; r += 0.01) {
      bool in = in_cardioid(std::polar(r, arg), rho);
      if (!in) seen_out = true;
      if (seen_out) EXPECT_FALSE(in);
    }
  }
}

TEST(Core, ConfigLambdaSquaresToCoupling) {
  ModelConfig cfg(1, 2, 3, cplx(-0.01, 0.02), 0.1);
  EXPECT_NEAR(std::abs(cfg.lambda() * cfg.lambda() - cfg.coupling()), 0.0, 1e-15);
  EXPECT_GT(cfg.lambda().real(), 0.0);
  EXPECT_THROW(ModelConfig(1, 1, 3, cplx(0.1, 0), 0.1), std::invalid_argument);
}

TEST(Core, ConfigFromText) {
  auto kv = ModelConfig::parse_kv_text("n_cut = 2\n# comment\nslice_ratio: 3\ng_re=0.5\n");
  auto cfg = ModelConfig::from_kv(kv);
  EXPECT_EQ(cfg.n_cut(), 2);
  EXPECT_EQ(cfg.slice_ratio(), 3);
  EXPECT_DOUBLE_EQ(cfg.coupling().real(), 0.5);
  EXPECT_THROW(ModelConfig::from_kv({{"bogus", "1"}}), std::invalid_argument);
}

TEST(Core, ScalarArithmetic) {
  Scalar a(Rational(1, 3)), b(Rational(1, 6));
  EXPECT_EQ((a + b).exact_string(), "1/2");
  EXPECT_TRUE((a * b).exact());
  Scalar f(cplx(0.5, 0.0), 1e-12);
  EXPECT_FALSE((a + f).exact());
  EXPECT_TRUE((a + b) == Scalar(cplx(0.5, 0)));
  EXPECT_THROW(a / Scalar(Rational(0)), std::domain_error);
}
