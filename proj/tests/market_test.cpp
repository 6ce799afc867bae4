#include "deepbsde/market.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "deepbsde/rng.hpp"

namespace deepbsde {
namespace {

TEST(CorrelationRoot, PairwiseCorrMatchesClosedForm) {
  // (2 gamma + (d-2) gamma^2) / (1 + (d-1) gamma^2)
  const auto root30 = build_correlation_root(30, 0.06);
  EXPECT_NEAR(root30.pairwise_corr, 0.2208 / 1.1044, 1e-12);
  EXPECT_NEAR(root30.pairwise_corr, 0.1999, 5e-4);  // "about 20%"

  const auto root50 = build_correlation_root(50, 0.07);
  EXPECT_NEAR(root50.pairwise_corr, 0.3752 / 1.2401, 1e-12);
  EXPECT_NEAR(root50.pairwise_corr, 0.3026, 5e-5);  // "around 30%"
}

TEST(CorrelationRoot, ZeroGammaIsIdentity) {
  const auto root = build_correlation_root(5, 0.0);
  EXPECT_TRUE(root.rho.isIdentity(0.0));
  EXPECT_TRUE(root.rho_inv.isIdentity(0.0));
  EXPECT_DOUBLE_EQ(root.pairwise_corr, 0.0);
}

TEST(CorrelationRoot, StructuralInvariants) {
  const std::pair<int, double> cases[] = {
      {2, 0.06}, {5, -0.2}, {30, 0.06}, {50, 0.07}, {10, 0.9}, {7, -0.1}};
  for (const auto& [d, gamma] : cases) {
    const auto root = build_correlation_root(d, gamma);
    const MatrixXd corr = root.rho * root.rho.transpose();
    for (int i = 0; i < d; ++i) {
      EXPECT_NEAR(corr(i, i), 1.0, 1e-12) << "d=" << d << " gamma=" << gamma;
      for (int j = 0; j < d; ++j) {
        if (i == j) continue;
        EXPECT_NEAR(corr(i, j), root.pairwise_corr, 1e-12);
      }
    }
    const MatrixXd prod = root.rho * root.rho_inv;
    EXPECT_TRUE(prod.isIdentity(1e-10)) << "d=" << d << " gamma=" << gamma;
  }
}

TEST(CorrelationRoot, RejectsSingularGamma) {
  EXPECT_THROW(build_correlation_root(3, 1.0), std::invalid_argument);
  EXPECT_THROW(build_correlation_root(3, -0.5), std::invalid_argument);  // 1+(d-1)g = 0
  try {
    build_correlation_root(4, 1.0);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("d=4"), std::string::npos);
    EXPECT_NE(msg.find("1.0"), std::string::npos);
  }
}

ModelSpec basic_model(int d) {
  ModelSpec m = ModelSpec::uniform(d, 0.05, 0.3, 0.01, 0.06, 0.0, 100.0, 0.5);
  m.strikes.assign(d, 103.0);
  m.weights.assign(d, 1.0 / d);
  return m;
}

TEST(SamplePaths, StartsAtX0AndStaysPositive) {
  const auto model = basic_model(3);
  const auto root = build_correlation_root(3, 0.06);
  const auto batch = sample_paths(model, root, Measure::Physical, 256, 10, 7);

  ASSERT_EQ(batch.n_time(), 10);
  ASSERT_EQ(batch.n_paths(), 256);
  for (int p = 0; p < batch.n_paths(); ++p) {
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(batch.X[0](p, i), 100.0);
  }
  for (const auto& x : batch.X) EXPECT_TRUE((x.array() > 0.0).all());
  EXPECT_NEAR(batch.dt, 0.05, 1e-15);
}

TEST(SamplePaths, DeterministicGivenSeed) {
  const auto model = basic_model(2);
  const auto root = build_correlation_root(2, 0.06);
  const auto a = sample_paths(model, root, Measure::Physical, 64, 5, 42);
  const auto b = sample_paths(model, root, Measure::Physical, 64, 5, 42);
  const auto c = sample_paths(model, root, Measure::Physical, 64, 5, 43);
  for (int k = 0; k <= 5; ++k) EXPECT_EQ((a.X[k] - b.X[k]).norm(), 0.0);
  for (int k = 0; k < 5; ++k) EXPECT_EQ((a.dW[k] - b.dW[k]).norm(), 0.0);
  EXPECT_NE((a.X[5] - c.X[5]).norm(), 0.0);
}

TEST(SamplePaths, ZeroVolDegenerateLimitIsDeterministicForward) {
  ModelSpec model = basic_model(2);
  model.sigma.setZero();
  const auto root = build_correlation_root(2, 0.0);
  const auto batch = sample_paths(model, root, Measure::Physical, 8, 6, 1);
  const double expected = 100.0 * std::exp(0.05 * 0.5);
  for (int p = 0; p < 8; ++p) {
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(batch.X[6](p, i), expected, 1e-10);
  }
}

TEST(SamplePaths, IncrementsHaveStdSqrtH) {
  const auto model = basic_model(1);
  const auto root = build_correlation_root(1, 0.0);
  const auto batch = sample_paths(model, root, Measure::Physical, 20000, 4, 11);
  for (int k = 0; k < 4; ++k) {
    const double mean = batch.dW[k].col(0).mean();
    const double var = (batch.dW[k].col(0).array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 4.0 * std::sqrt(batch.dt / 20000));
    EXPECT_NEAR(var, batch.dt, 5.0 * batch.dt / std::sqrt(20000.0));
  }
}

TEST(SamplePaths, PricingMeasureMartingale) {
  // e^{-rT} X_T^i averages to x0^i within 3 MC standard errors when y = 0.
  ModelSpec model = basic_model(3);
  const auto root = build_correlation_root(3, 0.3);
  const int n = 40000;
  const auto batch = sample_paths(model, root, Measure::Pricing, n, 4, 21);
  const double disc = std::exp(-model.r * model.T);
  for (int i = 0; i < 3; ++i) {
    const auto discounted = disc * batch.X[4].col(i).array();
    const double mean = discounted.mean();
    const double se = std::sqrt((discounted - mean).square().sum() / (n - 1)) / std::sqrt(double(n));
    EXPECT_NEAR(mean, 100.0, 3.0 * se) << "asset " << i;
  }
}

TEST(SamplePaths, LogReturnCorrelationMatchesPairwiseCorr) {
  const auto model = basic_model(2);
  const auto root = build_correlation_root(2, 0.06);
  const int n = 100000;
  const auto batch = sample_paths(model, root, Measure::Physical, n, 1, 5);
  VectorXd u = (batch.X[1].col(0).array() / 100.0).log();
  VectorXd v = (batch.X[1].col(1).array() / 100.0).log();
  u.array() -= u.mean();
  v.array() -= v.mean();
  const double corr = u.dot(v) / std::sqrt(u.squaredNorm() * v.squaredNorm());
  EXPECT_NEAR(corr, root.pairwise_corr, 0.01);
}

TEST(TerminalPayoff, CallPortfolioSingleAsset) {
  ModelSpec model = basic_model(1);
  model.weights = {1.0};
  MatrixXd x(1, 1);
  x << 110.0;
  EXPECT_DOUBLE_EQ(terminal_payoff(PayoffKind::CallPortfolio, model, x)(0), 7.0);
  x << 90.0;
  EXPECT_DOUBLE_EQ(terminal_payoff(PayoffKind::CallPortfolio, model, x)(0), 0.0);
}

TEST(TerminalPayoff, CallSpreadAvg) {
  ModelSpec model = basic_model(1);
  model.strikes = {95.0, 105.0};
  MatrixXd x(1, 1);
  x << 200.0;
  // (200-95)^+ - 2 (200-105)^+ = 105 - 190 = -85
  EXPECT_DOUBLE_EQ(terminal_payoff(PayoffKind::CallSpreadAvg, model, x)(0), -85.0);
}

TEST(TerminalPayoff, CappedSpreadSaturates) {
  for (int d : {1, 5}) {
    ModelSpec model = basic_model(d);
    model.strikes = {95.0, 105.0};
    MatrixXd x = MatrixXd::Constant(3, d, 115.0);  // K2 + 10 everywhere
    const VectorXd phi = terminal_payoff(PayoffKind::CappedSpreadAvg, model, x);
    for (int p = 0; p < 3; ++p) EXPECT_DOUBLE_EQ(phi(p), 10.0);
  }
}

TEST(TerminalPayoff, BasketCall) {
  ModelSpec model = basic_model(2);
  model.strikes = {100.0};
  MatrixXd x(2, 2);
  x << 90.0, 130.0,   // mean 110 -> 10
      80.0, 100.0;    // mean 90 -> 0
  const VectorXd phi = terminal_payoff(PayoffKind::BasketCall, model, x);
  EXPECT_DOUBLE_EQ(phi(0), 10.0);
  EXPECT_DOUBLE_EQ(phi(1), 0.0);
}

TEST(TerminalPayoff, MisconfiguredStrikesThrow) {
  ModelSpec model = basic_model(2);
  model.strikes = {95.0};  // call spread needs two strikes
  MatrixXd x = MatrixXd::Constant(1, 2, 100.0);
  EXPECT_THROW(terminal_payoff(PayoffKind::CallSpreadAvg, model, x), std::invalid_argument);
  model.strikes = {95.0, 105.0};
  EXPECT_THROW(terminal_payoff(PayoffKind::BasketCall, model, x), std::invalid_argument);
}

TEST(ModelSpec, ValidateRejectsBadInputs) {
  ModelSpec m = basic_model(2);
  EXPECT_NO_THROW(m.validate());
  m.sigma(1) = 0.0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = basic_model(2);
  m.T = 0.0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = basic_model(2);
  m.x0(0) = -1.0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace deepbsde
