#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepbsde/rng.hpp"

namespace deepbsde {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Measure { Physical, Pricing };

/// Terminal payoffs are a closed enumeration: each kind has a paired
/// closed-form delta prior, so new payoffs require code, not config.
enum class PayoffKind { CallPortfolio, CallSpreadAvg, BasketCall, CappedSpreadAvg };

inline const char* to_string(PayoffKind kind) {
  switch (kind) {
    case PayoffKind::CallPortfolio:   return "call_portfolio";
    case PayoffKind::CallSpreadAvg:   return "call_spread_avg";
    case PayoffKind::BasketCall:      return "basket_call";
    case PayoffKind::CappedSpreadAvg: return "capped_spread_avg";
  }
  return "unknown";
}

/// Market/BSDE parameters for one experiment family. Rates are per year,
/// volatilities per sqrt(year), prices in currency units.
struct ModelSpec {
  int d = 1;                    // asset count
  VectorXd mu;                  // per-asset drift
  VectorXd sigma;               // per-asset volatility, all > 0
  double r = 0.0;               // lending rate
  double R = 0.0;               // borrowing rate; R >= r where the Bergman driver is used
  VectorXd y;                   // per-asset dividend yield (nonzero only in the reflected model)
  VectorXd x0;                  // initial prices, all > 0
  double T = 1.0;               // horizon in years
  std::vector<double> strikes;  // per-asset strikes, {K1, K2}, or {K} depending on payoff
  std::vector<double> weights;  // call-portfolio weights q^i
  double a = 0.0;               // quadratic coefficient (qg model only)
  double gamma = 0.0;           // correlation parameter

  /// A model with identical per-asset parameters, the common case in the
  /// experiment registry.
  static ModelSpec uniform(int d, double mu, double sigma, double r, double R,
                           double y, double x0, double T) {
    ModelSpec m;
    m.d = d;
    m.mu = VectorXd::Constant(d, mu);
    m.sigma = VectorXd::Constant(d, sigma);
    m.r = r;
    m.R = R;
    m.y = VectorXd::Constant(d, y);
    m.x0 = VectorXd::Constant(d, x0);
    m.T = T;
    return m;
  }

  void validate() const {
    if (d < 1) throw std::invalid_argument("ModelSpec: d must be positive");
    if (mu.size() != d || sigma.size() != d || y.size() != d || x0.size() != d)
      throw std::invalid_argument("ModelSpec: per-asset vectors must have length d");
    if ((sigma.array() <= 0.0).any())
      throw std::invalid_argument("ModelSpec: all sigma entries must be > 0");
    if ((x0.array() <= 0.0).any())
      throw std::invalid_argument("ModelSpec: all x0 entries must be > 0");
    if (T <= 0.0) throw std::invalid_argument("ModelSpec: T must be > 0");
  }
};

/// Square root rho of the single-parameter correlation family, together with
/// its exact inverse and the implied common pairwise correlation of rho*rho^T.
struct CorrelationRoot {
  MatrixXd rho;
  MatrixXd rho_inv;
  double pairwise_corr = 0.0;
};

/// Builds rho with 1 on the diagonal and gamma off-diagonal, all divided by
/// sqrt(1 + (d-1) gamma^2). The inverse uses the closed form for
/// (a I + b J) matrices. gamma values that make rho rank-deficient
/// (gamma = 1: all rows equal; gamma = -1/(d-1): rows sum to zero) are
/// rejected at construction.
inline CorrelationRoot build_correlation_root(int d, double gamma) {
  if (d < 1) throw std::invalid_argument("build_correlation_root: d must be positive");
  const double norm2 = 1.0 + (d - 1) * gamma * gamma;
  if (norm2 <= 0.0)
    throw std::invalid_argument("build_correlation_root: 1 + (d-1)gamma^2 must be positive");

  CorrelationRoot out;
  out.pairwise_corr = (2.0 * gamma + (d - 2) * gamma * gamma) / norm2;
  if (d == 1) {
    out.rho = MatrixXd::Identity(1, 1);
    out.rho_inv = MatrixXd::Identity(1, 1);
    return out;
  }

  const double tiny = 1e-12;
  if (std::abs(1.0 - gamma) < tiny || std::abs(1.0 + (d - 1) * gamma) < tiny) {
    throw std::invalid_argument(
        "build_correlation_root: singular rho for d=" + std::to_string(d) +
        ", gamma=" + std::to_string(gamma));
  }

  const double scale = 1.0 / std::sqrt(norm2);
  out.rho = MatrixXd::Constant(d, d, gamma * scale);
  out.rho.diagonal().setConstant(scale);

  // ((1-g) I + g J)^-1 = (I - g/(1+(d-1)g) J) / (1-g), then undo the scale.
  const double diag = 1.0 / (scale * (1.0 - gamma));
  const double off = -gamma / (1.0 + (d - 1) * gamma);
  out.rho_inv = MatrixXd::Constant(d, d, diag * off);
  out.rho_inv.diagonal().setConstant(diag * (1.0 + off));
  return out;
}

/// One batch of correlated geometric-Brownian paths on a uniform grid.
/// X[k] and dW[k] are (n_paths x d); X has n_time+1 slices, dW n_time.
struct PathBatch {
  double dt = 0.0;
  Measure measure = Measure::Physical;
  std::vector<MatrixXd> dW;
  std::vector<MatrixXd> X;

  int n_paths() const { return X.empty() ? 0 : static_cast<int>(X[0].rows()); }
  int dim() const { return X.empty() ? 0 : static_cast<int>(X[0].cols()); }
  int n_time() const { return static_cast<int>(dW.size()); }
};

/// Samples paths with the exact log-normal step
///   X_{t+h} = X_t * exp((drift - sigma^2/2) h + sigma (rho dW))
/// so every price stays strictly positive at any step count. Drift is mu
/// under the physical measure and r - y under the pricing measure. Equal
/// (model, seed, shapes, measure) give bit-identical batches.
inline PathBatch sample_paths(const ModelSpec& model, const CorrelationRoot& root,
                              Measure measure, int n_paths, int n_time,
                              std::uint64_t seed) {
  // Lighter checks than ModelSpec::validate(): sigma = 0 is allowed here so
  // the deterministic-forward limit stays available as a diagnostic.
  if (model.mu.size() != model.d || model.sigma.size() != model.d ||
      model.y.size() != model.d || model.x0.size() != model.d)
    throw std::invalid_argument("sample_paths: per-asset vectors must have length d");
  if ((model.sigma.array() < 0.0).any() || (model.x0.array() <= 0.0).any() || model.T <= 0.0)
    throw std::invalid_argument("sample_paths: need sigma >= 0, x0 > 0, T > 0");
  if (n_paths < 1) throw std::invalid_argument("sample_paths: n_paths must be positive");
  if (n_time < 1) throw std::invalid_argument("sample_paths: n_time must be >= 1");
  if (root.rho.rows() != model.d)
    throw std::invalid_argument("sample_paths: correlation root dimension mismatch");

  const int d = model.d;
  const double h = model.T / n_time;
  const double sqrt_h = std::sqrt(h);

  PathBatch batch;
  batch.dt = h;
  batch.measure = measure;
  batch.dW.resize(n_time);
  batch.X.resize(n_time + 1);
  batch.X[0] = model.x0.transpose().replicate(n_paths, 1);

  VectorXd drift(d);
  for (int i = 0; i < d; ++i) {
    drift(i) = (measure == Measure::Physical) ? model.mu(i) : model.r - model.y(i);
  }

  RngStream stream = make_stream(seed, "paths");
  MatrixXd mixed(n_paths, d);
  for (int k = 0; k < n_time; ++k) {
    MatrixXd& dw = batch.dW[k];
    dw.resize(n_paths, d);
    for (int p = 0; p < n_paths; ++p) {
      for (int alpha = 0; alpha < d; ++alpha) {
        dw(p, alpha) = sqrt_h * stream.gaussian();
      }
    }
    mixed.noalias() = dw * root.rho.transpose();  // column i = sum_a rho(i,a) dW^a
    batch.X[k + 1].resize(n_paths, d);
    for (int i = 0; i < d; ++i) {
      const double coef = (drift(i) - 0.5 * model.sigma(i) * model.sigma(i)) * h;
      batch.X[k + 1].col(i) =
          batch.X[k].col(i).array() * (coef + model.sigma(i) * mixed.col(i).array()).exp();
    }
  }
  return batch;
}

/// Evaluates the terminal payoff Phi(X_T) per path.
inline VectorXd terminal_payoff(PayoffKind kind, const ModelSpec& model,
                                const MatrixXd& x_terminal) {
  const int d = model.d;
  if (x_terminal.cols() != d)
    throw std::invalid_argument("terminal_payoff: X has wrong number of assets");
  const auto n = x_terminal.rows();
  VectorXd phi = VectorXd::Zero(n);

  switch (kind) {
    case PayoffKind::CallPortfolio: {
      // sum_i q^i max(X^i - K^i, 0)
      if (static_cast<int>(model.strikes.size()) != d ||
          static_cast<int>(model.weights.size()) != d)
        throw std::invalid_argument("terminal_payoff: call_portfolio needs d strikes and weights");
      for (int i = 0; i < d; ++i) {
        phi += model.weights[i] *
               (x_terminal.col(i).array() - model.strikes[i]).max(0.0).matrix();
      }
      return phi;
    }
    case PayoffKind::CallSpreadAvg: {
      // (1/d) sum_i [(X^i - K1)^+ - 2 (X^i - K2)^+]
      if (model.strikes.size() != 2)
        throw std::invalid_argument("terminal_payoff: call_spread_avg needs strikes {K1, K2}");
      const double k1 = model.strikes[0], k2 = model.strikes[1];
      for (int i = 0; i < d; ++i) {
        phi += ((x_terminal.col(i).array() - k1).max(0.0) -
                2.0 * (x_terminal.col(i).array() - k2).max(0.0))
                   .matrix();
      }
      return phi / d;
    }
    case PayoffKind::BasketCall: {
      // max((1/d) sum_i X^i - K, 0)
      if (model.strikes.size() != 1)
        throw std::invalid_argument("terminal_payoff: basket_call needs strikes {K}");
      phi = (x_terminal.rowwise().mean().array() - model.strikes[0]).max(0.0).matrix();
      return phi;
    }
    case PayoffKind::CappedSpreadAvg: {
      // (1/d) sum_i [(X^i - K1)^+ - (X^i - K2)^+], bounded by K2 - K1
      if (model.strikes.size() != 2)
        throw std::invalid_argument("terminal_payoff: capped_spread_avg needs strikes {K1, K2}");
      const double k1 = model.strikes[0], k2 = model.strikes[1];
      for (int i = 0; i < d; ++i) {
        phi += ((x_terminal.col(i).array() - k1).max(0.0) -
                (x_terminal.col(i).array() - k2).max(0.0))
                   .matrix();
      }
      return phi / d;
    }
  }
  throw std::invalid_argument("terminal_payoff: unknown payoff kind");
}

}  // namespace deepbsde
