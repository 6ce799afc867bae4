#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "deepbsde/market.hpp"
#include "deepbsde/math.hpp"

namespace deepbsde {

/// Black-Scholes call with continuous dividend yield. At tau = 0 this is the
/// intrinsic value max(x - K, 0).
inline double bs_call(double x, double K, double rate, double div, double sigma,
                      double tau) {
  if (x <= 0.0) throw std::domain_error("bs_call: x must be > 0");
  if (sigma <= 0.0) throw std::domain_error("bs_call: sigma must be > 0");
  if (tau < 0.0) throw std::domain_error("bs_call: tau must be >= 0");
  if (K < 0.0) throw std::domain_error("bs_call: K must be >= 0");
  if (tau == 0.0) return std::max(x - K, 0.0);
  if (K == 0.0) return x * std::exp(-div * tau);
  const double fwd = x * std::exp((rate - div) * tau);
  const double vol = sigma * std::sqrt(tau);
  const double d_plus = std::log(fwd / K) / vol + 0.5 * vol;
  const double d_minus = d_plus - vol;
  return std::exp(-rate * tau) * (fwd * norm_cdf(d_plus) - K * norm_cdf(d_minus));
}

/// Spot delta e^{-div tau} N(d_+), with d_+ built from the dividend-adjusted
/// forward F = x e^{(rate - div) tau}.
inline double bs_call_delta(double x, double K, double rate, double div,
                            double sigma, double tau) {
  if (x <= 0.0) throw std::domain_error("bs_call_delta: x must be > 0");
  if (sigma <= 0.0) throw std::domain_error("bs_call_delta: sigma must be > 0");
  if (tau <= 0.0) throw std::domain_error("bs_call_delta: tau must be > 0");
  if (K < 0.0) throw std::domain_error("bs_call_delta: K must be >= 0");
  if (K == 0.0) return std::exp(-div * tau);
  const double fwd = x * std::exp((rate - div) * tau);
  const double vol = sigma * std::sqrt(tau);
  const double d_plus = std::log(fwd / K) / vol + 0.5 * vol;
  return std::exp(-div * tau) * norm_cdf(d_plus);
}

namespace detail {

/// Per-asset delta factor of the leading-order price for the call-type
/// payoff families (everything except the basket call).
inline double call_family_delta(PayoffKind kind, const ModelSpec& model,
                                double rate, double x, int asset, double tau) {
  switch (kind) {
    case PayoffKind::CallPortfolio:
      return model.weights[asset] *
             bs_call_delta(x, model.strikes[asset], rate, 0.0, model.sigma(asset), tau);
    case PayoffKind::CallSpreadAvg:
      return (bs_call_delta(x, model.strikes[0], rate, 0.0, model.sigma(asset), tau) -
              2.0 * bs_call_delta(x, model.strikes[1], rate, 0.0, model.sigma(asset), tau)) /
             model.d;
    case PayoffKind::CappedSpreadAvg:
      return (bs_call_delta(x, model.strikes[0], rate, 0.0, model.sigma(asset), tau) -
              bs_call_delta(x, model.strikes[1], rate, 0.0, model.sigma(asset), tau)) /
             model.d;
    default:
      throw std::invalid_argument("call_family_delta: payoff has no call-family prior");
  }
}

}  // namespace detail

/// Leading-order price Y^(0) per path for the call-type payoff families:
/// a sum of Black-Scholes calls at the given rate (0 for the driftless
/// quadratic-growth model, the lending rate otherwise).
inline VectorXd leading_order_call_price(const ModelSpec& model, PayoffKind kind,
                                         double rate, double t, const MatrixXd& x_t) {
  if (t >= model.T) throw std::domain_error("leading_order_call_price: t must be < T");
  const double tau = model.T - t;
  const int d = model.d;
  const auto n = x_t.rows();
  VectorXd price = VectorXd::Zero(n);
  for (Eigen::Index p = 0; p < n; ++p) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
      const double x = x_t(p, i);
      switch (kind) {
        case PayoffKind::CallPortfolio:
          acc += model.weights[i] * bs_call(x, model.strikes[i], rate, 0.0, model.sigma(i), tau);
          break;
        case PayoffKind::CallSpreadAvg:
          acc += (bs_call(x, model.strikes[0], rate, 0.0, model.sigma(i), tau) -
                  2.0 * bs_call(x, model.strikes[1], rate, 0.0, model.sigma(i), tau)) /
                 d;
          break;
        case PayoffKind::CappedSpreadAvg:
          acc += (bs_call(x, model.strikes[0], rate, 0.0, model.sigma(i), tau) -
                  bs_call(x, model.strikes[1], rate, 0.0, model.sigma(i), tau)) /
                 d;
          break;
        default:
          throw std::invalid_argument("leading_order_call_price: unsupported payoff kind");
      }
    }
    price(p) = acc;
  }
  return price;
}

/// Z^AE rows for the call-type payoff families:
///   Z^{AE,alpha} = sum_i delta_i(X^i_t) sigma^i X^i_t rho_{i,alpha}
/// where delta_i is the per-asset delta of the leading-order price. Pass
/// rate = r for the Bergman payoffs and rate = 0 for the quadratic-growth
/// model, whose forward is driftless under the physical measure.
inline MatrixXd z_ae_calls(const ModelSpec& model, const CorrelationRoot& root,
                           PayoffKind kind, double rate, double t,
                           const MatrixXd& x_t) {
  if (t >= model.T) throw std::domain_error("z_ae_calls: t must be < T");
  if (x_t.cols() != model.d) throw std::invalid_argument("z_ae_calls: X has wrong width");
  const double tau = model.T - t;
  const int d = model.d;
  const auto n = x_t.rows();

  MatrixXd weighted(n, d);  // delta_i * sigma_i * X_i
  for (int i = 0; i < d; ++i) {
    for (Eigen::Index p = 0; p < n; ++p) {
      const double x = x_t(p, i);
      weighted(p, i) = detail::call_family_delta(kind, model, rate, x, i, tau) *
                       model.sigma(i) * x;
    }
  }
  return weighted * root.rho;  // column alpha = sum_i weighted_i rho_{i,alpha}
}

/// Small-diffusion moneyness and diffusion-scale terms of the basket prior.
struct BasketDeltaTerms {
  double d_c = 0.0;          // dimensionless moneyness
  double sigma_tilde = 0.0;  // currency / sqrt(year)
  double tau = 0.0;          // time to maturity
};

/// Leading-order Z^AE for the basket call from the small-diffusion
/// expansion:
///   Z^{AE,alpha} = N(d_c) (1/d) sum_i e^{-y^i tau} sigma^i X^i_t rho_{i,alpha}
/// with
///   d_c = ((1/d) sum_i X^i_t e^{(r - y^i) tau} - K) / (sigma_tilde sqrt(tau))
///   sigma_tilde = (1/d) sqrt(sum_{i,j} sigma^i F^i (rho rho^T)_{ij} sigma^j F^j),
///   F^i = X^i_t e^{(r - y^i) tau}.
/// Undefined at tau = 0; the solver never requests the prior at maturity.
inline std::pair<MatrixXd, std::vector<BasketDeltaTerms>> z_ae_basket(
    const ModelSpec& model, const CorrelationRoot& root, double t,
    const MatrixXd& x_t) {
  if (t >= model.T) throw std::domain_error("z_ae_basket: t must be < T");
  if (x_t.cols() != model.d) throw std::invalid_argument("z_ae_basket: X has wrong width");
  if (model.strikes.size() != 1)
    throw std::invalid_argument("z_ae_basket: basket payoff needs strikes {K}");
  if ((x_t.array() <= 0.0).any())
    throw std::domain_error("z_ae_basket: X entries must be > 0");

  const double tau = model.T - t;
  const double strike = model.strikes[0];
  const int d = model.d;
  const auto n = x_t.rows();
  const double sqrt_tau = std::sqrt(tau);

  VectorXd fwd_growth(d), div_decay(d);
  for (int i = 0; i < d; ++i) {
    fwd_growth(i) = std::exp((model.r - model.y(i)) * tau);
    div_decay(i) = std::exp(-model.y(i) * tau);
  }

  MatrixXd fwd = x_t.array().rowwise() * fwd_growth.transpose().array();
  MatrixXd sig_fwd = fwd.array().rowwise() * model.sigma.transpose().array();
  // sigma_tilde = |rho^T (sigma .* F)| / d since rho rho^T is the correlation.
  MatrixXd mixed = sig_fwd * root.rho;

  MatrixXd weighted(n, d);  // (1/d) e^{-y tau} sigma X per asset
  for (int i = 0; i < d; ++i) {
    weighted.col(i) = (div_decay(i) * model.sigma(i) / d) * x_t.col(i);
  }

  std::vector<BasketDeltaTerms> terms(static_cast<size_t>(n));
  VectorXd n_dc(n);
  for (Eigen::Index p = 0; p < n; ++p) {
    BasketDeltaTerms& tp = terms[static_cast<size_t>(p)];
    tp.tau = tau;
    tp.sigma_tilde = mixed.row(p).norm() / d;
    tp.d_c = (fwd.row(p).mean() - strike) / (tp.sigma_tilde * sqrt_tau);
    n_dc(p) = norm_cdf(tp.d_c);
  }

  MatrixXd z = (weighted.array().colwise() * n_dc.array()).matrix() * root.rho;
  return {std::move(z), std::move(terms)};
}

}  // namespace deepbsde
