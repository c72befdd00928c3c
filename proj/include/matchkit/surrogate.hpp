#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "matchkit/efficiency.hpp"
#include "matchkit/panel.hpp"

namespace matchkit {

/// Quadratic surrogate m(x, v) = b1 x + b2 x v + b3 v + b4 x^2 + b5 v^2 with
/// x = A U, fit by L1-penalized least squares without an intercept.
struct SurrogateCoefficients {
  double b1 = 0.0, b2 = 0.0, b3 = 0.0, b4 = 0.0, b5 = 0.0;
  double lambda = 0.0;     // penalty the fit was solved at (standardized scale)
  double r_squared = 0.0;  // in-sample, against a zero baseline
  int nonzero = 0;

  double value(double x, double v) const {
    return b1 * x + b2 * x * v + b3 * v + b4 * x * x + b5 * v * v;
  }
  /// d m / d x at (x, v).
  double dm_dx(double x, double v) const { return b1 + b2 * v + 2.0 * b4 * x; }
  /// d m / d v at (x, v).
  double dm_dv(double x, double v) const { return b2 * x + b3 + 2.0 * b5 * v; }
};

struct ElasticityPoint {
  std::string market_id;
  std::int64_t period = 0;
  double eta_u = 0.0;
  double eta_v = 0.0;
};

/// Evaluation point for the elasticity formulas.
struct MatchingPoint {
  double a = 1.0;
  double u = 1.0;
  double v = 1.0;
  double h = 1.0;
};

struct FitOptions {
  int cv_folds = 5;
  int cv_grid = 50;          // lambda path length for cross-validation
  std::uint64_t cv_seed = 2024;
  double tol = 1e-8;         // KKT tolerance on the standardized problem
  int max_sweeps = 200000;
  /// Chain-rule scaling AU/H for eta_U; the alternative U/H variant exists
  /// only to replicate the other convention.
  bool eta_u_times_u_over_h = false;
};

/// Fit the surrogate at a fixed lambda (standardized regressors, coefficients
/// reported on the original scale).
SurrogateCoefficients fit_surrogate(const MarketPanel& panel, const EfficiencySeries& efficiency,
                                    double lambda, const FitOptions& opts = {});

/// Fit with lambda chosen by k-fold cross-validation over a log-spaced path.
SurrogateCoefficients fit_surrogate_cv(const MarketPanel& panel,
                                       const EfficiencySeries& efficiency,
                                       const FitOptions& opts = {});

double elasticity_u(const SurrogateCoefficients& coeffs, const MatchingPoint& p,
                    const FitOptions& opts = {});
double elasticity_v(const SurrogateCoefficients& coeffs, const MatchingPoint& p);

/// d m / d u at (a, u, v); the planner's marginal value of one more
/// unemployed worker in a market.
double marginal_hires_du(const SurrogateCoefficients& coeffs, double a, double u, double v);

std::vector<ElasticityPoint> elasticity_series(const MarketPanel& panel,
                                               const EfficiencySeries& efficiency,
                                               const SurrogateCoefficients& coeffs,
                                               const FitOptions& opts = {});

/// KKT residual of the L1 problem at beta (standardized scale); exposed for
/// verification.
double lasso_kkt_residual(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& beta, double lambda);

/// Cyclic coordinate descent for 0.5 ||y - X b||^2 + lambda ||b||_1.
Eigen::VectorXd lasso_coordinate_descent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                         double lambda, double tol, int max_sweeps);

}  // namespace matchkit
