#pragma once

#include <Eigen/Core>

#include "matchkit/efficiency.hpp"
#include "matchkit/panel.hpp"

namespace matchkit {

/// Residual check of the A-independent-of-V-given-U assumption: correlation
/// between the residuals of V on U and of A on U.
struct ResidualCheck {
  double correlation = 0.0;  // NaN when a residual series is degenerate
  Eigen::ArrayXd residual_v;
  Eigen::ArrayXd residual_a;
  bool degenerate = false;
};

ResidualCheck residual_independence_check(const MarketPanel& panel,
                                          const EfficiencySeries& efficiency,
                                          bool include_intercept = true);

/// Tightness and finding-rate series, row-aligned with the panel.
struct MarketSummaries {
  Eigen::ArrayXd tightness;       // V / U
  Eigen::ArrayXd job_finding;     // H / U
  Eigen::ArrayXd worker_finding;  // H / V
};

MarketSummaries market_summaries(const MarketPanel& panel);

/// Least squares of y on X (columns are regressors; callers add their own
/// intercept column).
Eigen::VectorXd ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

double pearson_correlation(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b);

}  // namespace matchkit
