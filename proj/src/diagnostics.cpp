#include "matchkit/diagnostics.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "matchkit/error.hpp"

namespace matchkit {

Eigen::VectorXd ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return x.colPivHouseholderQr().solve(y);
}

double pearson_correlation(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  const double ma = a.mean();
  const double mb = b.mean();
  const Eigen::ArrayXd da = a - ma;
  const Eigen::ArrayXd db = b - mb;
  const double denom = std::sqrt(da.square().sum() * db.square().sum());
  if (!(denom > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return (da * db).sum() / denom;
}

ResidualCheck residual_independence_check(const MarketPanel& panel,
                                          const EfficiencySeries& efficiency,
                                          bool include_intercept) {
  const Eigen::Index n = panel.size();
  Eigen::ArrayXd a_series(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::Index e =
        efficiency.find(panel.market_of(t), panel.period[static_cast<std::size_t>(t)]);
    if (e < 0)
      throw validation_error("residual_independence_check: efficiency does not cover (" +
                             panel.market_of(t) + ", " +
                             std::to_string(panel.period[static_cast<std::size_t>(t)]) + ")");
    a_series[t] = efficiency.entries[static_cast<std::size_t>(e)].a;
  }

  const double u_var =
      (panel.unemployed - panel.unemployed.mean()).square().sum() / static_cast<double>(n);
  if (!(u_var > 0.0))
    throw numeric_error("residual_independence_check: U is constant, regression degenerate");

  const int k = include_intercept ? 2 : 1;
  Eigen::MatrixXd x(n, k);
  if (include_intercept) x.col(0).setOnes();
  x.col(k - 1) = panel.unemployed.matrix();

  ResidualCheck out;
  const Eigen::VectorXd beta_v = ols_fit(x, panel.vacancies.matrix());
  const Eigen::VectorXd beta_a = ols_fit(x, a_series.matrix());
  out.residual_v = (panel.vacancies.matrix() - x * beta_v).array();
  out.residual_a = (a_series.matrix() - x * beta_a).array();

  // A residual series that is zero up to rounding has no defined correlation
  // (e.g. efficiency exactly affine in U).
  const double ss_v = out.residual_v.square().sum();
  const double ss_a = out.residual_a.square().sum();
  const double floor_v = 1e-24 * panel.vacancies.square().sum();
  const double floor_a = 1e-24 * a_series.square().sum();
  if (ss_v <= floor_v || ss_a <= floor_a) {
    out.correlation = std::numeric_limits<double>::quiet_NaN();
    out.degenerate = true;
    return out;
  }
  out.correlation = pearson_correlation(out.residual_v, out.residual_a);
  out.degenerate = !std::isfinite(out.correlation);
  return out;
}

MarketSummaries market_summaries(const MarketPanel& panel) {
  MarketSummaries s;
  s.tightness = panel.vacancies / panel.unemployed;
  s.job_finding = panel.hires / panel.unemployed;
  s.worker_finding = panel.hires / panel.vacancies;
  return s;
}

}  // namespace matchkit
