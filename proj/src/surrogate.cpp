#include "matchkit/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "matchkit/error.hpp"

namespace matchkit {

namespace {

constexpr int kTerms = 5;
const char* kColumnNames[kTerms] = {"AU", "AU*V", "V", "(AU)^2", "V^2"};

// Design matrix of the five surrogate terms, efficiency matched to rows.
Eigen::MatrixXd build_design(const MarketPanel& panel, const EfficiencySeries& efficiency,
                             Eigen::VectorXd& y) {
  const Eigen::Index n = panel.size();
  Eigen::MatrixXd x(n, kTerms);
  y.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::Index e = efficiency.find(panel.market_of(t), panel.period[static_cast<std::size_t>(t)]);
    if (e < 0)
      throw validation_error("fit_surrogate: efficiency series does not cover (" +
                             panel.market_of(t) + ", " +
                             std::to_string(panel.period[static_cast<std::size_t>(t)]) + ")");
    const double au = efficiency.entries[static_cast<std::size_t>(e)].a * panel.unemployed[t];
    const double v = panel.vacancies[t];
    x(t, 0) = au;
    x(t, 1) = au * v;
    x(t, 2) = v;
    x(t, 3) = au * au;
    x(t, 4) = v * v;
    y[t] = panel.hires[t];
  }
  return x;
}

// Column scales (root mean square); zero-variation columns are degenerate.
// No centering: the surrogate has no intercept by construction.
Eigen::VectorXd standardize(Eigen::MatrixXd& x) {
  Eigen::VectorXd scales(kTerms);
  for (int j = 0; j < kTerms; ++j) {
    const double rms = std::sqrt(x.col(j).squaredNorm() / static_cast<double>(x.rows()));
    const double mean = x.col(j).mean();
    const double var = x.col(j).squaredNorm() / static_cast<double>(x.rows()) - mean * mean;
    if (!(rms > 0.0) || var < 1e-14 * rms * rms)
      throw numeric_error(std::string("fit_surrogate: degenerate design, column '") +
                          kColumnNames[j] + "' has no variation");
    scales[j] = rms;
    x.col(j) /= rms;
  }
  return scales;
}

double soft_threshold(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

SurrogateCoefficients pack(const Eigen::VectorXd& beta_std, const Eigen::VectorXd& scales,
                           const Eigen::MatrixXd& x_std, const Eigen::VectorXd& y,
                           double lambda) {
  SurrogateCoefficients c;
  Eigen::VectorXd beta = beta_std.cwiseQuotient(scales);
  c.b1 = beta[0];
  c.b2 = beta[1];
  c.b3 = beta[2];
  c.b4 = beta[3];
  c.b5 = beta[4];
  c.lambda = lambda;
  const double rss = (y - x_std * beta_std).squaredNorm();
  const double tss = y.squaredNorm();
  c.r_squared = tss > 0.0 ? 1.0 - rss / tss : 0.0;
  c.nonzero = static_cast<int>((beta_std.array().abs() > 0.0).count());
  return c;
}

}  // namespace

Eigen::VectorXd lasso_coordinate_descent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                         double lambda, double tol, int max_sweeps) {
  const int p = static_cast<int>(x.cols());
  // Covariance-form updates: the whole path runs on the p x p Gram matrix.
  const Eigen::MatrixXd gram = x.transpose() * x;
  const Eigen::VectorXd xty = x.transpose() * y;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd grad = xty;  // X^T (y - X beta)

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (int j = 0; j < p; ++j) {
      const double gjj = gram(j, j);
      if (!(gjj > 0.0)) continue;
      const double z = grad[j] + gjj * beta[j];
      const double bj = soft_threshold(z, lambda) / gjj;
      const double delta = bj - beta[j];
      if (delta != 0.0) {
        grad -= gram.col(j) * delta;
        beta[j] = bj;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    // KKT stationarity on the standardized problem.
    bool ok = true;
    for (int j = 0; j < p && ok; ++j) {
      if (beta[j] == 0.0)
        ok = std::abs(grad[j]) <= lambda + tol;
      else
        ok = std::abs(grad[j] - lambda * (beta[j] > 0.0 ? 1.0 : -1.0)) <= tol;
    }
    if (ok && max_delta <= tol) return beta;
  }
  return beta;
}

double lasso_kkt_residual(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& beta, double lambda) {
  const Eigen::VectorXd grad = x.transpose() * (y - x * beta);
  double res = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (beta[j] == 0.0)
      res = std::max(res, std::max(0.0, std::abs(grad[j]) - lambda));
    else
      res = std::max(res, std::abs(grad[j] - lambda * (beta[j] > 0.0 ? 1.0 : -1.0)));
  }
  return res;
}

SurrogateCoefficients fit_surrogate(const MarketPanel& panel, const EfficiencySeries& efficiency,
                                    double lambda, const FitOptions& opts) {
  if (!(lambda >= 0.0)) throw domain_error("fit_surrogate: lambda must be nonnegative");
  Eigen::VectorXd y;
  Eigen::MatrixXd x = build_design(panel, efficiency, y);
  const Eigen::VectorXd scales = standardize(x);
  const Eigen::VectorXd beta = lasso_coordinate_descent(x, y, lambda, opts.tol, opts.max_sweeps);
  return pack(beta, scales, x, y, lambda);
}

SurrogateCoefficients fit_surrogate_cv(const MarketPanel& panel,
                                       const EfficiencySeries& efficiency,
                                       const FitOptions& opts) {
  Eigen::VectorXd y;
  Eigen::MatrixXd x = build_design(panel, efficiency, y);
  const Eigen::VectorXd scales = standardize(x);
  const Eigen::Index n = x.rows();
  const int folds = std::max(2, std::min<int>(opts.cv_folds, static_cast<int>(n)));

  // lambda path: log-spaced down from the smallest lambda with all-zero fit
  const double lambda_max = (x.transpose() * y).cwiseAbs().maxCoeff();
  std::vector<double> path(static_cast<std::size_t>(opts.cv_grid));
  for (int k = 0; k < opts.cv_grid; ++k)
    path[static_cast<std::size_t>(k)] =
        lambda_max * std::pow(10.0, -4.0 * k / (opts.cv_grid - 1));

  // Seeded shuffle fixes the fold assignment.
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    fold_of[static_cast<std::size_t>(i)] = static_cast<int>(i % folds);
  std::mt19937_64 gen(opts.cv_seed);
  std::shuffle(fold_of.begin(), fold_of.end(), gen);

  std::vector<double> cv_err(static_cast<std::size_t>(opts.cv_grid), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < n; ++i)
      (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
    Eigen::MatrixXd xtr(static_cast<Eigen::Index>(train.size()), kTerms);
    Eigen::VectorXd ytr(static_cast<Eigen::Index>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) {
      xtr.row(static_cast<Eigen::Index>(i)) = x.row(train[i]);
      ytr[static_cast<Eigen::Index>(i)] = y[train[i]];
    }
    for (int k = 0; k < opts.cv_grid; ++k) {
      const Eigen::VectorXd beta = lasso_coordinate_descent(
          xtr, ytr, path[static_cast<std::size_t>(k)] * static_cast<double>(train.size()) /
                        static_cast<double>(n),
          opts.tol, opts.max_sweeps);
      double err = 0.0;
      for (Eigen::Index i : test) {
        const double r = y[i] - x.row(i).dot(beta);
        err += r * r;
      }
      cv_err[static_cast<std::size_t>(k)] += err;
    }
  }
  const int best = static_cast<int>(
      std::min_element(cv_err.begin(), cv_err.end()) - cv_err.begin());
  const double lambda = path[static_cast<std::size_t>(best)];
  const Eigen::VectorXd beta = lasso_coordinate_descent(x, y, lambda, opts.tol, opts.max_sweeps);
  return pack(beta, scales, x, y, lambda);
}

double elasticity_u(const SurrogateCoefficients& coeffs, const MatchingPoint& p,
                    const FitOptions& opts) {
  if (!(p.h > 0.0)) throw domain_error("elasticity_u: H must be positive");
  const double x = p.a * p.u;
  const double scale = opts.eta_u_times_u_over_h ? p.u / p.h : x / p.h;
  return coeffs.dm_dx(x, p.v) * scale;
}

double elasticity_v(const SurrogateCoefficients& coeffs, const MatchingPoint& p) {
  if (!(p.h > 0.0)) throw domain_error("elasticity_v: H must be positive");
  return coeffs.dm_dv(p.a * p.u, p.v) * p.v / p.h;
}

double marginal_hires_du(const SurrogateCoefficients& coeffs, double a, double u, double v) {
  return a * (coeffs.b1 + coeffs.b2 * v + 2.0 * coeffs.b4 * a * u);
}

std::vector<ElasticityPoint> elasticity_series(const MarketPanel& panel,
                                               const EfficiencySeries& efficiency,
                                               const SurrogateCoefficients& coeffs,
                                               const FitOptions& opts) {
  std::vector<ElasticityPoint> out;
  out.reserve(static_cast<std::size_t>(panel.size()));
  for (Eigen::Index t = 0; t < panel.size(); ++t) {
    if (!(panel.hires[t] > 0.0)) continue;  // elasticities undefined at H = 0
    const Eigen::Index e =
        efficiency.find(panel.market_of(t), panel.period[static_cast<std::size_t>(t)]);
    if (e < 0) continue;
    MatchingPoint pt{efficiency.entries[static_cast<std::size_t>(e)].a, panel.unemployed[t],
                     panel.vacancies[t], panel.hires[t]};
    ElasticityPoint ep;
    ep.market_id = panel.market_of(t);
    ep.period = panel.period[static_cast<std::size_t>(t)];
    ep.eta_u = elasticity_u(coeffs, pt, opts);
    ep.eta_v = elasticity_v(coeffs, pt);
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace matchkit
