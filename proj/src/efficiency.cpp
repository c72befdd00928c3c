#include "matchkit/efficiency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include "matchkit/error.hpp"
#include "matchkit/grid.hpp"
#include "matchkit/parallel.hpp"

namespace matchkit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_market_floor(const MarketPanel& panel, const KernelConfig& cfg) {
  std::map<int, Eigen::Index> counts;
  for (Eigen::Index i = 0; i < panel.size(); ++i) counts[panel.market_index[i]]++;
  for (const auto& [mkt, n] : counts)
    if (n < cfg.min_market_obs)
      throw validation_error("market '" + panel.markets[static_cast<std::size_t>(mkt)] +
                             "' has " + std::to_string(n) + " observations, floor is " +
                             std::to_string(cfg.min_market_obs));
}

// Columns live on the inner quantile range of U: the kernel estimate is
// unreliable at the support edges and recovery clamps to the end columns.
Eigen::ArrayXd build_u_grid(const MarketPanel& panel, const BasePoint& base, int size) {
  std::vector<double> u(panel.unemployed.data(), panel.unemployed.data() + panel.size());
  std::sort(u.begin(), u.end());
  const std::size_t n = u.size();
  const std::size_t cut = static_cast<std::size_t>(0.01 * static_cast<double>(n));
  double lo = u[cut];
  double hi = u[n - 1 - cut];
  lo = std::min(lo, base.u0);
  hi = std::max(hi, base.u0);
  if (!(hi / lo > 1.0 + 1e-12) || size == 1) {
    Eigen::ArrayXd g(1);
    g[0] = base.u0;
    return g;
  }
  Eigen::ArrayXd g = geometric_grid(lo, hi, size);
  snap_grid_point(g, base.u0);
  return g;
}

// Monotone rearrangement: sort the present values and place them back in
// a-order. Order-preserving wherever the column is already monotone.
void rearrange_column(Eigen::MatrixXd& f, Eigen::Index col) {
  std::vector<double> present;
  present.reserve(static_cast<std::size_t>(f.rows()));
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    if (!std::isnan(f(i, col))) present.push_back(f(i, col));
  std::sort(present.begin(), present.end());
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    if (!std::isnan(f(i, col))) f(i, col) = present[k++];
}

// Present (a, F) pairs of the column blend at u, linear between the two
// bracketing columns. A cell is present only when present in both.
void blended_column(const EfficiencyDistribution& dist, double u, Eigen::ArrayXd& a_out,
                    Eigen::ArrayXd& f_out) {
  const Eigen::Index nu = dist.u_grid.size();
  Eigen::Index j1 = 0;
  while (j1 + 1 < nu && dist.u_grid[j1 + 1] <= u) ++j1;
  Eigen::Index j2 = std::min(j1 + 1, nu - 1);
  double w = 0.0;
  if (j2 > j1 && dist.u_grid[j2] > dist.u_grid[j1])
    w = std::clamp((u - dist.u_grid[j1]) / (dist.u_grid[j2] - dist.u_grid[j1]), 0.0, 1.0);

  const Eigen::Index na = dist.a_grid.size();
  std::vector<double> as, fs;
  as.reserve(static_cast<std::size_t>(na));
  fs.reserve(static_cast<std::size_t>(na));
  for (Eigen::Index i = 0; i < na; ++i) {
    const double f1 = dist.f_values(i, j1);
    const double f2 = dist.f_values(i, j2);
    if (std::isnan(f1) || std::isnan(f2)) continue;
    as.push_back(dist.a_grid[i]);
    fs.push_back((1.0 - w) * f1 + w * f2);
  }
  a_out = Eigen::Map<const Eigen::ArrayXd>(as.data(), static_cast<Eigen::Index>(as.size()));
  f_out = Eigen::Map<const Eigen::ArrayXd>(fs.data(), static_cast<Eigen::Index>(fs.size()));
}

}  // namespace

Eigen::Index EfficiencyDistribution::missing_count() const {
  Eigen::Index n = 0;
  for (Eigen::Index j = 0; j < f_values.cols(); ++j)
    for (Eigen::Index i = 0; i < f_values.rows(); ++i)
      if (std::isnan(f_values(i, j))) ++n;
  return n;
}

const char* to_string(RecoveryFlag flag) {
  switch (flag) {
    case RecoveryFlag::clipped_low: return "low";
    case RecoveryFlag::clipped_high: return "high";
    default: return "ok";
  }
}

Eigen::ArrayXd EfficiencySeries::a_values() const {
  Eigen::ArrayXd out(static_cast<Eigen::Index>(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = entries[i].a;
  return out;
}

Eigen::Index EfficiencySeries::find(const std::string& market_id, std::int64_t period) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].period == period && entries[i].market_id == market_id)
      return static_cast<Eigen::Index>(i);
  return -1;
}

EfficiencyDistribution trace_efficiency_distribution(const MarketPanel& panel,
                                                     const BasePoint& base,
                                                     const KernelConfig& cfg) {
  cfg.validate();
  check_market_floor(panel, cfg);
  if (base.row < 0 || base.row >= panel.size() ||
      panel.find(base.market_id, base.period) != base.row)
    throw domain_error("trace_efficiency_distribution: base point is not in the panel");

  EfficiencyDistribution dist;
  dist.base = base;
  dist.a_grid = cfg.a_grid;
  dist.u_grid = build_u_grid(panel, base, cfg.u_grid_size);
  const Eigen::Index na = dist.a_grid.size();
  const Eigen::Index nu = dist.u_grid.size();
  dist.f_values.setConstant(na, nu, kNaN);

  const double ratio0 = 1.0 / (base.a0 * base.u0);
  std::vector<std::string> column_errors(static_cast<std::size_t>(nu));
  parallel_for(static_cast<std::size_t>(nu), cfg.threads, [&](std::size_t jz) {
    const Eigen::Index j = static_cast<Eigen::Index>(jz);
    const double u = dist.u_grid[j];
    Eigen::Index missing = 0;
    for (Eigen::Index i = 0; i < na; ++i) {
      const double c = dist.a_grid[i] * u * ratio0;
      try {
        dist.f_values(i, j) = conditional_cdf(panel, c * base.h0, u, c * base.v0, cfg);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric) throw;
        ++missing;  // cell recorded as missing
      }
    }
    if (static_cast<double>(missing) > cfg.max_missing_frac * static_cast<double>(na)) {
      std::ostringstream msg;
      msg << "u-column " << u << ": " << missing << "/" << na
          << " cells lack local support; narrow the a grid or widen the bandwidth";
      column_errors[jz] = msg.str();
      return;
    }
    rearrange_column(dist.f_values, j);
  });
  for (const std::string& err : column_errors)
    if (!err.empty()) throw numeric_error(err);
  return dist;
}

double distribution_cdf(const EfficiencyDistribution& dist, double a, double u) {
  Eigen::ArrayXd as, fs;
  blended_column(dist, u, as, fs);
  if (as.size() == 0) throw numeric_error("distribution_cdf: no traced cells at this u");
  return interp_monotone(as, fs, a);
}

double distribution_quantile(const EfficiencyDistribution& dist, double p, double u) {
  Eigen::ArrayXd as, fs;
  blended_column(dist, u, as, fs);
  if (as.size() == 0) throw numeric_error("distribution_quantile: no traced cells at this u");
  return invert_monotone(as, fs, p);
}

EfficiencySeries recover_efficiency(const MarketPanel& panel, const EfficiencyDistribution& dist,
                                    const KernelConfig& cfg) {
  cfg.validate();
  check_market_floor(panel, cfg);
  const Eigen::Index n = panel.size();
  EfficiencySeries series;
  series.entries.resize(static_cast<std::size_t>(n));

  parallel_for(static_cast<std::size_t>(n), cfg.threads, [&](std::size_t tz) {
    const Eigen::Index t = static_cast<Eigen::Index>(tz);
    EfficiencyEntry& e = series.entries[tz];
    e.market_id = panel.market_of(t);
    e.period = panel.period[tz];
    const double u = panel.unemployed[t];
    e.percentile = panel.hires[t] > 0.0
                       ? conditional_cdf(panel, panel.hires[t], u, panel.vacancies[t], cfg)
                       : 0.0;

    Eigen::ArrayXd as, fs;
    blended_column(dist, u, as, fs);
    if (as.size() == 0)
      throw numeric_error("recover_efficiency: no traced cells at u=" + std::to_string(u));
    if (e.percentile <= fs[0]) {
      e.a = as[0];
      e.flag = fs[0] > 0.0 ? RecoveryFlag::clipped_low : RecoveryFlag::ok;
    } else if (e.percentile >= fs[fs.size() - 1]) {
      e.a = as[as.size() - 1];
      e.flag = fs[fs.size() - 1] < 1.0 ? RecoveryFlag::clipped_high : RecoveryFlag::ok;
    } else {
      e.a = invert_monotone(as, fs, e.percentile);
      e.flag = RecoveryFlag::ok;
    }
  });

  // Renormalize so the base observation recovers exactly a0 = 1.
  const Eigen::Index base_idx = series.find(dist.base.market_id, dist.base.period);
  if (base_idx < 0)
    throw domain_error("recover_efficiency: panel does not contain the base point");
  const double a_base = series.entries[static_cast<std::size_t>(base_idx)].a;
  if (!(a_base > 0.0)) throw numeric_error("recover_efficiency: base efficiency not positive");
  for (EfficiencyEntry& e : series.entries) e.a /= a_base;
  return series;
}

double evaluate_matching_function(const MarketPanel& panel, const EfficiencyDistribution& dist,
                                  double a, double u, double v, const KernelConfig& cfg) {
  const double p = distribution_cdf(dist, a, u);
  return conditional_quantile(panel, p, u, v, cfg);
}

BaseSpec suggest_base(const MarketPanel& panel, const KernelConfig& cfg) {
  Eigen::Index best = -1, fallback = 0;
  double best_mass = -1.0, fallback_mass = -1.0;
  for (Eigen::Index t = 0; t < panel.size(); ++t) {
    if (!(panel.hires[t] > 0.0)) continue;
    Eigen::ArrayXd w =
        kernel_weights(panel, panel.unemployed[t], panel.vacancies[t], cfg.bandwidth);
    const double mass = w.sum();
    if (mass > fallback_mass) { fallback_mass = mass; fallback = t; }
    const double p = (w * (panel.hires < panel.hires[t]).cast<double>()).sum() / mass;
    if (p >= 0.25 && p <= 0.75 && mass > best_mass) { best_mass = mass; best = t; }
  }
  const Eigen::Index row = best >= 0 ? best : fallback;
  return BaseSpec::explicit_point(panel.market_of(row), panel.period[static_cast<std::size_t>(row)]);
}

}  // namespace matchkit
