#include "matchkit/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "matchkit/error.hpp"
#include "matchkit/grid.hpp"

namespace matchkit {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

KernelConfig::KernelConfig() : a_grid(geometric_grid(1.0 / 16.0, 16.0, 201)) {}

void KernelConfig::validate() const {
  if (!(bandwidth > 0.0)) throw domain_error("KernelConfig: bandwidth must be positive");
  if (cdf_grid_size < 2) throw domain_error("KernelConfig: cdf_grid_size must be >= 2");
  if (u_grid_size < 1) throw domain_error("KernelConfig: u_grid_size must be >= 1");
  if (a_grid.size() < 2) throw domain_error("KernelConfig: a_grid needs >= 2 points");
  for (Eigen::Index i = 0; i + 1 < a_grid.size(); ++i)
    if (!(a_grid[i] > 0.0) || !(a_grid[i] < a_grid[i + 1]))
      throw domain_error("KernelConfig: a_grid must be positive and strictly increasing");
}

Eigen::ArrayXd kernel_weights(const MarketPanel& panel, double u, double v, double bandwidth) {
  const double inv_bw = 1.0 / bandwidth;
  const double norm = 1.0 / (kTwoPi * bandwidth * bandwidth);
  Eigen::ArrayXd du = (panel.unemployed - u) * inv_bw;
  Eigen::ArrayXd dv = (panel.vacancies - v) * inv_bw;
  return norm * (-0.5 * (du.square() + dv.square())).exp();
}

double conditional_cdf(const MarketPanel& panel, double h, double u, double v,
                       const KernelConfig& cfg) {
  if (!(u > 0.0) || !(v > 0.0)) throw domain_error("conditional_cdf: u, v must be positive");
  Eigen::ArrayXd w = kernel_weights(panel, u, v, cfg.bandwidth);
  const double mass = w.sum();
  if (!(mass >= cfg.mass_floor)) {
    std::ostringstream msg;
    msg << "no local support at (u=" << u << ", v=" << v << "): kernel mass " << mass;
    throw numeric_error(msg.str());
  }
  // exact at the extremes: the indicator is identically 0 or 1 there
  if (h <= panel.hires.minCoeff()) return 0.0;
  if (h > panel.hires.maxCoeff()) return 1.0;
  const double below = (w * (panel.hires < h).cast<double>()).sum();
  return std::clamp(below / mass, 0.0, 1.0);
}

double conditional_quantile(const MarketPanel& panel, double p, double u, double v,
                            const KernelConfig& cfg) {
  if (!(p >= 0.0 && p <= 1.0)) throw domain_error("conditional_quantile: p must be in [0,1]");
  const double h_lo = panel.hires.minCoeff();
  const double h_hi = panel.hires.maxCoeff();
  if (!(h_hi > h_lo)) return h_lo;  // degenerate H column

  Eigen::ArrayXd w = kernel_weights(panel, u, v, cfg.bandwidth);
  const double mass = w.sum();
  if (!(mass >= cfg.mass_floor)) {
    std::ostringstream msg;
    msg << "no local support at (u=" << u << ", v=" << v << "): kernel mass " << mass;
    throw numeric_error(msg.str());
  }

  // Weighted empirical CDF evaluated on the h grid via one pass over
  // H-sorted observations.
  const Eigen::Index n = panel.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return panel.hires[a] < panel.hires[b]; });

  Eigen::ArrayXd grid = linear_grid(h_lo, h_hi, cfg.cdf_grid_size);
  Eigen::ArrayXd gvals(cfg.cdf_grid_size);
  double cum = 0.0;
  std::size_t k = 0;
  for (int i = 0; i < cfg.cdf_grid_size; ++i) {
    const double h = grid[i];
    while (k < order.size() && panel.hires[order[k]] < h) cum += w[order[k++]];
    gvals[i] = cum / mass;
  }
  return invert_monotone(grid, gvals, p);
}

}  // namespace matchkit
