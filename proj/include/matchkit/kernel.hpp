#pragma once

#include <Eigen/Core>

#include "matchkit/panel.hpp"

namespace matchkit {

/// Settings for the kernel conditional-CDF estimator. The bandwidth is in
/// mean-one units, so estimation entry points expect a mean_one scaled panel.
struct KernelConfig {
  double bandwidth = 0.01;
  int cdf_grid_size = 512;
  Eigen::ArrayXd a_grid;        // candidate efficiency multipliers, relative to a0
  int u_grid_size = 41;
  int min_market_obs = 30;      // floor for estimation entry points
  double mass_floor = 1e-12;    // below this total kernel mass: no local support
  double max_missing_frac = 0.5;
  int threads = 1;

  KernelConfig();
  void validate() const;
};

/// Product-normal kernel weights kappa(U_t, V_t; u, v) for every observation.
Eigen::ArrayXd kernel_weights(const MarketPanel& panel, double u, double v, double bandwidth);

/// G_{H|U,V}(h | u, v): kernel-weighted share of observations with H_t < h.
/// Throws a numeric error when the total kernel mass at (u, v) is below the
/// mass floor.
double conditional_cdf(const MarketPanel& panel, double h, double u, double v,
                       const KernelConfig& cfg);

/// Smallest h on the cdf grid with G(h|u,v) >= p, linearly interpolated on
/// the crossing segment. p <= 0 maps to the grid minimum, p >= max attained
/// mass to the grid maximum.
double conditional_quantile(const MarketPanel& panel, double p, double u, double v,
                            const KernelConfig& cfg);

}  // namespace matchkit
