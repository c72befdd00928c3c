#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "matchkit/kernel.hpp"
#include "matchkit/panel.hpp"

namespace matchkit {

/// F(a | u) traced on (a_grid x u_grid). Cells without local support are
/// NaN; every column is nondecreasing in a over its present cells after
/// monotone rearrangement.
struct EfficiencyDistribution {
  BasePoint base;
  Eigen::ArrayXd u_grid;
  Eigen::ArrayXd a_grid;
  Eigen::MatrixXd f_values;  // rows: a_grid, cols: u_grid; NaN = missing

  Eigen::Index missing_count() const;
};

enum class RecoveryFlag : std::uint8_t { ok = 0, clipped_low = 1, clipped_high = 2 };

const char* to_string(RecoveryFlag flag);

struct EfficiencyEntry {
  std::string market_id;
  std::int64_t period = 0;
  double a = 1.0;           // recovered efficiency, 1 at the base point
  double percentile = 0.0;  // G(H_t | U_t, V_t) used in the inversion
  RecoveryFlag flag = RecoveryFlag::ok;
};

struct EfficiencySeries {
  std::vector<EfficiencyEntry> entries;

  Eigen::ArrayXd a_values() const;
  Eigen::Index find(const std::string& market_id, std::int64_t period) const;
};

/// Trace F(a|u) over the grids with the CRS rescaling
///   F(a|u) = G(c h0 | u, c v0),  c = (a u) / (a0 u0),
/// then rearrange each u-column to be monotone. Fails when more than half of
/// a column lacks local support.
EfficiencyDistribution trace_efficiency_distribution(const MarketPanel& panel,
                                                     const BasePoint& base,
                                                     const KernelConfig& cfg);

/// Invert the traced distribution through each observation's conditional
/// percentile and renormalize so the base point recovers exactly 1.
EfficiencySeries recover_efficiency(const MarketPanel& panel, const EfficiencyDistribution& dist,
                                    const KernelConfig& cfg);

/// F(a|u) read off the traced distribution (linear in u between columns,
/// linear in a within a column, clamped at the traced range).
double distribution_cdf(const EfficiencyDistribution& dist, double a, double u);

/// Inverse of a -> F(a|u) at level p, with the same interpolation scheme.
double distribution_quantile(const EfficiencyDistribution& dist, double p, double u);

/// m(a u, v) recovered as G^{-1}(F(a|u) | u, v).
double evaluate_matching_function(const MarketPanel& panel, const EfficiencyDistribution& dist,
                                  double a, double u, double v, const KernelConfig& cfg);

/// Observation whose neighbourhood is densest among those with a central
/// conditional percentile; a well-conditioned normalization point. Falls
/// back to the globally densest observation.
BaseSpec suggest_base(const MarketPanel& panel, const KernelConfig& cfg);

}  // namespace matchkit
