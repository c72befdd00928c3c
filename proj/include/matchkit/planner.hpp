#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "matchkit/efficiency.hpp"
#include "matchkit/panel.hpp"
#include "matchkit/surrogate.hpp"

namespace matchkit {

/// One market's state at a fixed period, as seen by the planner.
struct MarketStateAtT {
  std::string market_id;
  double a = 1.0;      // matching efficiency
  double u_obs = 0.0;  // observed unemployed
  double v = 1.0;      // vacancies
};

enum class PlannerStatus : std::uint8_t {
  ok = 0,                  // strictly concave, water-filling solution
  nonconcave_fallback = 1, // b4 >= 0, multi-start projected gradient
  clipped = 2,             // concave but the common marginal is negative
};

const char* to_string(PlannerStatus status);

struct PlannerSolution {
  std::int64_t period = 0;
  std::vector<std::string> market_ids;
  Eigen::ArrayXd allocation;   // U*_l, sums to the observed total
  double multiplier = 0.0;     // common marginal value at the optimum
  double h_star = 0.0;         // sum of m at the planner allocation
  double h_obs = 0.0;          // sum of m at the observed allocation
  double index = 0.0;          // 1 - h_obs / h_star
  double kkt_residual = 0.0;   // max interior deviation from the multiplier
  PlannerStatus status = PlannerStatus::ok;
  bool skipped = false;        // period missing a market, not solved
};

struct KktReport {
  double max_interior_deviation = 0.0;
  double max_corner_violation = 0.0;  // amount corner marginals exceed the multiplier
  double feasibility_gap = 0.0;       // |sum u - total| / total
  int interior_markets = 0;
  int corner_markets = 0;
};

/// Maximize sum_l m(A_l u_l, V_l) over u >= 0 with sum_l u_l fixed at the
/// observed total. Strictly concave surrogates (b4 < 0) are solved by
/// water-filling with the multiplier found by bisection; b4 >= 0 falls back
/// to seeded multi-start projected gradient ascent on the simplex.
PlannerSolution planner_allocate(const std::vector<MarketStateAtT>& states,
                                 const SurrogateCoefficients& coeffs);

/// Per-period planner solutions over the panel. Periods missing any market
/// are returned with skipped = true.
std::vector<PlannerSolution> mismatch_series(const MarketPanel& panel,
                                             const EfficiencySeries& efficiency,
                                             const SurrogateCoefficients& coeffs);

/// Cobb-Douglas benchmark index for m = A u^sigma v^(1-sigma), with the
/// closed-form planner allocation u*_l proportional to A_l^(1/(1-sigma)) V_l.
/// heterogeneous_a = false sets every A_l to 1 (the classic specification).
double cd_mismatch_index(const std::vector<MarketStateAtT>& states, double sigma,
                         bool heterogeneous_a);

KktReport kkt_report(const PlannerSolution& solution, const std::vector<MarketStateAtT>& states,
                     const SurrogateCoefficients& coeffs);

}  // namespace matchkit
