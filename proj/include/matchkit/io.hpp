#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "matchkit/diagnostics.hpp"
#include "matchkit/efficiency.hpp"
#include "matchkit/panel.hpp"
#include "matchkit/planner.hpp"
#include "matchkit/simulate.hpp"
#include "matchkit/surrogate.hpp"

namespace matchkit {

// Declared artifact formats. CSV columns are fixed; JSON uses stable keys.

void write_efficiency_csv(const EfficiencySeries& series, std::ostream& out);
EfficiencySeries read_efficiency_csv(std::istream& in);

void write_distribution_json(const EfficiencyDistribution& dist, std::ostream& out);
EfficiencyDistribution read_distribution_json(std::istream& in);

void write_coefficients_json(const SurrogateCoefficients& coeffs, std::ostream& out);
SurrogateCoefficients read_coefficients_json(std::istream& in);

void write_elasticity_csv(const std::vector<ElasticityPoint>& series, std::ostream& out);

void write_mismatch_csv(const std::vector<PlannerSolution>& series, std::ostream& out);
void write_allocations_csv(const std::vector<PlannerSolution>& series, std::ostream& out);

void write_scale_json(const ScaleRecord& scale, std::ostream& out);

void write_bias_report_json(const BiasReport& report, std::ostream& out);
void write_recovery_report_json(const RecoveryReport& report, std::ostream& out);
void write_independence_report_json(const IndependenceReport& report, std::ostream& out);

void write_summaries_csv(const MarketPanel& panel, const MarketSummaries& summaries,
                         std::ostream& out);
void write_residuals_csv(const MarketPanel& panel, const ResidualCheck& check, std::ostream& out);

/// Error payload the CLI prints on stderr for machine consumption.
std::string error_json(const std::string& category, const std::string& message);

}  // namespace matchkit
