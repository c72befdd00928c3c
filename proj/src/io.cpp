#include "matchkit/io.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "matchkit/error.hpp"

namespace matchkit {

using nlohmann::json;

namespace {

json array_from(const Eigen::ArrayXd& a) {
  json out = json::array();
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]))
      out.push_back(nullptr);
    else
      out.push_back(a[i]);
  }
  return out;
}

Eigen::ArrayXd array_to(const json& j) {
  Eigen::ArrayXd out(static_cast<Eigen::Index>(j.size()));
  Eigen::Index i = 0;
  for (const auto& v : j)
    out[i++] = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  return out;
}

}  // namespace

void write_efficiency_csv(const EfficiencySeries& series, std::ostream& out) {
  out << "market_id,period,A,percentile,flag\n";
  out << std::setprecision(17);
  for (const EfficiencyEntry& e : series.entries)
    out << e.market_id << ',' << e.period << ',' << e.a << ',' << e.percentile << ','
        << to_string(e.flag) << '\n';
}

EfficiencySeries read_efficiency_csv(std::istream& in) {
  EfficiencySeries s;
  std::string line;
  if (!std::getline(in, line)) throw schema_error("empty efficiency CSV");
  if (line.rfind("market_id,period,A,percentile,flag", 0) != 0)
    throw schema_error("efficiency CSV: unexpected header '" + line + "'");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    std::string market, period, a, p, flag;
    if (!std::getline(row, market, ',') || !std::getline(row, period, ',') ||
        !std::getline(row, a, ',') || !std::getline(row, p, ',') || !std::getline(row, flag))
      throw schema_error("efficiency CSV line " + std::to_string(line_no) + ": bad row");
    EfficiencyEntry e;
    e.market_id = market;
    try {
      e.period = std::stoll(period);
      e.a = std::stod(a);
      e.percentile = std::stod(p);
    } catch (const std::exception&) {
      throw schema_error("efficiency CSV line " + std::to_string(line_no) + ": bad number");
    }
    if (!flag.empty() && flag.back() == '\r') flag.pop_back();
    e.flag = flag == "low"    ? RecoveryFlag::clipped_low
             : flag == "high" ? RecoveryFlag::clipped_high
                              : RecoveryFlag::ok;
    s.entries.push_back(std::move(e));
  }
  return s;
}

void write_distribution_json(const EfficiencyDistribution& dist, std::ostream& out) {
  json f_rows = json::array();
  for (Eigen::Index i = 0; i < dist.f_values.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < dist.f_values.cols(); ++j) {
      const double v = dist.f_values(i, j);
      if (std::isnan(v))
        row.push_back(nullptr);
      else
        row.push_back(v);
    }
    f_rows.push_back(std::move(row));
  }
  json doc = {
      {"base",
       {{"market_id", dist.base.market_id},
        {"period", dist.base.period},
        {"H0", dist.base.h0},
        {"U0", dist.base.u0},
        {"V0", dist.base.v0},
        {"A0", dist.base.a0}}},
      {"u_grid", array_from(dist.u_grid)},
      {"a_grid", array_from(dist.a_grid)},
      {"F", std::move(f_rows)},  // row-major over (a_grid x u_grid)
  };
  out << doc.dump(2) << '\n';
}

EfficiencyDistribution read_distribution_json(std::istream& in) {
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw schema_error(std::string("distribution JSON: ") + e.what());
  }
  EfficiencyDistribution d;
  d.base.market_id = doc.at("base").at("market_id").get<std::string>();
  d.base.period = doc.at("base").at("period").get<std::int64_t>();
  d.base.h0 = doc.at("base").at("H0").get<double>();
  d.base.u0 = doc.at("base").at("U0").get<double>();
  d.base.v0 = doc.at("base").at("V0").get<double>();
  d.base.a0 = doc.at("base").at("A0").get<double>();
  d.u_grid = array_to(doc.at("u_grid"));
  d.a_grid = array_to(doc.at("a_grid"));
  d.f_values.resize(d.a_grid.size(), d.u_grid.size());
  const json& f = doc.at("F");
  if (static_cast<Eigen::Index>(f.size()) != d.a_grid.size())
    throw schema_error("distribution JSON: F row count mismatch");
  for (Eigen::Index i = 0; i < d.a_grid.size(); ++i) {
    const json& row = f[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != d.u_grid.size())
      throw schema_error("distribution JSON: F column count mismatch");
    for (Eigen::Index j = 0; j < d.u_grid.size(); ++j)
      d.f_values(i, j) = row[static_cast<std::size_t>(j)].is_null()
                             ? std::numeric_limits<double>::quiet_NaN()
                             : row[static_cast<std::size_t>(j)].get<double>();
  }
  return d;
}

void write_coefficients_json(const SurrogateCoefficients& coeffs, std::ostream& out) {
  json doc = {
      {"beta1", coeffs.b1},       {"beta2", coeffs.b2},
      {"beta3", coeffs.b3},       {"beta4", coeffs.b4},
      {"beta5", coeffs.b5},       {"lambda", coeffs.lambda},
      {"r_squared", coeffs.r_squared}, {"nonzero", coeffs.nonzero},
  };
  out << doc.dump(2) << '\n';
}

SurrogateCoefficients read_coefficients_json(std::istream& in) {
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw schema_error(std::string("coefficients JSON: ") + e.what());
  }
  SurrogateCoefficients c;
  c.b1 = doc.at("beta1").get<double>();
  c.b2 = doc.at("beta2").get<double>();
  c.b3 = doc.at("beta3").get<double>();
  c.b4 = doc.at("beta4").get<double>();
  c.b5 = doc.at("beta5").get<double>();
  c.lambda = doc.value("lambda", 0.0);
  c.r_squared = doc.value("r_squared", 0.0);
  c.nonzero = doc.value("nonzero", 0);
  return c;
}

void write_elasticity_csv(const std::vector<ElasticityPoint>& series, std::ostream& out) {
  out << "market_id,period,eta_U,eta_V\n";
  out << std::setprecision(17);
  for (const ElasticityPoint& p : series)
    out << p.market_id << ',' << p.period << ',' << p.eta_u << ',' << p.eta_v << '\n';
}

void write_mismatch_csv(const std::vector<PlannerSolution>& series, std::ostream& out) {
  out << "period,index,H_obs,H_star,status,kkt_residual\n";
  out << std::setprecision(17);
  for (const PlannerSolution& s : series) {
    if (s.skipped) {
      out << s.period << ",,,,skipped,\n";
      continue;
    }
    out << s.period << ',' << s.index << ',' << s.h_obs << ',' << s.h_star << ','
        << to_string(s.status) << ',' << s.kkt_residual << '\n';
  }
}

void write_allocations_csv(const std::vector<PlannerSolution>& series, std::ostream& out) {
  out << "period,market_id,u_star\n";
  out << std::setprecision(17);
  for (const PlannerSolution& s : series) {
    if (s.skipped) continue;
    for (std::size_t l = 0; l < s.market_ids.size(); ++l)
      out << s.period << ',' << s.market_ids[l] << ','
          << s.allocation[static_cast<Eigen::Index>(l)] << '\n';
  }
}

void write_scale_json(const ScaleRecord& scale, std::ostream& out) {
  json doc = {{"scale",
               {{"H", scale.hires}, {"U", scale.unemployed}, {"V", scale.vacancies}}}};
  out << doc.dump(2) << '\n';
}

void write_bias_report_json(const BiasReport& report, std::ostream& out) {
  json rows = json::array();
  for (const BiasRow& r : report.rows) {
    rows.push_back({{"replication", r.replication},
                    {"index_np", r.index_np},
                    {"index_cd", r.index_cd},
                    {"index_true", r.index_true},
                    {"cd_sigma_u", r.cd_sigma_u},
                    {"cd_sigma_v", r.cd_sigma_v},
                    {"cd_valid", r.cd_valid}});
  }
  json doc = {{"rows", std::move(rows)},
              {"summary",
               {{"mean_np_bias", report.mean_np_bias},
                {"mean_cd_bias", report.mean_cd_bias},
                {"np_bias_q10_q50_q90",
                 {report.np_bias_quantiles[0], report.np_bias_quantiles[1],
                  report.np_bias_quantiles[2]}},
                {"cd_bias_q10_q50_q90",
                 {report.cd_bias_quantiles[0], report.cd_bias_quantiles[1],
                  report.cd_bias_quantiles[2]}},
                {"sign_test_p", report.sign_test_p},
                {"frac_cd_vacancy_above_true", report.frac_cd_vacancy_above_true},
                {"true_sigma_u", report.true_sigma_u}}}};
  out << doc.dump(2) << '\n';
}

void write_recovery_report_json(const RecoveryReport& report, std::ostream& out) {
  json doc = {{"corr_log_a", report.corr_log_a},
              {"log_rmse", report.log_rmse},
              {"clipped_fraction", report.clipped_fraction},
              {"median_eta_u", report.median_eta_u},
              {"median_eta_v", report.median_eta_v},
              {"median_eta_sum", report.median_eta_sum},
              {"lambda", report.lambda},
              {"runtime_seconds", report.runtime_seconds},
              {"base_market", report.base_market},
              {"base_period", report.base_period},
              {"T", report.t_periods}};
  out << doc.dump(2) << '\n';
}

void write_independence_report_json(const IndependenceReport& report, std::ostream& out) {
  json doc = {{"corr_estimated", report.corr_estimated},
              {"corr_true", report.corr_true},
              {"T", report.t_periods}};
  out << doc.dump(2) << '\n';
}

void write_summaries_csv(const MarketPanel& panel, const MarketSummaries& summaries,
                         std::ostream& out) {
  out << "market_id,period,tightness,job_finding,worker_finding\n";
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < panel.size(); ++i)
    out << panel.market_of(i) << ',' << panel.period[static_cast<std::size_t>(i)] << ','
        << summaries.tightness[i] << ',' << summaries.job_finding[i] << ','
        << summaries.worker_finding[i] << '\n';
}

void write_residuals_csv(const MarketPanel& panel, const ResidualCheck& check,
                         std::ostream& out) {
  out << "market_id,period,residual_V,residual_A\n";
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < panel.size(); ++i)
    out << panel.market_of(i) << ',' << panel.period[static_cast<std::size_t>(i)] << ','
        << check.residual_v[i] << ',' << check.residual_a[i] << '\n';
}

std::string error_json(const std::string& category, const std::string& message) {
  json doc = {{"error", {{"category", category}, {"message", message}}}};
  return doc.dump();
}

}  // namespace matchkit
