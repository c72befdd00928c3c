#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "matchkit/io.hpp"

using namespace matchkit;

TEST_CASE("efficiency csv round trip preserves entries and flags") {
  EfficiencySeries s;
  for (int t = 1; t <= 4; ++t) {
    EfficiencyEntry e;
    e.market_id = "tokyo";
    e.period = t;
    e.a = 0.5 + 0.25 * t;
    e.percentile = 0.2 * t;
    e.flag = t == 4 ? RecoveryFlag::clipped_high : RecoveryFlag::ok;
    s.entries.push_back(e);
  }
  std::ostringstream out;
  write_efficiency_csv(s, out);
  std::istringstream in(out.str());
  EfficiencySeries back = read_efficiency_csv(in);
  REQUIRE(back.entries.size() == 4);
  CHECK(back.entries[2].a == s.entries[2].a);
  CHECK(back.entries[3].flag == RecoveryFlag::clipped_high);
  CHECK(back.entries[0].flag == RecoveryFlag::ok);
}

TEST_CASE("distribution json round trip keeps missing cells") {
  EfficiencyDistribution d;
  d.base.market_id = "m";
  d.base.period = 7;
  d.base.h0 = 0.9;
  d.base.u0 = 1.1;
  d.base.v0 = 1.2;
  d.u_grid.resize(2);
  d.u_grid << 0.9, 1.1;
  d.a_grid.resize(3);
  d.a_grid << 0.8, 1.0, 1.25;
  d.f_values.resize(3, 2);
  d.f_values << 0.1, 0.2, 0.5, std::numeric_limits<double>::quiet_NaN(), 0.9, 0.95;

  std::ostringstream out;
  write_distribution_json(d, out);
  std::istringstream in(out.str());
  EfficiencyDistribution back = read_distribution_json(in);
  CHECK(back.base.period == 7);
  CHECK(back.a_grid[2] == doctest::Approx(1.25));
  CHECK(back.f_values(0, 1) == doctest::Approx(0.2));
  CHECK(std::isnan(back.f_values(1, 1)));
  CHECK(back.f_values(2, 0) == doctest::Approx(0.9));
}

TEST_CASE("coefficients json round trip") {
  SurrogateCoefficients c;
  c.b1 = 0.7;
  c.b2 = -0.2;
  c.b3 = 0.3;
  c.b4 = -0.1;
  c.b5 = 0.05;
  c.lambda = 0.011;
  c.r_squared = 0.93;
  c.nonzero = 5;
  std::ostringstream out;
  write_coefficients_json(c, out);
  std::istringstream in(out.str());
  SurrogateCoefficients back = read_coefficients_json(in);
  CHECK(back.b1 == c.b1);
  CHECK(back.b4 == c.b4);
  CHECK(back.lambda == c.lambda);
  CHECK(back.nonzero == 5);
}

TEST_CASE("mismatch csv marks skipped periods") {
  std::vector<PlannerSolution> sols(2);
  sols[0].period = 1;
  sols[0].h_obs = 0.8;
  sols[0].h_star = 1.0;
  sols[0].index = 0.2;
  sols[0].allocation.resize(1);
  sols[1].period = 2;
  sols[1].skipped = true;
  std::ostringstream out;
  write_mismatch_csv(sols, out);
  const std::string text = out.str();
  CHECK(text.find("period,index,H_obs,H_star,status,kkt_residual") == 0);
  CHECK(text.find("2,,,,skipped,") != std::string::npos);
  CHECK(text.find("0.2") != std::string::npos);
}

TEST_CASE("error json is machine readable") {
  const std::string payload = error_json("schema", "missing column 'hires'");
  CHECK(payload.find("\"category\":\"schema\"") != std::string::npos);
  CHECK(payload.find("missing column") != std::string::npos);
}
