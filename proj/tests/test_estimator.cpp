#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "matchkit/diagnostics.hpp"
#include "matchkit/efficiency.hpp"
#include "matchkit/error.hpp"
#include "matchkit/grid.hpp"
#include "matchkit/kernel.hpp"
#include "matchkit/simulate.hpp"

using namespace matchkit;

namespace {

struct Fixture {
  CdDgp dgp;
  MarketPanel panel;  // mean-one scaled
  KernelConfig cfg;
};

// Calibrated synthetic economy: tight U, moderate V spread, kernel-resolvable.
Fixture make_fixture(int t, std::uint64_t seed, double sd_a = 0.062, double sd_v = 0.09) {
  DgpConfig d;
  d.t_periods = t;
  d.seed = seed;
  d.sd_a = sd_a;
  d.sd_v = sd_v;
  Fixture fx;
  fx.dgp = generate_cd_dgp(d);
  fx.panel = normalize_scales(fx.dgp.panel, ScalePolicy::mean_one);
  PipelineOptions opts;
  fx.cfg = pipeline_kernel_config(d, opts);
  return fx;
}

}  // namespace

TEST_CASE("conditional cdf hits exact bounds outside the data range") {
  Fixture fx = make_fixture(200, 3);
  const double u = 1.0, v = 1.0;
  CHECK(conditional_cdf(fx.panel, fx.panel.hires.minCoeff() * 0.5, u, v, fx.cfg) == 0.0);
  CHECK(conditional_cdf(fx.panel, fx.panel.hires.maxCoeff() * 1.5, u, v, fx.cfg) == 1.0);
}

TEST_CASE("conditional cdf is a cdf in h") {
  Fixture fx = make_fixture(300, 5);
  Rng rng(99);
  for (int k = 0; k < 50; ++k) {
    const double h1 = 0.7 + 0.6 * rng.uniform();
    const double h2 = h1 + 0.3 * rng.uniform();
    const double g1 = conditional_cdf(fx.panel, h1, 1.0, 1.0, fx.cfg);
    const double g2 = conditional_cdf(fx.panel, h2, 1.0, 1.0, fx.cfg);
    CHECK(g1 >= 0.0);
    CHECK(g2 <= 1.0);
    CHECK(g2 >= g1);
  }
}

TEST_CASE("far off-support evaluation raises a numeric error naming the point") {
  Fixture fx = make_fixture(100, 7);
  CHECK_THROWS_WITH_AS(conditional_cdf(fx.panel, 1.0, 9.0, 9.0, fx.cfg),
                       doctest::Contains("no local support"), Error);
  try {
    conditional_cdf(fx.panel, 1.0, 9.0, 9.0, fx.cfg);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("u=9") != std::string::npos);
  }
}

TEST_CASE("deterministic matching gives a step cdf at the function value") {
  // sd_a = 0: H is an exact function of (U, V).
  DgpConfig d;
  d.t_periods = 400;
  d.seed = 11;
  d.sd_a = 0.0;
  d.sd_u = 0.05;
  d.sd_v = 0.05;
  CdDgp dgp = generate_cd_dgp(d);
  MarketPanel panel = normalize_scales(dgp.panel, ScalePolicy::mean_one);
  KernelConfig cfg;
  cfg.a_grid = geometric_grid(0.5, 2.0, 101);

  // In scaled units H = kappa * U^0.7 V^0.3; measure kappa at one row.
  const double kappa = panel.hires[0] / (std::pow(panel.unemployed[0], 0.7) *
                                         std::pow(panel.vacancies[0], 0.3));
  const double u = 1.0, v = 1.0;
  const double h_star = kappa;
  CHECK(conditional_cdf(panel, h_star * 1.05, u, v, cfg) >= 0.9);
  CHECK(conditional_cdf(panel, h_star * 0.95, u, v, cfg) <= 0.1);
}

TEST_CASE("quantile boundaries and round trip") {
  Fixture fx = make_fixture(2000, 13, 0.05, 0.05);
  CHECK(conditional_quantile(fx.panel, 0.0, 1.0, 1.0, fx.cfg) ==
        fx.panel.hires.minCoeff());
  CHECK(conditional_quantile(fx.panel, 1.0, 1.0, 1.0, fx.cfg) ==
        fx.panel.hires.maxCoeff());
  for (double p : {0.2, 0.35, 0.5, 0.65, 0.8}) {
    const double h = conditional_quantile(fx.panel, p, 1.0, 1.0, fx.cfg);
    const double back = conditional_cdf(fx.panel, h, 1.0, 1.0, fx.cfg);
    CHECK(back == doctest::Approx(p).epsilon(0.02));
  }
}

TEST_CASE("median quantile matches a brute-force resampling oracle") {
  // Panel estimate of the conditional median against fresh draws from the
  // same generating law with (u, v) held fixed.
  DgpConfig d;
  d.t_periods = 4000;
  d.seed = 17;
  d.rho_a = 0.0;
  d.sd_a = 0.06;
  d.sd_u = 0.01;
  d.sd_v = 0.05;
  CdDgp dgp = generate_cd_dgp(d);
  MarketPanel panel = normalize_scales(dgp.panel, ScalePolicy::mean_one);
  KernelConfig cfg;
  cfg.a_grid = geometric_grid(0.5, 2.0, 101);

  const double u = 1.0, v = 1.0;
  // oracle: resample A, map through the scaled matching function
  const double ku = panel.unemployed[10] / dgp.panel.unemployed[10];
  const double kv = panel.vacancies[10] / dgp.panel.vacancies[10];
  const double kh = panel.hires[10] / dgp.panel.hires[10];
  Rng rng(4242);
  std::vector<double> draws(200000);
  for (double& x : draws) {
    const double a = std::exp(d.sd_a * rng.normal());
    x = kh * cd_matching(a, u / ku, v / kv, d.sigma_u);
  }
  std::nth_element(draws.begin(), draws.begin() + draws.size() / 2, draws.end());
  const double oracle_median = draws[draws.size() / 2];

  const double est = conditional_quantile(panel, 0.5, u, v, cfg);
  CHECK(est == doctest::Approx(oracle_median).epsilon(0.02));
}

TEST_CASE("trace columns are monotone and carry the base percentile") {
  Fixture fx = make_fixture(500, 19);
  BasePoint base = select_base(fx.panel, suggest_base(fx.panel, fx.cfg));
  EfficiencyDistribution dist = trace_efficiency_distribution(fx.panel, base, fx.cfg);

  for (Eigen::Index j = 0; j < dist.u_grid.size(); ++j) {
    double prev = -1.0;
    for (Eigen::Index i = 0; i < dist.a_grid.size(); ++i) {
      const double f = dist.f_values(i, j);
      if (std::isnan(f)) continue;
      CHECK(f >= prev);
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
      prev = f;
    }
  }

  // At the base cell the traced value is the base observation's percentile
  // up to the displacement the monotone rearrangement may apply.
  const double p0 = conditional_cdf(fx.panel, base.h0, base.u0, base.v0, fx.cfg);
  CHECK(std::abs(distribution_cdf(dist, 1.0, base.u0) - p0) <= 0.12);


  // The scaling identity: the traced cell at (a, u) is the conditional cdf
  // at the ray point. Rearrangement permutes a column's values, so check
  // multiset membership at a few cells.
  const Eigen::Index j = dist.u_grid.size() / 2;
  const double u = dist.u_grid[j];
  for (Eigen::Index i : {dist.a_grid.size() / 3, dist.a_grid.size() / 2}) {
    const double c = dist.a_grid[i] * u / (base.a0 * base.u0);
    double raw = 0.0;
    bool have = true;
    try {
      raw = conditional_cdf(fx.panel, c * base.h0, u, c * base.v0, fx.cfg);
    } catch (const Error&) {
      have = false;
    }
    if (!have) continue;
    bool found = false;
    for (Eigen::Index k = 0; k < dist.a_grid.size() && !found; ++k)
      found = !std::isnan(dist.f_values(k, j)) &&
              std::abs(dist.f_values(k, j) - raw) <= 1e-12;
    CHECK(found);
  }
}

TEST_CASE("base percentile matches the rank of the true efficiency") {
  // Dense fixture so the kernel's local sample is large; the conditional
  // percentile of the base hires should sit at the realized rank of the
  // base observation's true efficiency.
  Fixture fx = make_fixture(1500, 71, 0.062, 0.05);
  BasePoint base = select_base(fx.panel, suggest_base(fx.panel, fx.cfg));
  const double p0 = conditional_cdf(fx.panel, base.h0, base.u0, base.v0, fx.cfg);

  const Eigen::Index base_row = fx.panel.find(base.market_id, base.period);
  const double a_base = fx.dgp.true_a[base_row];
  int below = 0;
  for (Eigen::Index t = 0; t < fx.dgp.true_a.size(); ++t)
    if (fx.dgp.true_a[t] < a_base) ++below;
  const double oracle_rank =
      static_cast<double>(below) / static_cast<double>(fx.dgp.true_a.size());
  CHECK(std::abs(p0 - oracle_rank) <= 0.1);
}

TEST_CASE("psi scaling identity of the tracing formula") {
  // F(a0 | psi u0) = G(psi h0 | psi u0, psi v0): the traced cell value at
  // a = 1 and u = psi u0 is computed from exactly that ray point.
  Fixture fx = make_fixture(400, 23);
  BasePoint base = select_base(fx.panel, suggest_base(fx.panel, fx.cfg));
  const double psi = 1.004;
  const double c = 1.0 * (psi * base.u0) / (base.a0 * base.u0);
  CHECK(c == doctest::Approx(psi).epsilon(1e-15));
  const double lhs = conditional_cdf(fx.panel, c * base.h0, psi * base.u0, c * base.v0, fx.cfg);
  const double rhs =
      conditional_cdf(fx.panel, psi * base.h0, psi * base.u0, psi * base.v0, fx.cfg);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-14));
}

TEST_CASE("default wide a grid on concentrated data fails loudly") {
  Fixture fx = make_fixture(200, 29);
  KernelConfig wide = fx.cfg;
  wide.a_grid = geometric_grid(1.0 / 16.0, 16.0, 201);
  BasePoint base = select_base(fx.panel, suggest_base(fx.panel, wide));
  CHECK_THROWS_WITH_AS(trace_efficiency_distribution(fx.panel, base, wide),
                       doctest::Contains("local support"), Error);
}

TEST_CASE("market observation floor is enforced") {
  Fixture fx = make_fixture(200, 31);
  KernelConfig cfg = fx.cfg;
  cfg.min_market_obs = 1000;
  BasePoint base = select_base(fx.panel, BaseSpec::first_period());
  CHECK_THROWS_WITH_AS(trace_efficiency_distribution(fx.panel, base, cfg),
                       doctest::Contains("floor"), Error);
}

TEST_CASE("recovery pins the base to one and tracks the truth") {
  Fixture fx = make_fixture(300, 37);
  BasePoint base = select_base(fx.panel, suggest_base(fx.panel, fx.cfg));
  EfficiencyDistribution dist = trace_efficiency_distribution(fx.panel, base, fx.cfg);
  EfficiencySeries series = recover_efficiency(fx.panel, dist, fx.cfg);

  const Eigen::Index b = series.find(base.market_id, base.period);
  REQUIRE(b >= 0);
  CHECK(std::abs(series.entries[static_cast<std::size_t>(b)].a - 1.0) <= 1e-9);

  const Eigen::Index base_row = fx.panel.find(base.market_id, base.period);
  Eigen::ArrayXd truth = fx.dgp.true_a_eff / fx.dgp.true_a_eff[base_row];
  Eigen::ArrayXd lh(fx.panel.size()), lt(fx.panel.size());
  for (Eigen::Index t = 0; t < fx.panel.size(); ++t) {
    lh[t] = std::log(series.entries[static_cast<std::size_t>(t)].a);
    lt[t] = std::log(truth[t]);
  }
  CHECK(pearson_correlation(lh, lt) >= 0.9);
}

TEST_CASE("recovered efficiency is invariant to a common scale of the panel") {
  DgpConfig d;
  d.t_periods = 250;
  d.seed = 41;
  CdDgp dgp = generate_cd_dgp(d);
  PipelineOptions opts;
  KernelConfig cfg = pipeline_kernel_config(d, opts);

  auto run = [&](const MarketPanel& raw) {
    MarketPanel scaled = normalize_scales(raw, ScalePolicy::mean_one);
    BasePoint base = select_base(scaled, BaseSpec::first_period());
    EfficiencyDistribution dist = trace_efficiency_distribution(scaled, base, cfg);
    return recover_efficiency(scaled, dist, cfg).a_values();
  };

  MarketPanel scaled_input = dgp.panel;
  scaled_input.hires *= 3.0;
  scaled_input.unemployed *= 3.0;
  scaled_input.vacancies *= 3.0;

  Eigen::ArrayXd a1 = run(dgp.panel);
  Eigen::ArrayXd a2 = run(scaled_input);
  REQUIRE(a1.size() == a2.size());
  for (Eigen::Index t = 0; t < a1.size(); ++t)
    CHECK(a2[t] == doctest::Approx(a1[t]).epsilon(1e-6));
}

TEST_CASE("inversion round trip within one a-grid step") {
  Fixture fx = make_fixture(600, 43);
  BasePoint base = select_base(fx.panel, suggest_base(fx.panel, fx.cfg));
  EfficiencyDistribution dist = trace_efficiency_distribution(fx.panel, base, fx.cfg);
  const double u = base.u0;

  int checked = 0;
  for (Eigen::Index i = 1; i + 1 < dist.a_grid.size(); ++i) {
    const double a = dist.a_grid[i];
    const double f = distribution_cdf(dist, a, u);
    const double f_lo = distribution_cdf(dist, dist.a_grid[i - 1], u);
    const double f_hi = distribution_cdf(dist, dist.a_grid[i + 1], u);
    if (!(f_lo < f && f < f_hi)) continue;  // flats have no unique inverse
    const double back = distribution_quantile(dist, f, u);
    const double step = dist.a_grid[i + 1] - dist.a_grid[i];
    CHECK(std::abs(back - a) <= step + 1e-12);
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("recovery flags clipped percentiles at the grid edge") {
  Fixture fx = make_fixture(300, 47);
  KernelConfig narrow = fx.cfg;
  narrow.a_grid = geometric_grid(0.97, 1.0 / 0.97, 11);  // much tighter than A's law
  BasePoint base = select_base(fx.panel, suggest_base(fx.panel, narrow));
  EfficiencyDistribution dist = trace_efficiency_distribution(fx.panel, base, narrow);
  EfficiencySeries series = recover_efficiency(fx.panel, dist, narrow);
  int clipped = 0;
  for (const EfficiencyEntry& e : series.entries)
    if (e.flag != RecoveryFlag::ok) ++clipped;
  CHECK(clipped > 0);
}

TEST_CASE("zero-hire observations recover at the bottom of the grid") {
  Fixture fx = make_fixture(300, 67);
  MarketPanel panel = fx.panel;
  panel.hires[5] = 0.0;  // a month with no placements
  BasePoint base = select_base(panel, suggest_base(panel, fx.cfg));
  EfficiencyDistribution dist = trace_efficiency_distribution(panel, base, fx.cfg);
  EfficiencySeries series = recover_efficiency(panel, dist, fx.cfg);
  const EfficiencyEntry& e = series.entries[5];
  CHECK(e.percentile == 0.0);
  CHECK(e.a > 0.0);
  CHECK(e.a <= series.a_values().maxCoeff());
}

TEST_CASE("matching function evaluation is consistent at the base and monotone in a") {
  // Near-degenerate fixture: dense local support keeps the quantile within
  // one cdf-grid step of the base hires.
  DgpConfig d;
  d.t_periods = 1500;
  d.seed = 53;
  d.sd_a = 0.02;
  d.rho_a = 0.0;
  d.sd_u = 0.002;
  d.sd_v = 0.002;
  CdDgp dgp = generate_cd_dgp(d);
  MarketPanel panel = normalize_scales(dgp.panel, ScalePolicy::mean_one);
  KernelConfig cfg;
  cfg.a_grid = geometric_grid(0.85, 1.0 / 0.85, 201);
  BasePoint base = select_base(panel, suggest_base(panel, cfg));
  EfficiencyDistribution dist = trace_efficiency_distribution(panel, base, cfg);

  const double h = evaluate_matching_function(panel, dist, base.a0, base.u0, base.v0, cfg);
  const double grid_step =
      (panel.hires.maxCoeff() - panel.hires.minCoeff()) / (cfg.cdf_grid_size - 1);
  CHECK(std::abs(h - base.h0) <= grid_step + 1e-12);

  double prev = -1.0;
  for (double a : {0.96, 0.99, 1.0, 1.01, 1.04}) {
    const double m = evaluate_matching_function(panel, dist, a, base.u0, base.v0, cfg);
    CHECK(m >= prev);
    prev = m;
  }
}

TEST_CASE("matching function tracks the oracle on the calibrated economy") {
  Fixture fx = make_fixture(400, 59);
  BasePoint base = select_base(fx.panel, suggest_base(fx.panel, fx.cfg));
  EfficiencyDistribution dist = trace_efficiency_distribution(fx.panel, base, fx.cfg);

  const Eigen::Index base_row = fx.panel.find(base.market_id, base.period);
  std::vector<double> rel_err;
  for (Eigen::Index t = 0; t < fx.panel.size(); t += 7) {
    const double a_eff = fx.dgp.true_a_eff[t] / fx.dgp.true_a_eff[base_row];
    double m = 0.0;
    try {
      m = evaluate_matching_function(fx.panel, dist, a_eff, fx.panel.unemployed[t],
                                     fx.panel.vacancies[t], fx.cfg);
    } catch (const Error&) {
      continue;  // off-support (u, v) combinations are fine to skip here
    }
    rel_err.push_back(std::abs(m - fx.panel.hires[t]) / fx.panel.hires[t]);
  }
  REQUIRE(rel_err.size() > 30);
  std::nth_element(rel_err.begin(), rel_err.begin() + rel_err.size() / 2, rel_err.end());
  CHECK(rel_err[rel_err.size() / 2] <= 0.05);
}

TEST_CASE("tracing is deterministic across thread counts") {
  Fixture fx = make_fixture(250, 61);
  BasePoint base = select_base(fx.panel, suggest_base(fx.panel, fx.cfg));
  KernelConfig one = fx.cfg;
  one.threads = 1;
  KernelConfig four = fx.cfg;
  four.threads = 4;
  EfficiencyDistribution d1 = trace_efficiency_distribution(fx.panel, base, one);
  EfficiencyDistribution d4 = trace_efficiency_distribution(fx.panel, base, four);
  REQUIRE(d1.f_values.size() == d4.f_values.size());
  for (Eigen::Index i = 0; i < d1.f_values.rows(); ++i)
    for (Eigen::Index j = 0; j < d1.f_values.cols(); ++j) {
      const double a = d1.f_values(i, j), b = d4.f_values(i, j);
      CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
    }

  Eigen::ArrayXd s1 = recover_efficiency(fx.panel, d1, one).a_values();
  Eigen::ArrayXd s4 = recover_efficiency(fx.panel, d4, four).a_values();
  for (Eigen::Index t = 0; t < s1.size(); ++t) CHECK(s1[t] == s4[t]);
}
