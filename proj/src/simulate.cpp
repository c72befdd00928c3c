#include "matchkit/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "matchkit/diagnostics.hpp"
#include "matchkit/error.hpp"
#include "matchkit/grid.hpp"
#include "matchkit/parallel.hpp"
#include "matchkit/planner.hpp"

namespace matchkit {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string market_name(int index) {
  std::ostringstream s;
  s << "m";
  if (index + 1 < 10) s << '0';
  s << index + 1;
  return s.str();
}

EfficiencySeries series_from_truth(const MarketPanel& panel, const Eigen::ArrayXd& values) {
  EfficiencySeries s;
  s.entries.resize(static_cast<std::size_t>(panel.size()));
  for (Eigen::Index t = 0; t < panel.size(); ++t) {
    EfficiencyEntry& e = s.entries[static_cast<std::size_t>(t)];
    e.market_id = panel.market_of(t);
    e.period = panel.period[static_cast<std::size_t>(t)];
    e.a = values[t];
    e.percentile = 0.0;
  }
  return s;
}

}  // namespace

std::uint64_t Rng::next() {
  // splitmix64
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  Rng r(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
  r.next();
  return r.next();
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 == 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(kTwoPi * u2);
  have_spare_ = true;
  return r * std::cos(kTwoPi * u2);
}

void DgpConfig::validate() const {
  if (t_periods < 10) throw domain_error("DgpConfig: need T >= 10");
  if (n_markets < 1 || n_markets > 99)
    throw domain_error("DgpConfig: need 1 <= L <= 99");  // two-digit market ids
  if (!(sigma_u > 0.0 && sigma_u < 1.0)) throw domain_error("DgpConfig: sigma_u must be in (0,1)");
  if (!(rho_a >= 0.0 && rho_a < 1.0)) throw domain_error("DgpConfig: rho_a must be in [0,1)");
  if (sd_a < 0.0 || sd_u < 0.0 || sd_v < 0.0 || market_a_spread < 0.0)
    throw domain_error("DgpConfig: scales must be nonnegative");
}

double DgpConfig::stationary_sd_a() const { return sd_a / std::sqrt(1.0 - rho_a * rho_a); }

double cd_matching(double a, double u, double v, double sigma) {
  return a * std::pow(u, sigma) * std::pow(v, 1.0 - sigma);
}

CdDgp generate_cd_dgp(const DgpConfig& cfg) {
  cfg.validate();
  CdDgp out;
  out.sigma_u = cfg.sigma_u;
  const int t_n = cfg.t_periods;
  const int l_n = cfg.n_markets;
  std::vector<Observation> rows;
  rows.reserve(static_cast<std::size_t>(t_n) * static_cast<std::size_t>(l_n));
  out.true_a.resize(static_cast<Eigen::Index>(t_n) * l_n);
  out.true_a_eff.resize(out.true_a.size());

  // Market-major generation in id order matches the panel's sorted row order.
  // common_markets reuses stream 0 everywhere: an exactly symmetric economy.
  Eigen::Index row = 0;
  for (int l = 0; l < l_n; ++l) {
    Rng rng(Rng::derive(cfg.seed, cfg.common_markets ? 0 : static_cast<std::uint64_t>(l)));
    const double stat_sd = cfg.stationary_sd_a();
    const double offset = cfg.market_a_spread > 0.0 ? cfg.market_a_spread * rng.normal() : 0.0;
    double log_a = stat_sd * rng.normal();
    for (int t = 0; t < t_n; ++t) {
      if (t > 0) log_a = cfg.rho_a * log_a + cfg.sd_a * rng.normal();
      const double log_u = cfg.sd_u * rng.normal();
      // V responds to U and, through the knob, to A; the knob breaks
      // A independent of V given U.
      const double log_v = 0.5 * log_u + cfg.dependence_knob * (offset + log_a) +
                           cfg.sd_v * rng.normal();
      const double a = std::exp(offset + log_a);
      const double u = std::exp(log_u);
      const double v = std::exp(log_v);
      Observation o;
      o.market_id = market_name(l);
      o.period = t + 1;
      o.unemployed = u;
      o.vacancies = v;
      o.hires = cd_matching(a, u, v, cfg.sigma_u);
      rows.push_back(std::move(o));
      out.true_a[row] = a;
      out.true_a_eff[row] = std::pow(a, 1.0 / cfg.sigma_u);
      ++row;
    }
  }
  out.panel = make_panel(std::move(rows));
  return out;
}

Eigen::ArrayXd brute_force_allocate(
    const std::function<double(double a, double u, double v)>& m_oracle,
    const std::vector<MarketStateAtT>& states, double u_total, long grid_steps) {
  const int l_n = static_cast<int>(states.size());
  if (l_n < 1 || l_n > 4)
    throw domain_error("brute_force_allocate: supported for 1 <= L <= 4 markets");
  if (!(u_total > 0.0) || grid_steps < 1)
    throw domain_error("brute_force_allocate: need positive total and grid_steps");
  if (l_n == 1) {
    Eigen::ArrayXd u(1);
    u[0] = u_total;
    return u;
  }

  auto value = [&](const Eigen::ArrayXd& u) {
    double total = 0.0;
    for (int l = 0; l < l_n; ++l)
      total += m_oracle(states[static_cast<std::size_t>(l)].a, u[l],
                        states[static_cast<std::size_t>(l)].v);
    return total;
  };

  // Enumerate integer compositions of `steps` restricted to [lo, hi] boxes,
  // in lexicographic order so the first optimum found is the smallest.
  auto search_box = [&](long steps, const std::vector<long>& lo, const std::vector<long>& hi,
                        Eigen::ArrayXd& best_u, double& best_val) {
    const double step_size = u_total / static_cast<double>(steps);
    std::vector<long> counts(static_cast<std::size_t>(l_n), 0);
    Eigen::ArrayXd u(l_n);
    std::function<void(int, long)> rec = [&](int l, long remaining) {
      if (l == l_n - 1) {
        if (remaining < lo[static_cast<std::size_t>(l)] ||
            remaining > hi[static_cast<std::size_t>(l)])
          return;
        counts[static_cast<std::size_t>(l)] = remaining;
        for (int i = 0; i < l_n; ++i)
          u[i] = step_size * static_cast<double>(counts[static_cast<std::size_t>(i)]);
        const double val = value(u);
        if (val > best_val) {
          best_val = val;
          best_u = u;
        }
        return;
      }
      const long from = std::max(lo[static_cast<std::size_t>(l)],
                                 remaining - std::accumulate(hi.begin() + l + 1, hi.end(), 0L));
      const long to = std::min(hi[static_cast<std::size_t>(l)], remaining);
      for (long c = from; c <= to; ++c) {
        counts[static_cast<std::size_t>(l)] = c;
        rec(l + 1, remaining - c);
      }
    };
    rec(0, steps);
  };

  // Coarse full pass, then refine around the incumbent by a factor of ten
  // per level until the requested resolution.
  const long coarse = std::min<long>(grid_steps, 200);
  std::vector<long> lo(static_cast<std::size_t>(l_n), 0);
  std::vector<long> hi(static_cast<std::size_t>(l_n), coarse);
  Eigen::ArrayXd best_u = Eigen::ArrayXd::Zero(l_n);
  best_u[0] = u_total;
  double best_val = value(best_u);
  search_box(coarse, lo, hi, best_u, best_val);

  long steps = coarse;
  while (steps < grid_steps) {
    const long next_steps = std::min<long>(steps * 10, std::max(grid_steps, steps * 10));
    const long factor = next_steps / steps;
    std::vector<long> nlo(static_cast<std::size_t>(l_n)), nhi(static_cast<std::size_t>(l_n));
    for (int l = 0; l < l_n; ++l) {
      const long center =
          std::lround(best_u[l] / u_total * static_cast<double>(next_steps));
      nlo[static_cast<std::size_t>(l)] = std::max(0L, center - 2 * factor);
      nhi[static_cast<std::size_t>(l)] = std::min(next_steps, center + 2 * factor);
    }
    search_box(next_steps, nlo, nhi, best_u, best_val);
    steps = next_steps;
  }
  return best_u;
}

KernelConfig pipeline_kernel_config(const DgpConfig& cfg, const PipelineOptions& opts) {
  KernelConfig k;
  k.bandwidth = opts.bandwidth;
  k.u_grid_size = opts.u_grid_size;
  k.cdf_grid_size = opts.cdf_grid_size;
  k.threads = opts.threads;
  double span = opts.a_span_log;
  if (!(span > 0.0)) {
    // Cover the generating law of effective-units efficiency, but never past
    // the traceable envelope set by the V support along the base ray.
    const double stat_total = cfg.stationary_sd_a() + cfg.market_a_spread;
    const double stat_eff = stat_total / cfg.sigma_u;
    const double sd_v_total = std::sqrt(cfg.sd_v * cfg.sd_v + 0.25 * cfg.sd_u * cfg.sd_u +
                                        cfg.dependence_knob * cfg.dependence_knob * stat_total *
                                            stat_total);
    // The kernel's reach past the realized V support keeps edge cells alive,
    // so the cap can sit outside the 3-sigma envelope itself.
    const double envelope = 3.0 * sd_v_total + 5.0 * opts.bandwidth - 2.0 * cfg.sd_u;
    span = std::min(3.5 * stat_eff + 0.05, envelope);
    span = std::max(span, 0.02);
  }
  k.a_grid = geometric_grid(std::exp(-span), std::exp(span), opts.a_grid_size);
  snap_grid_point(k.a_grid, 1.0);
  return k;
}

DgpConfig bias_default_dgp() {
  // Persistent efficiency gaps across markets; U wide enough to identify the
  // log regression, V wide enough to trace most of the efficiency law.
  DgpConfig d;
  d.t_periods = 120;
  d.n_markets = 3;
  d.rho_a = 0.5;
  d.sd_a = 0.05;
  d.market_a_spread = 0.25;
  d.sd_u = 0.15;
  d.sd_v = 0.35;
  return d;
}

PipelineOptions bias_default_pipeline() {
  PipelineOptions p;
  p.bandwidth = 0.1;  // pooled cross-market sample, coarse smoothing
  p.a_grid_size = 121;
  p.u_grid_size = 21;
  p.a_span_log = 0.6;  // trace the efficiency bulk, truncate the far tails
  // The planner needs the surrogate's curvature; L1 shrinkage on these
  // collinear columns distorts it, so the bias harness fits unpenalized.
  p.lambda = 0.0;
  return p;
}

namespace {

struct PipelineRun {
  MarketPanel scaled;
  EfficiencyDistribution dist;
  EfficiencySeries series;
  SurrogateCoefficients coeffs;
};

PipelineRun run_pipeline(const CdDgp& dgp, const KernelConfig& kcfg, double lambda) {
  PipelineRun run;
  run.scaled = normalize_scales(dgp.panel, ScalePolicy::mean_one);
  const BaseSpec base_spec = suggest_base(run.scaled, kcfg);
  const BasePoint base = select_base(run.scaled, base_spec);
  run.dist = trace_efficiency_distribution(run.scaled, base, kcfg);
  run.series = recover_efficiency(run.scaled, run.dist, kcfg);
  FitOptions fopts;
  run.coeffs = lambda >= 0.0 ? fit_surrogate(run.scaled, run.series, lambda, fopts)
                             : fit_surrogate_cv(run.scaled, run.series, fopts);
  return run;
}

double mean_mismatch_index(const std::vector<PlannerSolution>& sols) {
  double sum = 0.0;
  int n = 0;
  for (const PlannerSolution& s : sols) {
    if (s.skipped || !std::isfinite(s.index)) continue;
    sum += s.index;
    ++n;
  }
  return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

double sign_test_p_value(int negatives, int n) {
  if (n <= 0) return 1.0;
  // P[Bin(n, 1/2) >= negatives] in log space
  double p = 0.0;
  for (int i = negatives; i <= n; ++i) {
    const double logc = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
    p += std::exp(logc - n * std::log(2.0));
  }
  return std::min(1.0, p);
}

BiasReport run_bias_experiment(const DgpConfig& cfg, int replications,
                               const PipelineOptions& opts) {
  if (replications < 1) throw domain_error("run_bias_experiment: replications >= 1");
  if (cfg.n_markets < 2)
    throw domain_error("run_bias_experiment: mismatch needs at least two markets");

  BiasReport report;
  report.true_sigma_u = cfg.sigma_u;
  report.rows.resize(static_cast<std::size_t>(replications));

  parallel_for(static_cast<std::size_t>(replications), opts.threads, [&](std::size_t r) {
    DgpConfig rep_cfg = cfg;
    rep_cfg.seed = Rng::derive(cfg.seed, 1000 + r);
    const CdDgp dgp = generate_cd_dgp(rep_cfg);
    const MarketPanel scaled = normalize_scales(dgp.panel, ScalePolicy::mean_one);

    BiasRow row;
    row.replication = static_cast<int>(r);

    // Nonparametric pipeline; a failed trace leaves the row without an
    // index but keeps the regression stages.
    row.index_np = std::numeric_limits<double>::quiet_NaN();
    try {
      KernelConfig kcfg = pipeline_kernel_config(rep_cfg, opts);
      kcfg.threads = 1;  // parallelism lives at the replication level
      PipelineRun run = run_pipeline(dgp, kcfg, opts.lambda);
      row.index_np = mean_mismatch_index(mismatch_series(run.scaled, run.series, run.coeffs));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numeric) throw;
    }

    // Misspecified Cobb-Douglas pipeline: pooled log OLS, exponent from the
    // regression, homogeneous-efficiency planner.
    const Eigen::Index n = scaled.size();
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n);
    x.col(0).setOnes();
    x.col(1) = scaled.unemployed.log().matrix();
    x.col(2) = scaled.vacancies.log().matrix();
    y = scaled.hires.log().matrix();
    const Eigen::VectorXd beta = ols_fit(x, y);
    row.cd_sigma_u = beta[1];
    row.cd_sigma_v = beta[2];
    row.cd_valid = beta[1] > 0.01 && beta[1] < 0.99;

    // Per-period indices: the CD benchmark and the oracle truth.
    std::map<std::int64_t, std::vector<Eigen::Index>> by_period;
    for (Eigen::Index t = 0; t < scaled.size(); ++t)
      by_period[scaled.period[static_cast<std::size_t>(t)]].push_back(t);
    double cd_sum = 0.0, true_sum = 0.0;
    int cd_n = 0, true_n = 0;
    for (const auto& [period, rows_p] : by_period) {
      if (rows_p.size() != scaled.markets.size()) continue;
      std::vector<MarketStateAtT> observed, truth;
      for (Eigen::Index t : rows_p) {
        MarketStateAtT s;
        s.market_id = scaled.market_of(t);
        s.u_obs = scaled.unemployed[t];
        s.v = scaled.vacancies[t];
        s.a = 1.0;
        observed.push_back(s);
        s.a = dgp.true_a[t];  // panel rows and truth share the same order
        truth.push_back(s);
      }
      if (row.cd_valid) {
        cd_sum += cd_mismatch_index(observed, row.cd_sigma_u, false);
        ++cd_n;
      }
      true_sum += cd_mismatch_index(truth, cfg.sigma_u, true);
      ++true_n;
    }
    row.index_cd = cd_n > 0 ? cd_sum / cd_n : std::numeric_limits<double>::quiet_NaN();
    row.index_true = true_n > 0 ? true_sum / true_n : std::numeric_limits<double>::quiet_NaN();
    report.rows[r] = row;
  });

  double np_bias = 0.0, cd_bias = 0.0;
  std::vector<double> np_devs, cd_devs;
  int n_both = 0, n_cd = 0, n_negative = 0, n_vacancy_above = 0;
  for (const BiasRow& row : report.rows) {
    if (!row.cd_valid) continue;
    ++n_cd;
    if (row.index_cd < row.index_true) ++n_negative;
    if (row.cd_sigma_v > 1.0 - cfg.sigma_u) ++n_vacancy_above;
    if (!std::isfinite(row.index_np)) continue;
    ++n_both;
    np_bias += row.index_np - row.index_true;
    cd_bias += row.index_cd - row.index_true;
    np_devs.push_back(row.index_np - row.index_true);
    cd_devs.push_back(row.index_cd - row.index_true);
  }
  if (n_both > 0) {
    report.mean_np_bias = np_bias / n_both;
    report.mean_cd_bias = cd_bias / n_both;
    auto quantiles = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      const auto at = [&](double q) {
        return v[static_cast<std::size_t>(q * (static_cast<double>(v.size()) - 1.0))];
      };
      return Eigen::Array3d{at(0.1), at(0.5), at(0.9)};
    };
    report.np_bias_quantiles = quantiles(np_devs);
    report.cd_bias_quantiles = quantiles(cd_devs);
  }
  if (n_cd > 0) {
    report.sign_test_p = sign_test_p_value(n_negative, n_cd);
    report.frac_cd_vacancy_above_true = static_cast<double>(n_vacancy_above) / n_cd;
  }
  return report;
}

RecoveryReport run_recovery_experiment(const DgpConfig& cfg, const PipelineOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const CdDgp dgp = generate_cd_dgp(cfg);
  const KernelConfig kcfg = pipeline_kernel_config(cfg, opts);
  PipelineRun run = run_pipeline(dgp, kcfg, opts.lambda);

  RecoveryReport rep;
  rep.t_periods = cfg.t_periods;
  rep.lambda = run.coeffs.lambda;
  rep.base_market = run.dist.base.market_id;
  rep.base_period = run.dist.base.period;

  // Score against the effective-units truth, base-normalized the same way.
  const Eigen::Index base_row = run.scaled.find(rep.base_market, rep.base_period);
  const Eigen::ArrayXd truth = dgp.true_a_eff / dgp.true_a_eff[base_row];
  const Eigen::Index n = run.scaled.size();
  Eigen::ArrayXd log_hat(n), log_true(n);
  int clipped = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const EfficiencyEntry& e = run.series.entries[static_cast<std::size_t>(t)];
    log_hat[t] = std::log(e.a);
    log_true[t] = std::log(truth[t]);
    if (e.flag != RecoveryFlag::ok) ++clipped;
  }
  rep.corr_log_a = pearson_correlation(log_hat, log_true);
  rep.log_rmse = std::sqrt((log_hat - log_true).square().mean());
  rep.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(n);

  std::vector<double> eu, ev, esum;
  for (const ElasticityPoint& p : elasticity_series(run.scaled, run.series, run.coeffs)) {
    eu.push_back(p.eta_u);
    ev.push_back(p.eta_v);
    esum.push_back(p.eta_u + p.eta_v);
  }
  rep.median_eta_u = median(eu);
  rep.median_eta_v = median(ev);
  rep.median_eta_sum = median(esum);
  rep.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

IndependenceReport run_independence_experiment(const DgpConfig& cfg,
                                               const PipelineOptions& opts) {
  const CdDgp dgp = generate_cd_dgp(cfg);
  const KernelConfig kcfg = pipeline_kernel_config(cfg, opts);
  MarketPanel scaled = normalize_scales(dgp.panel, ScalePolicy::mean_one);
  const BasePoint base = select_base(scaled, suggest_base(scaled, kcfg));
  const EfficiencyDistribution dist = trace_efficiency_distribution(scaled, base, kcfg);
  const EfficiencySeries series = recover_efficiency(scaled, dist, kcfg);

  IndependenceReport rep;
  rep.t_periods = cfg.t_periods;
  rep.corr_estimated = residual_independence_check(scaled, series).correlation;
  rep.corr_true =
      residual_independence_check(scaled, series_from_truth(scaled, dgp.true_a_eff)).correlation;
  return rep;
}

}  // namespace matchkit
