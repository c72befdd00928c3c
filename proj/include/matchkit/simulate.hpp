#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "matchkit/efficiency.hpp"
#include "matchkit/panel.hpp"
#include "matchkit/surrogate.hpp"

namespace matchkit {

/// Deterministic generator: mt19937_64 stream with a Box-Muller normal, so
/// panels are bit-identical across reruns for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  double uniform();  // [0, 1)
  double normal();   // standard normal

  /// Independent stream derived from (seed, stream index).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t next();
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Synthetic Cobb-Douglas economy. Defaults are calibrated so the kernel
/// estimator's oracle checks are informative at the default bandwidth.
struct DgpConfig {
  int t_periods = 600;
  int n_markets = 1;
  double sigma_u = 0.7;          // true unemployment elasticity
  double rho_a = 0.3;            // AR(1) of log A
  double sd_a = 0.062;           // innovation scale of log A
  double sd_u = 0.0015;          // log U scale
  double sd_v = 0.09;            // log V scale (conditional on U)
  double dependence_knob = 0.0;  // couples A into V given U; 0 keeps A indep of V | U
  double market_a_spread = 0.0;  // sd of persistent per-market log A offsets
  bool common_markets = false;   // all markets share one draw path (symmetric economy)
  std::uint64_t seed = 1;

  void validate() const;
  /// Stationary sd of log A (TFP form).
  double stationary_sd_a() const;
};

/// Panel plus the generating truth, aligned with panel rows.
struct CdDgp {
  MarketPanel panel;           // raw units (not scaled)
  Eigen::ArrayXd true_a;       // TFP efficiency: H = A u^s v^(1-s)
  Eigen::ArrayXd true_a_eff;   // effective-units efficiency A^(1/s): H = m(A_eff u, v)
  double sigma_u = 0.7;
};

/// m(a, u, v) = a u^sigma v^(1-sigma).
double cd_matching(double a, double u, double v, double sigma);

CdDgp generate_cd_dgp(const DgpConfig& cfg);

/// Exhaustive simplex-grid maximization of sum_l m(a_l, u_l, v_l) for L <= 4
/// markets. The grid step is total / grid_steps; large step counts are
/// reached by coarse-to-fine refinement that always keeps the incumbent, so
/// the objective is nondecreasing in grid_steps along refinement chains.
/// Ties break toward the lexicographically smallest allocation.
Eigen::ArrayXd brute_force_allocate(
    const std::function<double(double a, double u, double v)>& m_oracle,
    const std::vector<struct MarketStateAtT>& states, double u_total, long grid_steps);

struct BiasRow {
  int replication = 0;
  double index_np = 0.0;    // nonparametric pipeline mismatch, mean over periods
  double index_cd = 0.0;    // misspecified Cobb-Douglas pipeline
  double index_true = 0.0;  // oracle matching function and truth
  double cd_sigma_u = 0.0;  // log-regression unemployment coefficient
  double cd_sigma_v = 0.0;  // log-regression vacancy coefficient
  bool cd_valid = true;     // false when the regression exponent left (0,1)
};

struct BiasReport {
  std::vector<BiasRow> rows;
  double mean_np_bias = 0.0;       // mean(index_np - index_true)
  double mean_cd_bias = 0.0;       // mean(index_cd - index_true)
  Eigen::Array3d np_bias_quantiles{0.0, 0.0, 0.0};  // 10/50/90 percent
  Eigen::Array3d cd_bias_quantiles{0.0, 0.0, 0.0};
  double sign_test_p = 1.0;        // one-sided: median of cd bias < 0
  double frac_cd_vacancy_above_true = 0.0;  // share of reps with sigma_v_hat > 1 - sigma_u
  double true_sigma_u = 0.7;
};

/// Estimator settings used inside the experiment pipelines.
struct PipelineOptions {
  double bandwidth = 0.01;
  int a_grid_size = 201;
  double a_span_log = 0.0;  // half-width of the a grid in logs; 0 = derive from the DGP
  int u_grid_size = 41;
  int cdf_grid_size = 512;
  int threads = 1;
  double lambda = -1.0;  // penalty for the surrogate fit; negative = cross-validated
};

KernelConfig pipeline_kernel_config(const DgpConfig& cfg, const PipelineOptions& opts);

/// Shared defaults for the heterogeneous-efficiency bias experiments (the
/// CLI preset and the acceptance suite use the same economy).
DgpConfig bias_default_dgp();
PipelineOptions bias_default_pipeline();

/// Appendix-style misspecification experiment: per replication, run the
/// nonparametric pipeline, the Cobb-Douglas log-regression pipeline, and the
/// oracle, and compare their mismatch indices against the truth.
BiasReport run_bias_experiment(const DgpConfig& cfg, int replications,
                               const PipelineOptions& opts = {});

struct RecoveryReport {
  double corr_log_a = 0.0;   // corr(log A_hat, log A_true_eff)
  double log_rmse = 0.0;     // against base-normalized effective-units truth
  double clipped_fraction = 0.0;
  double median_eta_u = 0.0;
  double median_eta_v = 0.0;
  double median_eta_sum = 0.0;
  double lambda = 0.0;
  double runtime_seconds = 0.0;
  std::string base_market;
  std::int64_t base_period = 0;
  int t_periods = 0;
};

/// Full pipeline on one synthetic panel: scale, pick a base, trace, invert,
/// fit the surrogate, and score against the generating truth.
RecoveryReport run_recovery_experiment(const DgpConfig& cfg, const PipelineOptions& opts = {});

struct IndependenceReport {
  double corr_estimated = 0.0;  // residual correlation using recovered A
  double corr_true = 0.0;       // same using the generating truth
  int t_periods = 0;
};

IndependenceReport run_independence_experiment(const DgpConfig& cfg,
                                               const PipelineOptions& opts = {});

/// One-sided sign test p-value: P[Binomial(n, 1/2) >= k].
double sign_test_p_value(int negatives, int n);

}  // namespace matchkit
