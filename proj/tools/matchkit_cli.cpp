// matchkit: nonparametric matching-function estimation, elasticities, and
// mismatch indices for (hires, unemployed, vacancies) panels.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "matchkit/diagnostics.hpp"
#include "matchkit/efficiency.hpp"
#include "matchkit/error.hpp"
#include "matchkit/grid.hpp"
#include "matchkit/io.hpp"
#include "matchkit/kernel.hpp"
#include "matchkit/panel.hpp"
#include "matchkit/planner.hpp"
#include "matchkit/simulate.hpp"
#include "matchkit/surrogate.hpp"

namespace fs = std::filesystem;
using namespace matchkit;

namespace {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

struct Common {
  std::string input;
  std::string output_dir = ".";
  std::string format = "csv";
  std::string log_level = "info";
  int threads = 1;
  bool strict = false;
};

LogLevel level_of(const std::string& name) {
  if (name == "debug") return LogLevel::debug;
  if (name == "warn") return LogLevel::warn;
  if (name == "error") return LogLevel::error;
  return LogLevel::info;
}

struct Logger {
  LogLevel level = LogLevel::info;
  void log(LogLevel at, const std::string& msg) const {
    if (at >= level) std::cerr << "[matchkit] " << msg << '\n';
  }
  void info(const std::string& msg) const { log(LogLevel::info, msg); }
  void warn(const std::string& msg) const { log(LogLevel::warn, "warning: " + msg); }
};

void add_common(CLI::App* cmd, Common& c, bool needs_input) {
  auto* in = cmd->add_option("--input", c.input, "panel file (csv or json)");
  if (needs_input) in->required();
  cmd->add_option("--output-dir", c.output_dir, "directory for artifacts");
  cmd->add_option("--format", c.format, "input format")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--log-level", c.log_level, "debug|info|warn|error")
      ->check(CLI::IsMember({"debug", "info", "warn", "error"}));
  cmd->add_option("--threads", c.threads, "worker cap")->envname("MATCHKIT_THREADS");
  cmd->add_flag("--strict", c.strict, "exit 4 when the planner needed a fallback");
}

MarketPanel read_panel(const Common& c, const Logger& log) {
  MarketPanel p =
      load_panel(c.input, c.format == "json" ? PanelFormat::json : PanelFormat::csv);
  std::size_t warnings = 0;
  for (std::uint8_t w : p.flow_warning) warnings += w;
  if (warnings > 0)
    log.warn(std::to_string(warnings) + " rows have hires above unemployed + vacancies");
  return p;
}

std::ofstream open_artifact(const Common& c, const std::string& name, const Logger& log) {
  fs::create_directories(c.output_dir);
  fs::path path = fs::path(c.output_dir) / name;
  std::ofstream out(path);
  if (!out) throw schema_error("cannot write artifact: " + path.string());
  log.info("writing " + path.string());
  return out;
}

EfficiencySeries read_efficiency_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw schema_error("cannot open efficiency file: " + path);
  return read_efficiency_csv(in);
}

SurrogateCoefficients read_coeffs_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw schema_error("cannot open coefficients file: " + path);
  return read_coefficients_json(in);
}

BaseSpec parse_base(const std::string& text, const MarketPanel& scaled,
                    const KernelConfig& cfg) {
  if (text == "first") return BaseSpec::first_period();
  if (text == "auto") return suggest_base(scaled, cfg);
  const auto colon = text.rfind(':');
  if (colon == std::string::npos)
    throw domain_error("--base expects 'first', 'auto' or MARKET:PERIOD, got '" + text + "'");
  try {
    return BaseSpec::explicit_point(text.substr(0, colon),
                                    std::stoll(text.substr(colon + 1)));
  } catch (const std::exception&) {
    throw domain_error("--base: cannot parse period in '" + text + "'");
  }
}

struct EfficiencyArgs {
  std::string base = "auto";
  double bandwidth = 0.01;
  int a_grid = 201;
  int u_grid = 41;
  double a_min = 0.0;  // 0: derive from the data envelope
  double a_max = 0.0;
  int cdf_grid = 512;
  int min_market_obs = 30;
};

// The traceable multiplier range is bounded by the observed V envelope along
// the base ray; the default grid covers the intersection over the u grid,
// shrunk one bandwidth.
void derive_a_range(const MarketPanel& panel, const BasePoint& base, double bandwidth,
                    double& lo, double& hi) {
  const double v_lo = panel.vacancies.minCoeff() + bandwidth;
  const double v_hi = panel.vacancies.maxCoeff() - bandwidth;
  const double u_lo = panel.unemployed.minCoeff();
  const double u_hi = panel.unemployed.maxCoeff();
  const double scale = base.a0 * base.u0 / base.v0;
  lo = v_lo * scale / u_lo;
  hi = v_hi * scale / u_hi;
  if (!(lo > 0.0) || !(hi > lo * 1.0001))
    throw numeric_error("cannot derive an a-grid from the data envelope; pass --a-min/--a-max");
}

int run_estimate_efficiency(const Common& c, const EfficiencyArgs& args, const Logger& log) {
  MarketPanel raw = read_panel(c, log);
  MarketPanel panel = normalize_scales(raw, ScalePolicy::mean_one);

  KernelConfig cfg;
  cfg.bandwidth = args.bandwidth;
  cfg.cdf_grid_size = args.cdf_grid;
  cfg.u_grid_size = args.u_grid;
  cfg.min_market_obs = args.min_market_obs;
  cfg.threads = c.threads;

  BaseSpec spec = parse_base(args.base, panel, cfg);
  BasePoint base = select_base(panel, spec);
  log.info("base point: " + base.market_id + ":" + std::to_string(base.period));

  double a_lo = args.a_min, a_hi = args.a_max;
  if (!(a_lo > 0.0) || !(a_hi > a_lo)) derive_a_range(panel, base, cfg.bandwidth, a_lo, a_hi);
  cfg.a_grid = geometric_grid(a_lo, a_hi, args.a_grid);
  if (a_lo < 1.0 && 1.0 < a_hi) snap_grid_point(cfg.a_grid, 1.0);

  EfficiencyDistribution dist = trace_efficiency_distribution(panel, base, cfg);
  EfficiencySeries series = recover_efficiency(panel, dist, cfg);

  { auto out = open_artifact(c, "efficiency.csv", log); write_efficiency_csv(series, out); }
  { auto out = open_artifact(c, "distribution.json", log); write_distribution_json(dist, out); }
  { auto out = open_artifact(c, "scale.json", log); write_scale_json(panel.scale, out); }
  return 0;
}

int run_estimate_elasticity(const Common& c, const std::string& efficiency_path,
                            const std::string& lambda_text, bool eta_u_over_h,
                            const Logger& log) {
  MarketPanel raw = read_panel(c, log);
  MarketPanel panel = normalize_scales(raw, ScalePolicy::mean_one);
  EfficiencySeries series = read_efficiency_file(efficiency_path);

  FitOptions opts;
  opts.eta_u_times_u_over_h = eta_u_over_h;
  SurrogateCoefficients coeffs;
  if (lambda_text == "cv") {
    coeffs = fit_surrogate_cv(panel, series, opts);
    log.info("cross-validated lambda: " + std::to_string(coeffs.lambda));
  } else {
    double lambda = 0.0;
    try {
      lambda = std::stod(lambda_text);
    } catch (const std::exception&) {
      throw domain_error("--lambda expects 'cv' or a number, got '" + lambda_text + "'");
    }
    coeffs = fit_surrogate(panel, series, lambda, opts);
  }

  auto points = elasticity_series(panel, series, coeffs, opts);
  { auto out = open_artifact(c, "elasticity.csv", log); write_elasticity_csv(points, out); }
  { auto out = open_artifact(c, "coefficients.json", log); write_coefficients_json(coeffs, out); }
  return 0;
}

int run_mismatch(const Common& c, const std::string& efficiency_path,
                 const std::string& coeffs_path, std::optional<double> cd_sigma,
                 bool cd_heterogeneous, bool dump_allocations, const Logger& log) {
  MarketPanel raw = read_panel(c, log);
  MarketPanel panel = normalize_scales(raw, ScalePolicy::mean_one);
  EfficiencySeries series = read_efficiency_file(efficiency_path);
  SurrogateCoefficients coeffs = read_coeffs_file(coeffs_path);

  auto sols = mismatch_series(panel, series, coeffs);
  { auto out = open_artifact(c, "mismatch.csv", log); write_mismatch_csv(sols, out); }
  if (dump_allocations) {
    auto out = open_artifact(c, "allocations.csv", log);
    write_allocations_csv(sols, out);
  }

  if (cd_sigma) {
    auto out = open_artifact(c, "cd_mismatch.csv", log);
    out << "period,index_cd\n";
    out.precision(17);
    for (const PlannerSolution& s : sols) {
      if (s.skipped) {
        out << s.period << ",\n";
        continue;
      }
      std::vector<MarketStateAtT> states;
      for (std::size_t l = 0; l < s.market_ids.size(); ++l) {
        const Eigen::Index row = panel.find(s.market_ids[l], s.period);
        const Eigen::Index e = series.find(s.market_ids[l], s.period);
        MarketStateAtT st;
        st.market_id = s.market_ids[l];
        st.u_obs = panel.unemployed[row];
        st.v = panel.vacancies[row];
        st.a = e >= 0 ? series.entries[static_cast<std::size_t>(e)].a : 1.0;
        states.push_back(std::move(st));
      }
      out << s.period << ',' << cd_mismatch_index(states, *cd_sigma, cd_heterogeneous) << '\n';
    }
  }

  if (c.strict) {
    for (const PlannerSolution& s : sols)
      if (!s.skipped && s.status == PlannerStatus::nonconcave_fallback) {
        std::cerr << error_json("solver",
                                "planner fell back to projected gradient at period " +
                                    std::to_string(s.period))
                  << '\n';
        return 4;
      }
  }
  return 0;
}

struct SimulateArgs {
  std::string preset = "recovery";
  int t_periods = 600;
  int n_markets = 0;  // 0: preset default
  std::uint64_t seed = 1;
  int replications = 200;
  double sigma_u = 0.7;
  double rho_a = -1.0;   // negative: preset default
  double sd_a = -1.0;
  double sd_u = -1.0;
  double sd_v = -1.0;
  double knob = -1.0;
  double a_spread = -1.0;
  double bandwidth = -1.0;
  double lambda = -1.0;  // negative: cross-validated
};

DgpConfig preset_dgp(const SimulateArgs& a) {
  DgpConfig d;  // struct defaults are the recovery calibration
  if (a.preset == "bias") {
    d = bias_default_dgp();
  } else if (a.preset == "independence") {
    d.sd_u = 0.08;
    d.sd_v = 0.12;
    d.sd_a = 0.08;
    d.dependence_knob = 0.0;
  }
  d.t_periods = a.t_periods;
  d.sigma_u = a.sigma_u;
  d.seed = a.seed;
  if (a.n_markets > 0) d.n_markets = a.n_markets;
  if (a.rho_a >= 0.0) d.rho_a = a.rho_a;
  if (a.sd_a >= 0.0) d.sd_a = a.sd_a;
  if (a.sd_u >= 0.0) d.sd_u = a.sd_u;
  if (a.sd_v >= 0.0) d.sd_v = a.sd_v;
  if (a.knob >= 0.0) d.dependence_knob = a.knob;
  if (a.a_spread >= 0.0) d.market_a_spread = a.a_spread;
  return d;
}

PipelineOptions preset_pipeline(const SimulateArgs& a, const Common& c) {
  PipelineOptions p;
  p.threads = c.threads;
  p.lambda = a.lambda;
  if (a.preset == "bias") {
    const PipelineOptions defaults = bias_default_pipeline();
    p.bandwidth = defaults.bandwidth;
    p.a_grid_size = defaults.a_grid_size;
    p.u_grid_size = defaults.u_grid_size;
  }
  if (a.bandwidth > 0.0) p.bandwidth = a.bandwidth;
  return p;
}

int run_simulate(const Common& c, const SimulateArgs& args, const Logger& log) {
  DgpConfig d = preset_dgp(args);
  PipelineOptions p = preset_pipeline(args, c);

  if (args.preset == "recovery") {
    RecoveryReport rep = run_recovery_experiment(d, p);
    log.info("corr(log A_hat, log A) = " + std::to_string(rep.corr_log_a));
    { auto out = open_artifact(c, "recovery_report.json", log); write_recovery_report_json(rep, out); }
    { auto out = open_artifact(c, "panel.csv", log); save_panel_csv(generate_cd_dgp(d).panel, out); }
    return 0;
  }
  if (args.preset == "bias") {
    BiasReport rep = run_bias_experiment(d, args.replications, p);
    log.info("mean CD bias = " + std::to_string(rep.mean_cd_bias) +
             ", mean NP bias = " + std::to_string(rep.mean_np_bias));
    auto out = open_artifact(c, "bias_report.json", log);
    write_bias_report_json(rep, out);
    return 0;
  }
  if (args.preset == "independence") {
    IndependenceReport rep = run_independence_experiment(d, p);
    log.info("residual correlation (estimated A) = " + std::to_string(rep.corr_estimated));
    auto out = open_artifact(c, "independence_report.json", log);
    write_independence_report_json(rep, out);
    return 0;
  }
  throw domain_error("unknown preset '" + args.preset + "'");
}

int run_diagnose(const Common& c, const std::string& efficiency_path, const Logger& log) {
  MarketPanel raw = read_panel(c, log);
  MarketPanel panel = normalize_scales(raw, ScalePolicy::mean_one);
  EfficiencySeries series = read_efficiency_file(efficiency_path);

  ResidualCheck check = residual_independence_check(panel, series);
  if (check.degenerate)
    log.warn("residual correlation undefined: one residual series is constant");
  else
    log.info("residual correlation = " + std::to_string(check.correlation));

  MarketSummaries summaries = market_summaries(panel);
  { auto out = open_artifact(c, "residuals.csv", log); write_residuals_csv(panel, check, out); }
  { auto out = open_artifact(c, "summaries.csv", log); write_summaries_csv(panel, summaries, out); }
  {
    auto out = open_artifact(c, "diagnostics.json", log);
    out << "{\n  \"residual_correlation\": ";
    if (check.degenerate)
      out << "null";
    else
      out << check.correlation;
    out << ",\n  \"degenerate\": " << (check.degenerate ? "true" : "false") << "\n}\n";
  }
  return 0;
}

}  // namespace

// Flat key=value config file mirroring the flags; explicit command-line
// flags win over file entries.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw schema_error("--config expects a file path");
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                 args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (config_path.empty()) return args;

  std::ifstream in(config_path);
  if (!in) throw schema_error("cannot open config file: " + config_path);
  auto has_flag = [&](const std::string& flag) {
    for (const std::string& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const char* ws = " \t\r";
      s.erase(0, s.find_first_not_of(ws));
      const std::size_t last = s.find_last_not_of(ws);
      s.erase(last == std::string::npos ? 0 : last + 1);
      return s;
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) continue;
    const std::string flag = "--" + key;
    if (has_flag(flag)) continue;
    if (value == "true") {
      args.push_back(flag);
    } else if (value != "false") {
      args.push_back(flag);
      args.push_back(value);
    }
  }
  return args;
}

int main(int argc, char** argv) {
  CLI::App app{"nonparametric matching function and mismatch toolkit"};
  app.require_subcommand(1);

  Common c_eff, c_ela, c_mis, c_sim, c_dia;
  EfficiencyArgs eff;
  std::string ela_efficiency, ela_lambda = "cv";
  bool ela_eta_u_over_h = false;
  std::string mis_efficiency, mis_coeffs;
  double mis_cd_sigma = -1.0;
  bool mis_cd_heterogeneous = false, mis_dump_allocations = false;
  SimulateArgs sim;
  std::string dia_efficiency;

  CLI::App* cmd_eff = app.add_subcommand("estimate-efficiency",
                                         "trace F(a|u) and recover the efficiency series");
  add_common(cmd_eff, c_eff, true);
  cmd_eff->add_option("--base", eff.base, "first | auto | MARKET:PERIOD");
  cmd_eff->add_option("--bandwidth", eff.bandwidth, "kernel bandwidth in mean-one units");
  cmd_eff->add_option("--a-grid", eff.a_grid, "efficiency grid size");
  cmd_eff->add_option("--u-grid", eff.u_grid, "unemployment grid size");
  cmd_eff->add_option("--a-min", eff.a_min, "efficiency grid lower end");
  cmd_eff->add_option("--a-max", eff.a_max, "efficiency grid upper end");
  cmd_eff->add_option("--cdf-grid", eff.cdf_grid, "h grid size for quantiles");
  cmd_eff->add_option("--min-market-obs", eff.min_market_obs, "observation floor per market");

  CLI::App* cmd_ela =
      app.add_subcommand("estimate-elasticity", "fit the quadratic surrogate and elasticities");
  add_common(cmd_ela, c_ela, true);
  cmd_ela->add_option("--efficiency", ela_efficiency, "efficiency.csv from estimate-efficiency")
      ->required();
  cmd_ela->add_option("--lambda", ela_lambda, "'cv' or a fixed L1 penalty");
  cmd_ela->add_flag("--eta-u-over-h", ela_eta_u_over_h,
                    "scale eta_U by U/H instead of AU/H (replication variant)");

  CLI::App* cmd_mis = app.add_subcommand("mismatch", "planner allocations and mismatch index");
  add_common(cmd_mis, c_mis, true);
  cmd_mis->add_option("--efficiency", mis_efficiency, "efficiency.csv")->required();
  cmd_mis->add_option("--coeffs", mis_coeffs, "coefficients.json")->required();
  cmd_mis->add_option("--cd-sigma", mis_cd_sigma, "also emit the Cobb-Douglas baseline index");
  cmd_mis->add_flag("--cd-heterogeneous", mis_cd_heterogeneous,
                    "keep efficiency heterogeneity in the baseline");
  cmd_mis->add_flag("--dump-allocations", mis_dump_allocations, "write allocations.csv");

  CLI::App* cmd_sim = app.add_subcommand("simulate", "synthetic experiments with known truth");
  add_common(cmd_sim, c_sim, false);
  cmd_sim->add_option("--preset", sim.preset, "recovery | bias | independence")
      ->check(CLI::IsMember({"recovery", "bias", "independence"}));
  cmd_sim->add_option("--T", sim.t_periods, "periods per market");
  cmd_sim->add_option("--L", sim.n_markets, "markets");
  cmd_sim->add_option("--seed", sim.seed, "rng seed");
  cmd_sim->add_option("--replications", sim.replications, "bias preset replications");
  cmd_sim->add_option("--sigma-u", sim.sigma_u, "true unemployment elasticity");
  cmd_sim->add_option("--rho-a", sim.rho_a, "AR(1) of log A");
  cmd_sim->add_option("--sd-a", sim.sd_a, "innovation sd of log A");
  cmd_sim->add_option("--sd-u", sim.sd_u, "sd of log U");
  cmd_sim->add_option("--sd-v", sim.sd_v, "sd of log V given U");
  cmd_sim->add_option("--knob", sim.knob, "dependence of V on A given U");
  cmd_sim->add_option("--a-spread", sim.a_spread, "persistent per-market log A spread");
  cmd_sim->add_option("--bandwidth", sim.bandwidth, "estimator bandwidth override");

  CLI::App* cmd_dia = app.add_subcommand("diagnose", "independence residuals and summaries");
  add_common(cmd_dia, c_dia, true);
  cmd_dia->add_option("--efficiency", dia_efficiency, "efficiency.csv")->required();

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const Error& e) {
    std::cerr << error_json("schema", e.what()) << '\n';
    return 2;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const Common& c = cmd_eff->parsed()   ? c_eff
                    : cmd_ela->parsed() ? c_ela
                    : cmd_mis->parsed() ? c_mis
                    : cmd_sim->parsed() ? c_sim
                                        : c_dia;
  Logger log{level_of(c.log_level)};

  try {
    if (cmd_eff->parsed()) return run_estimate_efficiency(c_eff, eff, log);
    if (cmd_ela->parsed())
      return run_estimate_elasticity(c_ela, ela_efficiency, ela_lambda, ela_eta_u_over_h, log);
    if (cmd_mis->parsed())
      return run_mismatch(c_mis, mis_efficiency, mis_coeffs,
                          mis_cd_sigma > 0.0 ? std::optional<double>(mis_cd_sigma) : std::nullopt,
                          mis_cd_heterogeneous, mis_dump_allocations, log);
    if (cmd_sim->parsed()) return run_simulate(c_sim, sim, log);
    if (cmd_dia->parsed()) return run_diagnose(c_dia, dia_efficiency, log);
  } catch (const Error& e) {
    const char* category = "domain";
    int code = 3;
    switch (e.kind()) {
      case ErrorKind::schema: category = "schema"; code = 2; break;
      case ErrorKind::validation: category = "validation"; code = 2; break;
      case ErrorKind::numeric: category = "numeric"; code = 3; break;
      case ErrorKind::domain: category = "domain"; code = 3; break;
    }
    std::cerr << error_json(category, e.what()) << '\n';
    return code;
  } catch (const std::exception& e) {
    std::cerr << error_json("internal", e.what()) << '\n';
    return 70;
  }
  return 0;
}
