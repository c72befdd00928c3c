#include "matchkit/planner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "matchkit/error.hpp"

namespace matchkit {

namespace {

double objective(const std::vector<MarketStateAtT>& states, const SurrogateCoefficients& coeffs,
                 const Eigen::ArrayXd& u) {
  double total = 0.0;
  for (std::size_t l = 0; l < states.size(); ++l)
    total += coeffs.value(states[l].a * u[static_cast<Eigen::Index>(l)], states[l].v);
  return total;
}

// Euclidean projection onto {u >= 0, sum u = total}.
Eigen::ArrayXd project_simplex(const Eigen::ArrayXd& y, double total) {
  const Eigen::Index n = y.size();
  std::vector<double> sorted(y.data(), y.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double cumsum = 0.0, tau = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    cumsum += sorted[static_cast<std::size_t>(k)];
    const double candidate = (cumsum - total) / static_cast<double>(k + 1);
    if (sorted[static_cast<std::size_t>(k)] > candidate) tau = candidate;
  }
  return (y - tau).max(0.0);
}

// Water-filling at multiplier lambda: u_l = max(0, (lambda - g_l) / (2 b4 a_l^2)).
Eigen::ArrayXd waterfill_at(const Eigen::ArrayXd& g, const Eigen::ArrayXd& curv, double lambda) {
  return ((lambda - g) / curv).max(0.0);
}

PlannerSolution solve_concave(const std::vector<MarketStateAtT>& states,
                              const SurrogateCoefficients& coeffs, double total) {
  const Eigen::Index n = static_cast<Eigen::Index>(states.size());
  Eigen::ArrayXd g(n), curv(n);
  for (Eigen::Index l = 0; l < n; ++l) {
    const double a = states[static_cast<std::size_t>(l)].a;
    g[l] = a * (coeffs.b1 + coeffs.b2 * states[static_cast<std::size_t>(l)].v);
    curv[l] = 2.0 * coeffs.b4 * a * a;  // negative
  }

  // sum_l u_l(lambda) decreases continuously from +inf to 0 on
  // (-inf, max g]; bisect to the feasibility tolerance.
  double hi = g.maxCoeff();                         // allocation zero
  double lo = (g + curv * total).minCoeff();        // some market already holds the total
  const double tol = 1e-10 * total;
  double lambda = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    lambda = 0.5 * (lo + hi);
    const double s = waterfill_at(g, curv, lambda).sum();
    if (std::abs(s - total) <= tol) break;
    (s > total ? lo : hi) = lambda;
  }

  PlannerSolution sol;
  sol.allocation = waterfill_at(g, curv, lambda);
  // Close the residual feasibility gap over the interior set; marginals move
  // by curv * delta, below the bisection tolerance.
  const double gap = total - sol.allocation.sum();
  if (gap != 0.0) {
    double denom = 0.0;
    for (Eigen::Index l = 0; l < n; ++l)
      if (sol.allocation[l] > 0.0 || (gap > 0.0 && g[l] >= lambda)) denom += 1.0 / (-curv[l]);
    if (denom > 0.0) {
      const double dlambda = -gap / denom;
      lambda += dlambda;
      sol.allocation = waterfill_at(g, curv, lambda);
      const double rem = total - sol.allocation.sum();
      if (rem != 0.0 && sol.allocation.maxCoeff() > 0.0) {
        Eigen::Index widest;
        sol.allocation.maxCoeff(&widest);
        sol.allocation[widest] = std::max(0.0, sol.allocation[widest] + rem);
      }
    }
  }
  sol.multiplier = lambda;
  sol.status = lambda < 0.0 ? PlannerStatus::clipped : PlannerStatus::ok;

  double kkt = 0.0;
  for (Eigen::Index l = 0; l < n; ++l)
    if (sol.allocation[l] > 0.0)
      kkt = std::max(kkt, std::abs(g[l] + curv[l] * sol.allocation[l] - lambda));
  sol.kkt_residual = kkt;
  return sol;
}

PlannerSolution solve_fallback(const std::vector<MarketStateAtT>& states,
                               const SurrogateCoefficients& coeffs, double total,
                               const Eigen::ArrayXd& observed) {
  const Eigen::Index n = static_cast<Eigen::Index>(states.size());
  std::mt19937_64 gen(20240731);  // fixed seed: deterministic fallback
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<Eigen::ArrayXd> starts;
  starts.push_back(observed);
  starts.push_back(Eigen::ArrayXd::Constant(n, total / static_cast<double>(n)));
  for (Eigen::Index l = 0; l < n && starts.size() < 10; ++l) {
    Eigen::ArrayXd corner = Eigen::ArrayXd::Zero(n);
    corner[l] = total;
    starts.push_back(corner);
  }
  while (starts.size() < 16) {
    Eigen::ArrayXd draw(n);
    for (Eigen::Index l = 0; l < n; ++l) draw[l] = -std::log(1.0 - unif(gen));
    starts.push_back(total * draw / draw.sum());
  }

  Eigen::ArrayXd best;
  double best_obj = -std::numeric_limits<double>::infinity();
  for (const Eigen::ArrayXd& start : starts) {
    Eigen::ArrayXd u = project_simplex(start, total);
    double obj = objective(states, coeffs, u);
    double step = std::max(total, 1.0);
    for (int it = 0; it < 500; ++it) {
      Eigen::ArrayXd grad(n);
      for (Eigen::Index l = 0; l < n; ++l) {
        const MarketStateAtT& s = states[static_cast<std::size_t>(l)];
        grad[l] = marginal_hires_du(coeffs, s.a, u[l], s.v);
      }
      bool improved = false;
      while (step > 1e-14 * total) {
        Eigen::ArrayXd cand = project_simplex(u + step * grad, total);
        const double cand_obj = objective(states, coeffs, cand);
        if (cand_obj > obj + 1e-15 * std::abs(obj)) {
          u = cand;
          obj = cand_obj;
          improved = true;
          break;
        }
        step *= 0.5;
      }
      if (!improved) break;
      step *= 2.0;
    }
    if (obj > best_obj) {
      best_obj = obj;
      best = u;
    }
  }

  PlannerSolution sol;
  sol.allocation = best;
  sol.status = PlannerStatus::nonconcave_fallback;
  // Report the active-set marginal spread as the KKT residual.
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index l = 0; l < n; ++l) {
    if (best[l] <= 1e-12 * total) continue;
    const MarketStateAtT& s = states[static_cast<std::size_t>(l)];
    const double m = marginal_hires_du(coeffs, s.a, best[l], s.v);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  sol.multiplier = 0.5 * (lo + hi);
  sol.kkt_residual = std::isfinite(hi - lo) ? hi - lo : 0.0;
  return sol;
}

}  // namespace

const char* to_string(PlannerStatus status) {
  switch (status) {
    case PlannerStatus::nonconcave_fallback: return "nonconcave_fallback";
    case PlannerStatus::clipped: return "clipped";
    default: return "ok";
  }
}

PlannerSolution planner_allocate(const std::vector<MarketStateAtT>& states,
                                 const SurrogateCoefficients& coeffs) {
  if (states.empty()) throw domain_error("planner_allocate: need at least one market");
  double total = 0.0;
  Eigen::ArrayXd observed(static_cast<Eigen::Index>(states.size()));
  for (std::size_t l = 0; l < states.size(); ++l) {
    const MarketStateAtT& s = states[l];
    if (!(s.a > 0.0) || !(s.v > 0.0) || s.u_obs < 0.0)
      throw domain_error("planner_allocate: market '" + s.market_id +
                         "' needs A > 0, V > 0, U >= 0");
    observed[static_cast<Eigen::Index>(l)] = s.u_obs;
    total += s.u_obs;
  }
  if (!(total > 0.0)) throw domain_error("planner_allocate: total unemployed must be positive");

  PlannerSolution sol = coeffs.b4 < 0.0 ? solve_concave(states, coeffs, total)
                                        : solve_fallback(states, coeffs, total, observed);
  for (const MarketStateAtT& s : states) sol.market_ids.push_back(s.market_id);
  sol.h_obs = objective(states, coeffs, observed);
  sol.h_star = objective(states, coeffs, sol.allocation);
  sol.index = sol.h_star != 0.0 ? 1.0 - sol.h_obs / sol.h_star
                                : std::numeric_limits<double>::quiet_NaN();
  return sol;
}

std::vector<PlannerSolution> mismatch_series(const MarketPanel& panel,
                                             const EfficiencySeries& efficiency,
                                             const SurrogateCoefficients& coeffs) {
  // group rows by period
  std::map<std::int64_t, std::vector<Eigen::Index>> by_period;
  for (Eigen::Index t = 0; t < panel.size(); ++t)
    by_period[panel.period[static_cast<std::size_t>(t)]].push_back(t);

  const std::size_t n_markets = panel.markets.size();
  std::vector<PlannerSolution> out;
  out.reserve(by_period.size());
  for (const auto& [period, rows] : by_period) {
    PlannerSolution sol;
    sol.period = period;
    if (rows.size() != n_markets) {
      sol.skipped = true;  // incomplete period
      out.push_back(std::move(sol));
      continue;
    }
    std::vector<MarketStateAtT> states;
    states.reserve(rows.size());
    bool covered = true;
    for (Eigen::Index t : rows) {
      const Eigen::Index e =
          efficiency.find(panel.market_of(t), panel.period[static_cast<std::size_t>(t)]);
      if (e < 0) {
        covered = false;
        break;
      }
      MarketStateAtT s;
      s.market_id = panel.market_of(t);
      s.a = efficiency.entries[static_cast<std::size_t>(e)].a;
      s.u_obs = panel.unemployed[t];
      s.v = panel.vacancies[t];
      states.push_back(std::move(s));
    }
    if (!covered) {
      sol.skipped = true;
      out.push_back(std::move(sol));
      continue;
    }
    sol = planner_allocate(states, coeffs);
    sol.period = period;
    out.push_back(std::move(sol));
  }
  return out;
}

double cd_mismatch_index(const std::vector<MarketStateAtT>& states, double sigma,
                         bool heterogeneous_a) {
  if (!(sigma > 0.0 && sigma < 1.0))
    throw domain_error("cd_mismatch_index: sigma must be in (0, 1)");
  if (states.empty()) throw domain_error("cd_mismatch_index: need at least one market");
  double total = 0.0;
  for (const MarketStateAtT& s : states) total += s.u_obs;
  if (!(total > 0.0)) throw domain_error("cd_mismatch_index: total unemployed must be positive");

  const double expo = 1.0 / (1.0 - sigma);
  double denom = 0.0;
  for (const MarketStateAtT& s : states) {
    const double a = heterogeneous_a ? s.a : 1.0;
    denom += std::pow(a, expo) * s.v;
  }
  double h_obs = 0.0, h_star = 0.0;
  for (const MarketStateAtT& s : states) {
    const double a = heterogeneous_a ? s.a : 1.0;
    const double u_star = total * std::pow(a, expo) * s.v / denom;
    h_obs += a * std::pow(s.u_obs, sigma) * std::pow(s.v, 1.0 - sigma);
    h_star += a * std::pow(u_star, sigma) * std::pow(s.v, 1.0 - sigma);
  }
  return 1.0 - h_obs / h_star;
}

KktReport kkt_report(const PlannerSolution& solution, const std::vector<MarketStateAtT>& states,
                     const SurrogateCoefficients& coeffs) {
  KktReport r;
  double total = 0.0;
  for (const MarketStateAtT& s : states) total += s.u_obs;
  const double corner_tol = 1e-12 * std::max(total, 1.0);
  for (std::size_t l = 0; l < states.size(); ++l) {
    const double u = solution.allocation[static_cast<Eigen::Index>(l)];
    const double m = marginal_hires_du(coeffs, states[l].a, u, states[l].v);
    if (u > corner_tol) {
      ++r.interior_markets;
      r.max_interior_deviation =
          std::max(r.max_interior_deviation, std::abs(m - solution.multiplier));
    } else {
      ++r.corner_markets;
      r.max_corner_violation = std::max(r.max_corner_violation, m - solution.multiplier);
    }
  }
  r.feasibility_gap = std::abs(solution.allocation.sum() - total) / total;
  return r;
}

}  // namespace matchkit
