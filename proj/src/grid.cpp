#include "matchkit/grid.hpp"

#include <cassert>
#include <cmath>

#include "matchkit/error.hpp"

namespace matchkit {

Eigen::ArrayXd geometric_grid(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi > lo) || n < 2)
    throw domain_error("geometric_grid: need 0 < lo < hi and n >= 2");
  Eigen::ArrayXd g(n);
  const double step = std::log(hi / lo) / (n - 1);
  for (int i = 0; i < n; ++i) g[i] = lo * std::exp(step * i);
  g[n - 1] = hi;
  return g;
}

Eigen::ArrayXd linear_grid(double lo, double hi, int n) {
  if (!(hi > lo) || n < 2) throw domain_error("linear_grid: need lo < hi and n >= 2");
  Eigen::ArrayXd g(n);
  const double step = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) g[i] = lo + step * i;
  g[n - 1] = hi;
  return g;
}

void snap_grid_point(Eigen::ArrayXd& grid, double x) {
  assert(grid.size() >= 1);
  int best = 0;
  double bestd = std::abs(std::log(x / grid[0]));
  for (int i = 1; i < grid.size(); ++i) {
    double d = std::abs(std::log(x / grid[i]));
    if (d < bestd) { bestd = d; best = i; }
  }
  grid[best] = x;
}

double interp_monotone(const Eigen::ArrayXd& xs, const Eigen::ArrayXd& ys, double x) {
  const Eigen::Index n = xs.size();
  assert(n == ys.size() && n >= 1);
  if (x <= xs[0]) return ys[0];
  if (x >= xs[n - 1]) return ys[n - 1];
  Eigen::Index lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    Eigen::Index mid = (lo + hi) / 2;
    (xs[mid] <= x ? lo : hi) = mid;
  }
  const double dx = xs[hi] - xs[lo];
  if (dx <= 0.0) return ys[lo];
  const double w = (x - xs[lo]) / dx;
  return ys[lo] + w * (ys[hi] - ys[lo]);
}

double invert_monotone(const Eigen::ArrayXd& xs, const Eigen::ArrayXd& ys, double y) {
  const Eigen::Index n = xs.size();
  assert(n == ys.size() && n >= 1);
  if (y <= ys[0]) return xs[0];
  if (y >= ys[n - 1]) return xs[n - 1];
  // first index with ys[i] >= y
  Eigen::Index lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    Eigen::Index mid = (lo + hi) / 2;
    (ys[mid] < y ? lo : hi) = mid;
  }
  const double dy = ys[hi] - ys[lo];
  if (dy <= 0.0) return xs[hi];
  const double w = (y - ys[lo]) / dy;
  return xs[lo] + w * (xs[hi] - xs[lo]);
}

}  // namespace matchkit
