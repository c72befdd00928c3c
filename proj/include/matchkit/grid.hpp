#pragma once

#include <Eigen/Core>

namespace matchkit {

/// Geometric grid of n points from lo to hi inclusive (lo, hi > 0, n >= 2).
Eigen::ArrayXd geometric_grid(double lo, double hi, int n);

/// Linear grid of n points from lo to hi inclusive.
Eigen::ArrayXd linear_grid(double lo, double hi, int n);

/// Replace the grid point nearest to x (in log distance) with x itself.
/// Grid must be strictly increasing and stays so as long as x lies inside
/// the neighbours of the replaced point, which holds for the nearest point.
void snap_grid_point(Eigen::ArrayXd& grid, double x);

/// Piecewise-linear interpolation of a nondecreasing sampled function.
/// Clamps outside [xs.front(), xs.back()].
double interp_monotone(const Eigen::ArrayXd& xs, const Eigen::ArrayXd& ys, double x);

/// Inverse of a nondecreasing sampled function at level y: the smallest x
/// with f(x) >= y, linearly interpolated on the crossing segment and clamped
/// to the grid ends. Flat segments resolve to their left edge.
double invert_monotone(const Eigen::ArrayXd& xs, const Eigen::ArrayXd& ys, double y);

}  // namespace matchkit
