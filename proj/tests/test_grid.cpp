#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "matchkit/error.hpp"
#include "matchkit/grid.hpp"
#include "matchkit/kernel.hpp"
#include "matchkit/parallel.hpp"

using namespace matchkit;

TEST_CASE("geometric grid endpoints and monotonicity") {
  Eigen::ArrayXd g = geometric_grid(0.25, 4.0, 9);
  CHECK(g[0] == 0.25);
  CHECK(g[8] == 4.0);
  CHECK(g[4] == doctest::Approx(1.0));
  for (int i = 0; i + 1 < 9; ++i) CHECK(g[i] < g[i + 1]);

  CHECK_THROWS_AS(geometric_grid(0.0, 1.0, 5), Error);
  CHECK_THROWS_AS(geometric_grid(2.0, 1.0, 5), Error);
  CHECK_THROWS_AS(geometric_grid(1.0, 2.0, 1), Error);
  CHECK_THROWS_AS(linear_grid(1.0, 1.0, 4), Error);
}

TEST_CASE("snap keeps the grid ordered") {
  Eigen::ArrayXd g = geometric_grid(0.5, 2.0, 11);
  snap_grid_point(g, 1.03);
  bool found = false;
  for (int i = 0; i < 11; ++i) {
    if (g[i] == 1.03) found = true;
    if (i + 1 < 11) CHECK(g[i] < g[i + 1]);
  }
  CHECK(found);
}

TEST_CASE("monotone interpolation clamps and inverts flats to the left edge") {
  Eigen::ArrayXd xs(4), ys(4);
  xs << 0.0, 1.0, 2.0, 3.0;
  ys << 0.0, 0.5, 0.5, 1.0;
  CHECK(interp_monotone(xs, ys, -1.0) == 0.0);
  CHECK(interp_monotone(xs, ys, 9.0) == 1.0);
  CHECK(interp_monotone(xs, ys, 0.5) == doctest::Approx(0.25));
  CHECK(invert_monotone(xs, ys, 0.5) == doctest::Approx(1.0));  // left edge of the flat
  CHECK(invert_monotone(xs, ys, -0.1) == 0.0);
  CHECK(invert_monotone(xs, ys, 1.5) == 3.0);
  CHECK(invert_monotone(xs, ys, 0.75) == doctest::Approx(2.5));
}

TEST_CASE("parallel_for covers every index once and rethrows worker errors") {
  std::vector<int> hits(200, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);

  CHECK_THROWS_AS(parallel_for(50, 3,
                               [&](std::size_t i) {
                                 if (i == 31) throw domain_error("boom");
                               }),
                  Error);
}

TEST_CASE("kernel config validation") {
  KernelConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.bandwidth == 0.01);
  CHECK(cfg.cdf_grid_size == 512);
  CHECK(cfg.a_grid.size() == 201);
  CHECK(cfg.a_grid[0] == doctest::Approx(1.0 / 16.0));
  CHECK(cfg.a_grid[200] == doctest::Approx(16.0));

  KernelConfig bad = cfg;
  bad.bandwidth = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);

  bad = cfg;
  bad.a_grid[5] = bad.a_grid[4];  // not strictly increasing
  CHECK_THROWS_AS(bad.validate(), Error);

  bad = cfg;
  bad.cdf_grid_size = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
}
