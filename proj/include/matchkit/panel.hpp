#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace matchkit {

/// One (market, period) row as it appears in input files.
struct Observation {
  std::string market_id;
  std::int64_t period = 0;
  double hires = 0.0;
  double unemployed = 0.0;
  double vacancies = 0.0;
};

/// Divisors applied by normalize_scales. Identity is all ones.
struct ScaleRecord {
  double hires = 1.0;
  double unemployed = 1.0;
  double vacancies = 1.0;
};

/// Columnar panel of (market, period, H, U, V) observations, sorted by
/// (market_id, period). Immutable after construction; all estimators treat
/// it as a shared read-only input.
struct MarketPanel {
  std::vector<std::string> markets;   // distinct ids, sorted
  Eigen::ArrayXi market_index;        // per row, index into markets
  std::vector<std::int64_t> period;   // per row
  Eigen::ArrayXd hires;               // H
  Eigen::ArrayXd unemployed;          // U
  Eigen::ArrayXd vacancies;           // V
  std::vector<std::uint8_t> flow_warning;  // H > U + V, flagged but accepted
  ScaleRecord scale;

  Eigen::Index size() const { return hires.size(); }
  const std::string& market_of(Eigen::Index row) const {
    return markets[static_cast<std::size_t>(market_index[row])];
  }
  /// Row of (market_id, period), or -1.
  Eigen::Index find(const std::string& market_id, std::int64_t p) const;
};

enum class PanelFormat { csv, json };
enum class ScalePolicy { mean_one, none };

/// How to pick the normalization point.
struct BaseSpec {
  enum class Kind { first_period, explicit_point } kind = Kind::first_period;
  std::string market_id;   // explicit_point only
  std::int64_t period = 0; // explicit_point only

  static BaseSpec first_period() { return {}; }
  static BaseSpec explicit_point(std::string market, std::int64_t period_) {
    BaseSpec s;
    s.kind = Kind::explicit_point;
    s.market_id = std::move(market);
    s.period = period_;
    return s;
  }
};

/// Normalization point; values are in the panel's (scaled) units and the
/// efficiency level there is fixed to a0 = 1.
struct BasePoint {
  std::string market_id;
  std::int64_t period = 0;
  double h0 = 0.0;
  double u0 = 0.0;
  double v0 = 0.0;
  double a0 = 1.0;
  Eigen::Index row = -1;
};

/// Build a validated panel from rows. Sorts by (market_id, period), rejects
/// duplicate keys and non-positive U or V (with the offending input row
/// number, 1-based over the given order).
MarketPanel make_panel(std::vector<Observation> rows);

MarketPanel load_panel(const std::string& path, PanelFormat format);
MarketPanel load_panel_csv(std::istream& in);
MarketPanel load_panel_json(std::istream& in);

void save_panel_csv(const MarketPanel& panel, std::ostream& out);

/// Divide H, U, V by their pooled means (mean_one) recording the divisors,
/// or return the panel unchanged (none).
MarketPanel normalize_scales(const MarketPanel& panel, ScalePolicy policy);

/// Undo normalize_scales using the stored scale record.
MarketPanel denormalize_scales(const MarketPanel& panel);

BasePoint select_base(const MarketPanel& panel, const BaseSpec& spec);

}  // namespace matchkit
