#include "matchkit/panel.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "matchkit/error.hpp"

namespace matchkit {

namespace {

double parse_number(const std::string& field, const char* column, std::size_t line_no) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw schema_error("line " + std::to_string(line_no) + ": column '" + column +
                       "' is not numeric: '" + field + "'");
  return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Eigen::Index MarketPanel::find(const std::string& market_id, std::int64_t p) const {
  for (Eigen::Index i = 0; i < size(); ++i)
    if (period[static_cast<std::size_t>(i)] == p && market_of(i) == market_id) return i;
  return -1;
}

MarketPanel make_panel(std::vector<Observation> rows) {
  // Validate in input order so error messages carry the original row number.
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Observation& o = rows[i];
    if (!(o.unemployed > 0.0))
      throw validation_error("row " + std::to_string(i + 1) +
                             ": unemployed must be positive (got " +
                             std::to_string(o.unemployed) + ")");
    if (!(o.vacancies > 0.0))
      throw validation_error("row " + std::to_string(i + 1) +
                             ": vacancies must be positive (got " +
                             std::to_string(o.vacancies) + ")");
    if (o.hires < 0.0)
      throw validation_error("row " + std::to_string(i + 1) + ": hires must be nonnegative");
  }
  std::set<std::pair<std::string, std::int64_t>> seen;
  for (const Observation& o : rows) {
    if (!seen.insert({o.market_id, o.period}).second)
      throw validation_error("duplicate (market_id, period) = (" + o.market_id + ", " +
                             std::to_string(o.period) + ")");
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Observation& a, const Observation& b) {
    return std::tie(a.market_id, a.period) < std::tie(b.market_id, b.period);
  });

  MarketPanel p;
  std::map<std::string, int> market_ids;
  for (const Observation& o : rows) market_ids.emplace(o.market_id, 0);
  int next = 0;
  for (auto& [name, idx] : market_ids) {
    idx = next++;
    p.markets.push_back(name);
  }

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  p.market_index.resize(n);
  p.period.resize(rows.size());
  p.hires.resize(n);
  p.unemployed.resize(n);
  p.vacancies.resize(n);
  p.flow_warning.resize(rows.size(), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Observation& o = rows[static_cast<std::size_t>(i)];
    p.market_index[i] = market_ids[o.market_id];
    p.period[static_cast<std::size_t>(i)] = o.period;
    p.hires[i] = o.hires;
    p.unemployed[i] = o.unemployed;
    p.vacancies[i] = o.vacancies;
    // Flows vs stocks: not an invariant, only worth a flag.
    p.flow_warning[static_cast<std::size_t>(i)] = o.hires > o.unemployed + o.vacancies ? 1 : 0;
  }
  return p;
}

MarketPanel load_panel_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw schema_error("empty CSV input");
  std::vector<std::string> header = split_csv_line(line);
  const std::vector<std::string> required = {"market_id", "period", "hires", "unemployed",
                                             "vacancies"};
  std::map<std::string, int> pos;
  for (std::size_t i = 0; i < header.size(); ++i) pos[header[i]] = static_cast<int>(i);
  for (const std::string& col : required)
    if (!pos.count(col)) throw schema_error("missing column '" + col + "'");

  std::vector<Observation> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() < header.size())
      throw schema_error("line " + std::to_string(line_no) + ": expected " +
                         std::to_string(header.size()) + " fields, got " +
                         std::to_string(fields.size()));
    Observation o;
    o.market_id = fields[static_cast<std::size_t>(pos["market_id"])];
    const std::string& per = fields[static_cast<std::size_t>(pos["period"])];
    o.period = static_cast<std::int64_t>(parse_number(per, "period", line_no));
    o.hires = parse_number(fields[static_cast<std::size_t>(pos["hires"])], "hires", line_no);
    o.unemployed =
        parse_number(fields[static_cast<std::size_t>(pos["unemployed"])], "unemployed", line_no);
    o.vacancies =
        parse_number(fields[static_cast<std::size_t>(pos["vacancies"])], "vacancies", line_no);
    rows.push_back(std::move(o));
  }
  return make_panel(std::move(rows));
}

MarketPanel load_panel_json(std::istream& in) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw schema_error(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw schema_error("JSON panel must be an array of objects");
  std::vector<Observation> rows;
  std::size_t idx = 0;
  for (const auto& item : doc) {
    ++idx;
    for (const char* key : {"market_id", "period", "hires", "unemployed", "vacancies"})
      if (!item.contains(key))
        throw schema_error("element " + std::to_string(idx) + ": missing key '" + key + "'");
    Observation o;
    o.market_id = item["market_id"].get<std::string>();
    o.period = item["period"].get<std::int64_t>();
    o.hires = item["hires"].get<double>();
    o.unemployed = item["unemployed"].get<double>();
    o.vacancies = item["vacancies"].get<double>();
    rows.push_back(std::move(o));
  }
  return make_panel(std::move(rows));
}

MarketPanel load_panel(const std::string& path, PanelFormat format) {
  std::ifstream in(path);
  if (!in) throw schema_error("cannot open file: " + path);
  return format == PanelFormat::csv ? load_panel_csv(in) : load_panel_json(in);
}

void save_panel_csv(const MarketPanel& panel, std::ostream& out) {
  out << "market_id,period,hires,unemployed,vacancies\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < panel.size(); ++i) {
    out << panel.market_of(i) << ',' << panel.period[static_cast<std::size_t>(i)] << ','
        << panel.hires[i] << ',' << panel.unemployed[i] << ',' << panel.vacancies[i] << '\n';
  }
}

MarketPanel normalize_scales(const MarketPanel& panel, ScalePolicy policy) {
  if (policy == ScalePolicy::none) return panel;
  MarketPanel out = panel;
  out.scale.hires = panel.hires.mean();
  out.scale.unemployed = panel.unemployed.mean();
  out.scale.vacancies = panel.vacancies.mean();
  out.hires = panel.hires / out.scale.hires;
  out.unemployed = panel.unemployed / out.scale.unemployed;
  out.vacancies = panel.vacancies / out.scale.vacancies;
  return out;
}

MarketPanel denormalize_scales(const MarketPanel& panel) {
  MarketPanel out = panel;
  out.hires = panel.hires * panel.scale.hires;
  out.unemployed = panel.unemployed * panel.scale.unemployed;
  out.vacancies = panel.vacancies * panel.scale.vacancies;
  out.scale = ScaleRecord{};
  return out;
}

BasePoint select_base(const MarketPanel& panel, const BaseSpec& spec) {
  if (panel.size() == 0) throw domain_error("select_base: empty panel");
  Eigen::Index row = -1;
  if (spec.kind == BaseSpec::Kind::first_period) {
    // Earliest period overall; ties broken by market id order (markets sorted).
    row = 0;
    for (Eigen::Index i = 1; i < panel.size(); ++i) {
      const auto ip = panel.period[static_cast<std::size_t>(i)];
      const auto bp = panel.period[static_cast<std::size_t>(row)];
      if (ip < bp || (ip == bp && panel.market_index[i] < panel.market_index[row])) row = i;
    }
  } else {
    row = panel.find(spec.market_id, spec.period);
    if (row < 0)
      throw validation_error("select_base: no observation (" + spec.market_id + ", " +
                             std::to_string(spec.period) + ")");
  }
  BasePoint b;
  b.market_id = panel.market_of(row);
  b.period = panel.period[static_cast<std::size_t>(row)];
  b.h0 = panel.hires[row];
  b.u0 = panel.unemployed[row];
  b.v0 = panel.vacancies[row];
  b.a0 = 1.0;
  b.row = row;
  if (!(b.h0 > 0.0))
    throw validation_error("select_base: base observation needs positive hires");
  return b;
}

}  // namespace matchkit
