#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qgarch/error.hpp"
#include "qgarch/types.hpp"

namespace qgarch {

enum class SeriesKind { Returns, Prices };

inline SeriesKind parse_series_kind(const std::string& s) {
  if (s == "returns") return SeriesKind::Returns;
  if (s == "prices") return SeriesKind::Prices;
  throw std::invalid_argument("unknown series kind '" + s + "' (use returns or prices)");
}

/// 17 significant digits, enough for an exact round trip.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {
inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Numeric order when both labels are numbers, otherwise string order.
inline bool date_before(const std::string& a, const std::string& b) {
  std::size_t ua = 0;
  std::size_t ub = 0;
  try {
    const double x = std::stod(a, &ua);
    const double y = std::stod(b, &ub);
    if (ua == a.size() && ub == b.size()) return x < y;
  } catch (const std::exception&) {
  }
  return a < b;
}
}  // namespace detail

/// Reads a `date,value` CSV (header line required). Prices become percentage
/// log returns 100 (ln p_t - ln p_{t-1}), labelled with the later date.
/// Dates that fail to increase produce a warning on `warn`.
inline ReturnSeries parse_series_csv(std::istream& in, SeriesKind kind, std::ostream* warn = &std::cerr) {
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::vector<double> values;
  std::vector<std::string> dates;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto comma = t.find(',');
    if (comma == std::string::npos)
      throw std::invalid_argument("CSV line " + std::to_string(lineno) + ": expected two columns date,value");
    const std::string date = detail::trim(t.substr(0, comma));
    const std::string field = detail::trim(t.substr(comma + 1));
    double v = 0.0;
    std::size_t used = 0;
    try {
      v = std::stod(field, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != field.size() || !std::isfinite(v))
      throw std::invalid_argument("CSV line " + std::to_string(lineno) + ": value '" + field + "' is not a number");
    if (!dates.empty() && warn != nullptr && !detail::date_before(dates.back(), date))
      *warn << "warning: CSV line " << lineno << ": date '" << date << "' does not increase\n";
    dates.push_back(date);
    values.push_back(v);
  }
  if (values.empty()) throw std::invalid_argument("CSV input holds no data rows");
  if (kind == SeriesKind::Returns) return ReturnSeries(std::move(values), std::move(dates));
  if (values.size() < 2) throw std::invalid_argument("price input needs at least two rows");
  std::vector<double> r;
  std::vector<std::string> d;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] > 0.0) || !(values[i - 1] > 0.0))
      throw std::invalid_argument("price row " + std::to_string(i + 1) + ": prices must be positive");
    r.push_back(100.0 * (std::log(values[i]) - std::log(values[i - 1])));
    d.push_back(dates[i]);
  }
  return ReturnSeries(std::move(r), std::move(d));
}

inline ReturnSeries read_series_csv(const std::string& path, SeriesKind kind, std::ostream* warn = &std::cerr) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open input file '" + path + "'");
  return parse_series_csv(in, kind, warn);
}

/// Writes `date,value`; unlabelled series get dates 1..n.
inline void write_series_csv(std::ostream& out, const ReturnSeries& s) {
  out << "date,value\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out << (s.has_labels() ? s.labels()[i] : std::to_string(i + 1)) << ',' << format_double(s[i]) << '\n';
}

inline void write_series_csv(const std::string& path, const ReturnSeries& s) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot open output file '" + path + "'");
  write_series_csv(out, s);
}

}  // namespace qgarch
