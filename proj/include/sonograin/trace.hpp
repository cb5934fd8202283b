#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sonograin/constants.hpp"
#include "sonograin/error.hpp"
#include "sonograin/vec2.hpp"

namespace sonograin {

// Uniformly sampled finger velocity, mm/s at 100 Hz.
struct VelocityTrace {
  int rate = kTraceRate;
  std::vector<Vec2> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

// Timestamped position sample in mm.
struct PointerEvent {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
};

namespace detail {

struct CsvRow {
  double t, a, b;
};

inline std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

inline double parse_number(std::string_view field, std::size_t line_no) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || end != field.data() + field.size())
    throw InputError("malformed row at line " + std::to_string(line_no));
  if (!std::isfinite(v)) throw InputError("non-finite value at line " + std::to_string(line_no));
  return v;
}

// Three-column numeric CSV with an exact header line.
inline std::vector<CsvRow> parse_csv3(std::istream& in, std::string_view header) {
  std::string line;
  if (!std::getline(in, line) || trim_cr(line) != header)
    throw InputError("expected CSV header '" + std::string(header) + "'");
  std::vector<CsvRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view row = trim_cr(line);
    if (row.empty()) continue;
    auto c1 = row.find(',');
    auto c2 = c1 == std::string_view::npos ? c1 : row.find(',', c1 + 1);
    if (c2 == std::string_view::npos || row.find(',', c2 + 1) != std::string_view::npos)
      throw InputError("malformed row at line " + std::to_string(line_no));
    rows.push_back({parse_number(row.substr(0, c1), line_no),
                    parse_number(row.substr(c1 + 1, c2 - c1 - 1), line_no),
                    parse_number(row.substr(c2 + 1), line_no)});
  }
  return rows;
}

inline std::ifstream open_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

}  // namespace detail

inline constexpr std::string_view kTraceHeader = "t_s,vx_mm_s,vy_mm_s";
inline constexpr std::string_view kPositionsHeader = "t_s,x_mm,y_mm";

/// Parses a velocity trace CSV. Rows must be spaced 0.01 s apart (±1e-6 s).
inline VelocityTrace parse_trace(std::istream& in) {
  auto rows = detail::parse_csv3(in, kTraceHeader);
  if (rows.empty()) throw InputError("empty trace");
  VelocityTrace trace;
  trace.samples.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && std::abs(rows[i].t - rows[i - 1].t - kTraceStep) > 1e-6)
      throw InputError("trace not sampled at 100 Hz (row " + std::to_string(i + 1) + ")");
    trace.samples.push_back({rows[i].a, rows[i].b});
  }
  return trace;
}

inline VelocityTrace load_trace(const std::filesystem::path& path) {
  auto in = detail::open_text(path);
  try {
    return parse_trace(in);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

/// Parses a position CSV (irregular timestamps allowed; ordering checked by the velocity pipeline).
inline std::vector<PointerEvent> parse_positions(std::istream& in) {
  auto rows = detail::parse_csv3(in, kPositionsHeader);
  if (rows.empty()) throw InputError("empty position trace");
  std::vector<PointerEvent> events;
  events.reserve(rows.size());
  for (const auto& r : rows) events.push_back({r.t, r.a, r.b});
  return events;
}

inline std::vector<PointerEvent> load_positions(const std::filesystem::path& path) {
  auto in = detail::open_text(path);
  try {
    return parse_positions(in);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

inline void write_trace(const std::filesystem::path& path, const VelocityTrace& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << kTraceHeader << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << static_cast<double>(i) * kTraceStep << ',' << trace.samples[i].x << ','
        << trace.samples[i].y << '\n';
}

}  // namespace sonograin
