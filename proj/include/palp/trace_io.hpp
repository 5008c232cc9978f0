#pragma once

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "palp/errors.hpp"
#include "palp/estimator.hpp"
#include "palp/plant.hpp"

// CSV trace and estimate files. Values are written with 17 significant
// digits so a write/read round trip is bit exact.

namespace palp {

inline constexpr std::string_view kTraceHeader =
    "t,z_d,z_d_dot,z_d_ddot,z_ee,z_ee_dot_meas,d_true,d_dot_true,"
    "F_contact_true,F_ft_meas";

inline constexpr std::string_view kEstimateHeader =
    "t,x1,x2,x3,x4,P11,P22,P33,P44,F_hat";

/// Locale-independent round-trip formatting.
inline std::string format_double(double v) {
  char buf[64];
  const auto res =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace detail {

inline const char* trace_column_name(std::size_t i) {
  static const char* names[] = {"t",       "z_d",        "z_d_dot",
                                "z_d_ddot", "z_ee",       "z_ee_dot_meas",
                                "d_true",  "d_dot_true", "F_contact_true",
                                "F_ft_meas"};
  return names[i];
}

inline double parse_field(std::string_view field, std::size_t row,
                          const char* column) {
  double value = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc{} || res.ptr != last)
    throw ParseError(row, column, "not a number: '" + std::string(field) + "'");
  return value;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

}  // namespace detail

inline void write_trace(std::ostream& os,
                        const std::vector<TraceSample>& trace) {
  os << kTraceHeader << '\n';
  for (const TraceSample& s : trace) {
    os << format_double(s.t) << ',' << format_double(s.z_d) << ','
       << format_double(s.z_d_dot) << ',' << format_double(s.z_d_ddot) << ','
       << format_double(s.z_ee) << ',' << format_double(s.z_ee_dot_meas) << ','
       << format_double(s.d_true) << ',' << format_double(s.d_dot_true) << ','
       << format_double(s.F_contact_true) << ',' << format_double(s.F_ft_meas)
       << '\n';
  }
}

inline void write_trace(const std::filesystem::path& path,
                        const std::vector<TraceSample>& trace) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open for writing: " + path.string());
  write_trace(os, trace);
  if (!os) throw Error("write failed: " + path.string());
}

inline std::vector<TraceSample> read_trace(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError(1, "", "missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    const auto cols = detail::split_fields(line);
    const auto expected = detail::split_fields(kTraceHeader);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i >= cols.size() || cols[i] != expected[i])
        throw ParseError(1, std::string(expected[i]),
                         "missing or misnamed column");
    }
    if (cols.size() != expected.size())
      throw ParseError(1, "", "unexpected extra columns");
  }

  std::vector<TraceSample> trace;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != 10)
      throw ParseError(row, "",
                       "expected 10 fields, got " + std::to_string(fields.size()));
    double v[10];
    for (std::size_t i = 0; i < 10; ++i)
      v[i] = detail::parse_field(fields[i], row, detail::trace_column_name(i));
    trace.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]});
  }
  return trace;
}

inline std::vector<TraceSample> read_trace(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open for reading: " + path.string());
  return read_trace(is);
}

/// Estimate series: state, covariance diagonal, and reconstructed force.
inline void write_estimates(std::ostream& os,
                            const std::vector<TimedBelief>& beliefs,
                            const std::vector<ForceEstimate>& forces) {
  if (beliefs.size() != forces.size())
    throw Error("write_estimates: belief/force series length mismatch");
  os << kEstimateHeader << '\n';
  for (std::size_t i = 0; i < beliefs.size(); ++i) {
    const Belief& b = beliefs[i].belief;
    os << format_double(beliefs[i].t) << ',' << format_double(b.x_hat(0))
       << ',' << format_double(b.x_hat(1)) << ',' << format_double(b.x_hat(2))
       << ',' << format_double(b.x_hat(3)) << ',' << format_double(b.P(0, 0))
       << ',' << format_double(b.P(1, 1)) << ',' << format_double(b.P(2, 2))
       << ',' << format_double(b.P(3, 3)) << ','
       << format_double(forces[i].force) << '\n';
  }
}

inline void write_estimates(const std::filesystem::path& path,
                            const std::vector<TimedBelief>& beliefs,
                            const std::vector<ForceEstimate>& forces) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open for writing: " + path.string());
  write_estimates(os, beliefs, forces);
  if (!os) throw Error("write failed: " + path.string());
}

}  // namespace palp
