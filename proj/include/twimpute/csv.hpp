#pragma once

#include "twimpute/core_types.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace twimpute {

inline const std::set<std::string>& default_missing_tokens() {
  static const std::set<std::string> tokens{"", "NaN", "NA"};
  return tokens;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// Parses CSV text. Cells matching a missing token become masked entries.
inline TimeSeriesPanel parse_csv(std::string_view text,
                                 const std::set<std::string>& missing_tokens = default_missing_tokens(),
                                 bool header = false) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    lines.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  // A terminating newline does not open a new row.
  if (!lines.empty() && !text.empty() && text.back() == '\n') lines.pop_back();
  if (header && !lines.empty()) lines.erase(lines.begin());
  if (lines.empty() || (lines.size() == 1 && detail::trim(lines[0]).empty() && text.empty())) {
    throw ParseError("CSV has zero rows");
  }

  std::vector<std::vector<std::string_view>> cells;
  cells.reserve(lines.size());
  for (auto line : lines) cells.push_back(detail::split_commas(line));
  const std::size_t ncol = cells.front().size();
  for (std::size_t r = 0; r < cells.size(); ++r) {
    if (cells[r].size() != ncol) {
      throw ParseError("ragged CSV: row " + std::to_string(r) + " has " + std::to_string(cells[r].size()) +
                       " fields, expected " + std::to_string(ncol));
    }
  }

  const auto n = static_cast<Index>(cells.size());
  const auto d = static_cast<Index>(ncol);
  Matrix values(n, d);
  Mask mask(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) {
      const std::string_view cell = cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (missing_tokens.count(std::string(cell)) > 0) {
        mask(i, j) = true;
        values(i, j) = 0.0;
        continue;
      }
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw ParseError("cannot parse value '" + std::string(cell) + "' at row " + std::to_string(i) +
                         ", column " + std::to_string(j));
      }
      mask(i, j) = std::isnan(v);
      values(i, j) = v;
    }
  }
  return TimeSeriesPanel(std::move(values), std::move(mask));
}

inline TimeSeriesPanel read_csv(const std::string& path,
                                const std::set<std::string>& missing_tokens = default_missing_tokens(),
                                bool header = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), missing_tokens, header);
}

// Shortest round-trip formatting; masked cells are written as NaN.
inline std::string format_csv(const Matrix& values, const Mask* mask = nullptr) {
  std::string out;
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j > 0) out.push_back(',');
      const double v = values(i, j);
      if ((mask != nullptr && (*mask)(i, j)) || std::isnan(v)) {
        out += "NaN";
      } else {
        out += detail::format_double(v);
      }
    }
    out.push_back('\n');
  }
  return out;
}

inline std::string format_csv(const TimeSeriesPanel& panel) { return format_csv(panel.values(), &panel.mask()); }

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error("write to " + path + " failed");
}

inline void write_csv(const TimeSeriesPanel& panel, const std::string& path) {
  write_text(path, format_csv(panel));
}

inline void write_csv(const Matrix& values, const std::string& path) { write_text(path, format_csv(values)); }

}  // namespace twimpute
