// CSV and target-JSON handling for the command line tool. Deliberately
// simple dialect: comma separated, '.' decimal point, UTF-8, header row
// required, no quoting.
#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

struct ParseError {
  std::string message;
  std::size_t line = 0;  // 1-based; 0 when not line-specific
};

struct IpdTable {
  std::vector<std::string> covariate_names;
  std::vector<double> x;  // row-major n×p
  std::vector<double> y;
  std::vector<int32_t> arm;  // empty when absent
  std::size_t n = 0;
  std::size_t p = 0;
};

struct TargetFile {
  std::vector<double> means;
  std::vector<std::string> names;  // empty when absent
  std::optional<uint64_t> n0;
  std::optional<double> ybar0;
  std::optional<double> sigma0_sq;
  std::optional<double> mu02;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' '))
      field.pop_back();
    std::size_t start = 0;
    while (start < field.size() && field[start] == ' ') ++start;
    out.push_back(field.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_double_field(const std::string& s, std::size_t line) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw ParseError{"not a number: '" + s + "'", line};
  return v;
}

inline IpdTable read_ipd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError{"cannot open " + path, 0};

  IpdTable t;
  std::string line;
  std::size_t lineno = 0;

  if (!std::getline(in, line)) throw ParseError{"empty file: " + path, 1};
  ++lineno;
  const std::vector<std::string> header = split_csv_line(line);
  std::ptrdiff_t y_col = -1, arm_col = -1;
  std::vector<std::size_t> cov_cols;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "y")
      y_col = static_cast<std::ptrdiff_t>(j);
    else if (header[j] == "arm")
      arm_col = static_cast<std::ptrdiff_t>(j);
    else {
      cov_cols.push_back(j);
      t.covariate_names.push_back(header[j]);
    }
  }
  if (y_col < 0) throw ParseError{"header must contain an outcome column named 'y'", 1};
  if (cov_cols.empty()) throw ParseError{"no covariate columns in header", 1};
  t.p = cov_cols.size();

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ParseError{"expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       lineno};
    for (std::size_t j : cov_cols) t.x.push_back(parse_double_field(fields[j], lineno));
    t.y.push_back(parse_double_field(fields[static_cast<std::size_t>(y_col)], lineno));
    if (arm_col >= 0) {
      const double a = parse_double_field(fields[static_cast<std::size_t>(arm_col)], lineno);
      t.arm.push_back(static_cast<int32_t>(a));
    }
    ++t.n;
  }
  if (t.n == 0) throw ParseError{"no data rows in " + path, lineno};
  return t;
}

inline TargetFile read_target_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError{"cannot open " + path, 0};
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError{std::string("invalid JSON in ") + path + ": " + e.what(), 0};
  }
  TargetFile t;
  try {
    if (!j.contains("means") || !j["means"].is_array() || j["means"].empty())
      throw ParseError{"target file needs a nonempty 'means' array", 0};
    t.means = j["means"].get<std::vector<double>>();
    if (j.contains("names")) t.names = j["names"].get<std::vector<std::string>>();
    if (j.contains("n0")) t.n0 = j["n0"].get<uint64_t>();
    if (j.contains("ybar0")) t.ybar0 = j["ybar0"].get<double>();
    if (j.contains("sigma0_sq")) t.sigma0_sq = j["sigma0_sq"].get<double>();
    if (j.contains("mu02")) t.mu02 = j["mu02"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError{std::string("bad field in ") + path + ": " + e.what(), 0};
  }
  if (!t.names.empty() && t.names.size() != t.means.size())
    throw ParseError{"'names' and 'means' lengths differ", 0};
  return t;
}

// Column matching by name when names are present in both files, by position
// otherwise; a mismatch is an error, never a silent reorder.
inline std::vector<double> align_target_means(const IpdTable& ipd, const TargetFile& tf) {
  if (tf.names.empty()) {
    if (tf.means.size() != ipd.p)
      throw ParseError{"target has " + std::to_string(tf.means.size()) +
                           " means but IPD has " + std::to_string(ipd.p) +
                           " covariates",
                       0};
    return tf.means;
  }
  std::vector<double> out(ipd.p);
  for (std::size_t j = 0; j < ipd.p; ++j) {
    const auto it = std::find(tf.names.begin(), tf.names.end(), ipd.covariate_names[j]);
    if (it == tf.names.end())
      throw ParseError{"target is missing covariate '" + ipd.covariate_names[j] + "'", 0};
    out[j] = tf.means[static_cast<std::size_t>(it - tf.names.begin())];
  }
  if (tf.names.size() != ipd.p)
    throw ParseError{"target names do not match the IPD covariate set", 0};
  return out;
}

inline std::string fmt_full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}
