#pragma once

// Numeric CSV in and out. Files carry a header row of unit-suffixed column
// names; values are written with 17 significant digits so output is
// byte-reproducible.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "spectroscopy.hpp"

namespace hcf {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::ptrdiff_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
    return -1;
  }
  std::vector<double> values(std::size_t col) const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r[col]);
    return v;
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Lines starting with '#' and blank lines are skipped.
inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto s = detail::trim(line);
    if (s.empty() || s[0] == '#') continue;
    auto cells = detail::split_csv_line(s);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(t.header.size()) + " columns, got " +
                      std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (c.empty() || end != c.c_str() + c.size() || !std::isfinite(v))
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + c + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw DataError(path.string() + ": missing header row");
  return t;
}

inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

/// Column-oriented numeric dataset for plotting.
struct PlotDataset {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> data;  // data[c][row]

  void add_column(std::string name, std::vector<double> values) {
    columns.push_back(std::move(name));
    data.push_back(std::move(values));
  }
  std::size_t rows() const { return data.empty() ? 0 : data.front().size(); }
};

inline void emit_plot_data(const PlotDataset& ds, const std::filesystem::path& path) {
  if (ds.columns.empty() || ds.rows() == 0)
    throw DataError("refusing to write an empty dataset to " + path.string());
  if (ds.columns.size() != ds.data.size()) throw DataError("column names and data differ in count");
  for (const auto& c : ds.data)
    if (c.size() != ds.rows()) throw DataError("dataset columns differ in length");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t c = 0; c < ds.columns.size(); ++c) out << (c ? "," : "") << ds.columns[c];
  out << '\n';
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < ds.columns.size(); ++c)
      out << (c ? "," : "") << format_value(ds.data[c][r]);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Trace ingestion

enum class TraceKind { power_trace, count_spectrum };

/// Detuning-resolved photon counts or transmissions.
struct SpectrumDataset {
  bool is_counts = true;
  std::vector<double> detuning;  // Hz
  std::vector<double> value;     // counts (mean over cycles) or transmission
  std::vector<double> value_stderr;  // only with repeated-cycle columns
  std::vector<double> n_gates;       // empty when absent
  int n_cycles = 1;
};

namespace detail {

/// Columns named exactly `base`, or repeated cycles `base_c0`, `base_c1`, ...
inline std::vector<std::size_t> cycle_columns(const CsvTable& t, const std::string& base) {
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == base || t.header[i].rfind(base + "_c", 0) == 0) cols.push_back(i);
  return cols;
}

inline void average_cycles(const CsvTable& t, const std::vector<std::size_t>& cols,
                           std::vector<double>& mean, std::vector<double>& err) {
  mean.assign(t.rows.size(), 0.0);
  err.clear();
  const double k = static_cast<double>(cols.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (auto c : cols) mean[r] += t.rows[r][c] / k;
  }
  if (cols.size() < 2) return;
  err.assign(t.rows.size(), 0.0);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    double var = 0.0;
    for (auto c : cols) var += (t.rows[r][c] - mean[r]) * (t.rows[r][c] - mean[r]);
    err[r] = std::sqrt(var / (k - 1.0)) / std::sqrt(k);
  }
}

inline void check_increasing(const std::vector<double>& grid, const std::string& what,
                             const std::filesystem::path& path) {
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]))
      throw DataError(path.string() + ": " + what + " not strictly increasing at data row " +
                      std::to_string(i + 1));
}

}  // namespace detail

/// Power traces: columns time_s, power_ref_W, power_atoms_W, where either
/// power column may instead be given as repeated cycles (power_ref_W_c0, ...)
/// which are averaged with standard error sigma / sqrt(k).
inline TransmissionTrace ingest_power_trace(const std::filesystem::path& path,
                                            double probe_wavelength) {
  const auto t = read_csv(path);
  const auto tc = t.column("time_s");
  const auto ref = detail::cycle_columns(t, "power_ref_W");
  const auto atoms = detail::cycle_columns(t, "power_atoms_W");
  if (tc < 0 || ref.empty() || atoms.empty())
    throw DataError(path.string() + ": power trace needs columns time_s, power_ref_W, power_atoms_W");
  TransmissionTrace trace;
  trace.probe_wavelength = probe_wavelength;
  trace.time = t.values(static_cast<std::size_t>(tc));
  detail::check_increasing(trace.time, "time_s", path);
  detail::average_cycles(t, ref, trace.power_reference, trace.stderr_reference);
  detail::average_cycles(t, atoms, trace.power_atoms, trace.stderr_atoms);
  validate(trace);
  return trace;
}

/// Count spectra: detuning_hz, counts[, n_gates]; or detuning_hz, transmission.
inline SpectrumDataset ingest_count_spectrum(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  const auto dc = t.column("detuning_hz");
  if (dc < 0) throw DataError(path.string() + ": missing column detuning_hz");
  SpectrumDataset ds;
  ds.detuning = t.values(static_cast<std::size_t>(dc));
  detail::check_increasing(ds.detuning, "detuning_hz", path);
  const auto counts = detail::cycle_columns(t, "counts");
  if (!counts.empty()) {
    ds.is_counts = true;
    detail::average_cycles(t, counts, ds.value, ds.value_stderr);
    ds.n_cycles = static_cast<int>(counts.size());
    if (const auto g = t.column("n_gates"); g >= 0) ds.n_gates = t.values(static_cast<std::size_t>(g));
    for (double v : ds.value)
      if (v < 0) throw DataError(path.string() + ": negative counts");
  } else if (const auto tr = t.column("transmission"); tr >= 0) {
    ds.is_counts = false;
    ds.value = t.values(static_cast<std::size_t>(tr));
  } else {
    throw DataError(path.string() + ": count spectrum needs a counts or transmission column");
  }
  if (ds.detuning.empty()) throw DataError(path.string() + ": no data rows");
  return ds;
}

}  // namespace hcf
