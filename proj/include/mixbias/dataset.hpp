#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mixbias/errors.hpp"

namespace mixbias {

// Non-owning view of one row. Coordinates are positional; the owning table
// (or a bound problem) knows what each position means.
class Observation {
 public:
  Observation() = default;
  explicit Observation(std::span<const double> values) : values_(values) {}

  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }

 private:
  std::span<const double> values_;
};

// Rectangular table of doubles with named columns, stored row-major.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<std::string> columns, std::vector<double> data)
      : columns_(std::move(columns)), data_(std::move(data)) {
    if (columns_.empty()) {
      if (!data_.empty()) throw InputError("dataset has values but no columns");
      return;
    }
    if (data_.size() % columns_.size() != 0) {
      throw InputError("dataset value count is not a multiple of the column count");
    }
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      for (std::size_t j = i + 1; j < columns_.size(); ++j) {
        if (columns_[i] == columns_[j]) throw InputError("duplicate column '" + columns_[i] + "'");
      }
    }
  }

  static Dataset from_rows(std::vector<std::string> columns,
                           const std::vector<std::vector<double>>& rows) {
    std::vector<double> data;
    data.reserve(rows.size() * columns.size());
    for (const auto& r : rows) {
      if (r.size() != columns.size()) throw InputError("row width does not match column count");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Dataset(std::move(columns), std::move(data));
  }

  std::size_t rows() const { return columns_.empty() ? 0 : data_.size() / columns_.size(); }
  std::size_t cols() const { return columns_.size(); }
  bool empty() const { return rows() == 0; }
  const std::vector<std::string>& columns() const { return columns_; }
  std::span<const double> data() const { return data_; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (columns_[j] == name) return j;
    }
    return std::nullopt;
  }

  std::size_t index_of(std::string_view name) const {
    if (auto j = find(name)) return *j;
    throw InputError("missing column '" + std::string(name) + "'");
  }

  Observation row(std::size_t i) const {
    return Observation(std::span<const double>(data_).subspan(i * cols(), cols()));
  }

  double at(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }

  std::vector<double> column(std::string_view name) const {
    const std::size_t j = index_of(name);
    std::vector<double> out(rows());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i, j);
    return out;
  }

  // Projection onto `names`, in that order.
  Dataset select(std::span<const std::string> names) const {
    std::vector<std::size_t> idx;
    idx.reserve(names.size());
    for (const auto& n : names) idx.push_back(index_of(n));
    std::vector<double> out;
    out.reserve(rows() * idx.size());
    for (std::size_t i = 0; i < rows(); ++i) {
      for (std::size_t j : idx) out.push_back(at(i, j));
    }
    return Dataset(std::vector<std::string>(names.begin(), names.end()), std::move(out));
  }

  Dataset subset(std::span<const std::size_t> row_ids) const {
    std::vector<double> out;
    out.reserve(row_ids.size() * cols());
    for (std::size_t i : row_ids) {
      auto r = row(i).values();
      out.insert(out.end(), r.begin(), r.end());
    }
    return Dataset(columns_, std::move(out));
  }

  void append_row(std::span<const double> values) {
    if (values.size() != cols()) throw InputError("row width does not match column count");
    data_.insert(data_.end(), values.begin(), values.end());
  }

 private:
  std::vector<std::string> columns_;
  std::vector<double> data_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError("cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

// Comma-separated numeric table with a mandatory header row.
inline Dataset read_csv(std::istream& in) {
  std::string line;
  std::vector<std::string> columns;
  while (std::getline(in, line)) {
    if (!detail::trim(line).empty()) break;
  }
  if (detail::trim(line).empty()) throw InputError("empty CSV: no header row");
  for (auto name : detail::split_commas(line)) {
    if (name.empty()) throw InputError("empty column name in CSV header");
    columns.emplace_back(name);
  }
  std::vector<double> data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_commas(line);
    if (fields.size() != columns.size()) {
      throw InputError("CSV line " + std::to_string(line_no) + ": expected " +
                       std::to_string(columns.size()) + " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      double v;
      try {
        v = detail::parse_double(fields[j]);
      } catch (const InputError& e) {
        throw InputError("CSV line " + std::to_string(line_no) + ", column '" + columns[j] + "': " + e.what());
      }
      if (!std::isfinite(v)) {
        throw InputError("CSV line " + std::to_string(line_no) + ", column '" + columns[j] + "': non-finite value");
      }
      data.push_back(v);
    }
  }
  Dataset ds(std::move(columns), std::move(data));
  if (ds.empty()) throw InputError("empty CSV: header but no data rows");
  return ds;
}

inline Dataset read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_csv(in);
}

// Shortest decimal string that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline void write_csv(std::ostream& out, const Dataset& ds) {
  for (std::size_t j = 0; j < ds.cols(); ++j) out << (j ? "," : "") << ds.columns()[j];
  out << '\n';
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < ds.cols(); ++j) out << (j ? "," : "") << format_double(ds.at(i, j));
    out << '\n';
  }
}

}  // namespace mixbias
