#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/noise_class.hpp"
#include "cerealia/core/time.hpp"

namespace cerealia {

struct Attribute {
  std::string name;
  std::string unit;

  bool operator==(const Attribute&) const = default;
};

struct AttributeSchema {
  std::vector<Attribute> attributes;
  std::chrono::seconds sampling_interval{300};

  std::size_t arity() const noexcept { return attributes.size(); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t j = 0; j < attributes.size(); ++j) {
      if (attributes[j].name == name) return j;
    }
    return std::nullopt;
  }

  std::size_t require_index(std::string_view name) const {
    if (auto j = index_of(name)) return *j;
    throw Error(Errc::schema, "unknown attribute '" + std::string(name) + "'");
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(attributes.size());
    for (const auto& a : attributes) out.push_back(a.name);
    return out;
  }

  bool operator==(const AttributeSchema&) const = default;
};

/// One multivariate reading. A quiet NaN marks a missing value; infinities are invalid.
struct WeatherSample {
  Timestamp timestamp{};
  std::vector<double> values;
};

struct WeatherSeries {
  AttributeSchema schema;
  std::vector<WeatherSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  std::size_t arity() const noexcept { return schema.arity(); }

  double value(std::size_t t, std::size_t j) const { return samples[t].values[j]; }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(samples.size());
    for (std::size_t t = 0; t < samples.size(); ++t) out[t] = samples[t].values[j];
    return out;
  }

  void set_column(std::size_t j, std::span<const double> values) {
    for (std::size_t t = 0; t < samples.size(); ++t) samples[t].values[j] = values[t];
  }

  WeatherSeries slice(std::size_t begin, std::size_t end) const {
    WeatherSeries out{schema, {}};
    out.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                       samples.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::size_t index = 0;
  std::string rule;

  std::string message() const { return rule + " @" + std::to_string(index); }
  bool operator==(const Violation&) const = default;
};

using ValidationReport = std::vector<Violation>;

inline ValidationReport validate_schema(const AttributeSchema& schema) {
  ValidationReport report;
  std::unordered_set<std::string> seen;
  for (std::size_t j = 0; j < schema.attributes.size(); ++j) {
    const auto& name = schema.attributes[j].name;
    if (name.empty()) {
      report.push_back({j, "empty attribute name"});
    } else if (!seen.insert(name).second) {
      report.push_back({j, "duplicate attribute name"});
    }
  }
  if (schema.sampling_interval.count() <= 0) report.push_back({0, "non-positive sampling interval"});
  return report;
}

inline ValidationReport validate_series(const WeatherSeries& series) {
  ValidationReport report = validate_schema(series.schema);
  const std::size_t arity = series.arity();
  for (std::size_t t = 0; t < series.samples.size(); ++t) {
    const auto& s = series.samples[t];
    if (t > 0 && s.timestamp <= series.samples[t - 1].timestamp) {
      report.push_back({t, "non-increasing timestamp"});
    }
    if (s.values.size() != arity) {
      report.push_back({t, "arity mismatch"});
      continue;
    }
    for (double v : s.values) {
      if (std::isinf(v)) {
        report.push_back({t, "non-finite value"});
        break;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Windowing

struct WindowSpec {
  std::size_t length = 48;
  std::size_t stride = 24;

  void validate() const {
    if (length < 2) throw Error(Errc::config, "window length must be >= 2");
    if (stride < 1) throw Error(Errc::config, "window stride must be >= 1");
  }
};

/// Row-major k x n block: one row per time step, one column per attribute.
using WindowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t window_count(std::size_t series_length, const WindowSpec& spec) noexcept {
  if (series_length < spec.length) return 0;
  return (series_length - spec.length) / spec.stride + 1;
}

inline std::vector<std::size_t> window_starts(std::size_t series_length, const WindowSpec& spec) {
  spec.validate();
  if (series_length < spec.length) {
    throw Error(Errc::empty_input, "series of length " + std::to_string(series_length) +
                                       " is shorter than window length " + std::to_string(spec.length));
  }
  std::vector<std::size_t> starts(window_count(series_length, spec));
  for (std::size_t w = 0; w < starts.size(); ++w) starts[w] = w * spec.stride;
  return starts;
}

inline std::vector<std::span<const WeatherSample>> window_iter(const WeatherSeries& series,
                                                               const WindowSpec& spec) {
  std::vector<std::span<const WeatherSample>> windows;
  const std::span<const WeatherSample> all(series.samples);
  for (auto start : window_starts(series.size(), spec)) windows.push_back(all.subspan(start, spec.length));
  return windows;
}

inline WindowMatrix window_matrix(std::span<const WeatherSample> window, std::size_t arity) {
  WindowMatrix m(static_cast<Eigen::Index>(window.size()), static_cast<Eigen::Index>(arity));
  for (std::size_t t = 0; t < window.size(); ++t) {
    if (window[t].values.size() != arity) throw Error(Errc::shape, "sample arity mismatch in window");
    for (std::size_t j = 0; j < arity; ++j) {
      m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = window[t].values[j];
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Standardization

inline constexpr double kStddevFloor = 1e-8;

struct ScalerParams {
  std::vector<double> mean;
  std::vector<double> stddev;  // already floored at kStddevFloor

  std::size_t arity() const noexcept { return mean.size(); }
  bool operator==(const ScalerParams&) const = default;
};

/// Accumulates per-attribute population moments; NaN (missing) values are skipped.
class ScalerFitter {
 public:
  explicit ScalerFitter(std::size_t arity) : columns_(arity) {}

  void add(std::span<const double> row) {
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (!std::isnan(row[j])) columns_[j].push_back(row[j]);
    }
  }

  ScalerParams finish() const {
    ScalerParams p;
    p.mean.resize(columns_.size(), 0.0);
    p.stddev.resize(columns_.size(), 1.0);
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      const auto& c = columns_[j];
      if (c.empty()) continue;
      // Shifting by the first value keeps constant columns exact.
      const double pivot = c.front();
      double shifted = 0.0;
      for (double v : c) shifted += v - pivot;
      const double mean = pivot + shifted / static_cast<double>(c.size());
      double ss = 0.0;
      for (double v : c) ss += (v - mean) * (v - mean);
      p.mean[j] = mean;
      p.stddev[j] = std::max(std::sqrt(ss / static_cast<double>(c.size())), kStddevFloor);
    }
    return p;
  }

 private:
  std::vector<std::vector<double>> columns_;
};

inline ScalerParams fit_scaler(const WeatherSeries& series) {
  if (series.empty()) throw Error(Errc::empty_input, "cannot fit a scaler on an empty series");
  ScalerFitter fitter(series.arity());
  for (const auto& s : series.samples) fitter.add(s.values);
  return fitter.finish();
}

inline WeatherSeries apply_scaler(const ScalerParams& params, const WeatherSeries& series) {
  if (params.arity() != series.arity()) throw Error(Errc::shape, "scaler arity does not match series");
  WeatherSeries out = series;
  for (auto& s : out.samples) {
    for (std::size_t j = 0; j < s.values.size(); ++j) s.values[j] = (s.values[j] - params.mean[j]) / params.stddev[j];
  }
  return out;
}

inline WeatherSeries inverse_scaler(const ScalerParams& params, const WeatherSeries& series) {
  if (params.arity() != series.arity()) throw Error(Errc::shape, "scaler arity does not match series");
  WeatherSeries out = series;
  for (auto& s : out.samples) {
    for (std::size_t j = 0; j < s.values.size(); ++j) s.values[j] = s.values[j] * params.stddev[j] + params.mean[j];
  }
  return out;
}

inline void standardize_in_place(const ScalerParams& params, WindowMatrix& m) {
  if (static_cast<std::size_t>(m.cols()) != params.arity()) {
    throw Error(Errc::shape, "scaler arity does not match window");
  }
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const auto ju = static_cast<std::size_t>(j);
    m.col(j) = (m.col(j).array() - params.mean[ju]) / params.stddev[ju];
  }
}

inline void unstandardize_in_place(const ScalerParams& params, WindowMatrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const auto ju = static_cast<std::size_t>(j);
    m.col(j) = m.col(j).array() * params.stddev[ju] + params.mean[ju];
  }
}

}  // namespace cerealia
