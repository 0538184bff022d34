#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/noise_class.hpp"
#include "cerealia/core/rng.hpp"
#include "cerealia/core/series.hpp"

namespace cerealia::faults {

/// Half-open index range [begin, end).
struct IndexWindow {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
  bool contains(std::size_t i) const noexcept { return i >= begin && i < end; }
  bool operator==(const IndexWindow&) const = default;
};

inline void require_inside(const IndexWindow& w, std::size_t n) {
  if (w.begin >= w.end || w.end > n) {
    throw Error(Errc::range, "fault window [" + std::to_string(w.begin) + ", " + std::to_string(w.end) +
                                 ") is empty or outside a series of length " + std::to_string(n));
  }
}

struct RandomFaultSpec {
  double density = 0.05;
  double eta_lo = -1.5;
  double eta_hi = 1.5;
  double eta_deadband = 0.25;
  std::uint64_t seed = 0;
  /// Restricts the candidates to these indices; the whole series when empty.
  std::optional<IndexWindow> window;

  void validate() const {
    if (!(density >= 0.0 && density <= 1.0)) throw Error(Errc::config, "random fault density must lie in [0, 1]");
    if (!(eta_lo <= eta_hi)) throw Error(Errc::config, "eta range is inverted");
    if (!(eta_deadband >= 0.0)) throw Error(Errc::config, "eta deadband must be >= 0");
    if (!(eta_lo <= -eta_deadband && eta_hi >= eta_deadband && eta_hi - eta_lo > 2.0 * eta_deadband)) {
      throw Error(Errc::config, "eta range must strictly contain the deadband");
    }
  }
};

struct MalfunctionFaultSpec {
  double intensity = 4.5;
  IndexWindow window;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(intensity > 0.0)) throw Error(Errc::config, "malfunction intensity must be > 0");
  }
};

struct DriftFaultSpec {
  double intensity_lo = -4.0;
  double intensity_hi = 4.0;
  double intensity_deadband = 0.5;
  /// Skips the draw and uses this intensity.
  std::optional<double> fixed_intensity;
  double noise_intensity = 1.0;
  IndexWindow window;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(noise_intensity >= 0.0)) throw Error(Errc::config, "drift noise_intensity must be >= 0");
    if (!fixed_intensity) {
      if (!(intensity_deadband >= 0.0 && intensity_lo <= -intensity_deadband &&
            intensity_hi >= intensity_deadband && intensity_hi - intensity_lo > 2.0 * intensity_deadband)) {
        throw Error(Errc::config, "drift intensity range must strictly contain the deadband");
      }
    }
  }
};

struct BiasFaultSpec {
  double alpha = 2.0;
  IndexWindow window;
};

/// Result of faulting one column.
struct ColumnFault {
  std::vector<double> values;
  std::vector<std::size_t> mask;  // faulted indices, ascending
  std::vector<std::string> warnings;
  /// Drift only: the intensity that was drawn (or fixed).
  std::optional<double> drawn_intensity;
};

namespace detail {

/// Population stddev of the finite values in `w`; 0 when fewer than one.
inline double window_stddev(std::span<const double> x, const IndexWindow& w) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = w.begin; i < w.end; ++i) {
    if (std::isnan(x[i])) continue;
    sum += x[i];
    ++count;
  }
  if (count == 0) return 0.0;
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (std::size_t i = w.begin; i < w.end; ++i) {
    if (!std::isnan(x[i])) ss += (x[i] - mean) * (x[i] - mean);
  }
  return std::sqrt(ss / static_cast<double>(count));
}

/// Uniform draw on [lo, hi], re-sampled while |v| < deadband.
inline double draw_outside_deadband(Rng& rng, double lo, double hi, double deadband) {
  for (;;) {
    const double v = rng.uniform(lo, hi);
    if (std::abs(v) >= deadband) return v;
  }
}

inline std::vector<std::size_t> full_mask(const IndexWindow& w) {
  std::vector<std::size_t> m(w.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = w.begin + i;
  return m;
}

}  // namespace detail

/// X(t)(1 + eta) at each candidate index with probability `density`.
inline ColumnFault fault_random(std::span<const double> x, const RandomFaultSpec& spec) {
  spec.validate();
  const IndexWindow w = spec.window.value_or(IndexWindow{0, x.size()});
  if (spec.window) require_inside(w, x.size());
  ColumnFault out{{x.begin(), x.end()}, {}, {}, std::nullopt};
  if (spec.density == 0.0) return out;
  Rng rng(spec.seed);
  for (std::size_t i = w.begin; i < w.end; ++i) {
    if (!rng.bernoulli(spec.density)) continue;
    const double eta = detail::draw_outside_deadband(rng, spec.eta_lo, spec.eta_hi, spec.eta_deadband);
    out.values[i] = x[i] * (1.0 + eta);
    out.mask.push_back(i);
  }
  return out;
}

/// X(t) + N(0, sigma^2) * intensity inside the window; sigma is the in-window stddev.
inline ColumnFault fault_malfunction(std::span<const double> x, const MalfunctionFaultSpec& spec) {
  spec.validate();
  require_inside(spec.window, x.size());
  ColumnFault out{{x.begin(), x.end()}, detail::full_mask(spec.window), {}, std::nullopt};
  const double sigma = detail::window_stddev(x, spec.window);
  if (sigma == 0.0) out.warnings.push_back("malfunction on a flat segment leaves values unchanged");
  Rng rng(spec.seed);
  for (std::size_t i = spec.window.begin; i < spec.window.end; ++i) {
    out.values[i] = x[i] + rng.normal(0.0, sigma) * spec.intensity;
  }
  return out;
}

/// X(t) + delta + eps_t with delta = X(t0) * intensity and
/// eps_t ~ N(1, (3 sigma)^2) * noise_intensity.
inline ColumnFault fault_drift(std::span<const double> x, const DriftFaultSpec& spec) {
  spec.validate();
  require_inside(spec.window, x.size());
  ColumnFault out{{x.begin(), x.end()}, detail::full_mask(spec.window), {}, std::nullopt};
  Rng rng(spec.seed);
  const double intensity = spec.fixed_intensity
                               ? *spec.fixed_intensity
                               : detail::draw_outside_deadband(rng, spec.intensity_lo, spec.intensity_hi,
                                                               spec.intensity_deadband);
  out.drawn_intensity = intensity;
  const double x0 = x[spec.window.begin];
  const double delta = x0 * intensity;
  if (x0 == 0.0) out.warnings.push_back("drift anchored at X(t0) = 0 has no offset");
  const double sigma = detail::window_stddev(x, spec.window);
  for (std::size_t i = spec.window.begin; i < spec.window.end; ++i) {
    const double eps = spec.noise_intensity == 0.0 ? 0.0 : rng.normal(1.0, 3.0 * sigma) * spec.noise_intensity;
    out.values[i] = x[i] + delta + eps;
  }
  return out;
}

/// Replaces the window by alpha times its mean. Missing values stay missing.
inline ColumnFault fault_bias(std::span<const double> x, const BiasFaultSpec& spec) {
  require_inside(spec.window, x.size());
  ColumnFault out{{x.begin(), x.end()}, detail::full_mask(spec.window), {}, std::nullopt};
  if (spec.alpha == 1.0) out.warnings.push_back("bias with alpha = 1 only flattens the segment");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = spec.window.begin; i < spec.window.end; ++i) {
    if (std::isnan(x[i])) continue;
    sum += x[i];
    ++count;
  }
  if (count == 0) {
    out.warnings.push_back("bias window holds no values");
    return out;
  }
  const double level = sum / static_cast<double>(count) * spec.alpha;
  for (std::size_t i = spec.window.begin; i < spec.window.end; ++i) {
    if (!std::isnan(x[i])) out.values[i] = level;
  }
  return out;
}

/// A faulted series plus a per-sample mask (true where the value was altered).
struct InjectionResult {
  WeatherSeries series;
  std::vector<bool> mask;
  std::vector<std::string> warnings;
  std::optional<double> drawn_intensity;
};

namespace detail {

inline InjectionResult apply_column(const WeatherSeries& series, std::size_t column, ColumnFault fault) {
  InjectionResult r{series, std::vector<bool>(series.size(), false), std::move(fault.warnings),
                    fault.drawn_intensity};
  r.series.set_column(column, fault.values);
  for (auto i : fault.mask) r.mask[i] = true;
  return r;
}

}  // namespace detail

inline InjectionResult inject_random(const WeatherSeries& series, const RandomFaultSpec& spec,
                                     std::string_view attribute) {
  const auto j = series.schema.require_index(attribute);
  return detail::apply_column(series, j, fault_random(series.column(j), spec));
}

inline InjectionResult inject_malfunction(const WeatherSeries& series, const MalfunctionFaultSpec& spec,
                                          std::string_view attribute) {
  const auto j = series.schema.require_index(attribute);
  return detail::apply_column(series, j, fault_malfunction(series.column(j), spec));
}

inline InjectionResult inject_drift(const WeatherSeries& series, const DriftFaultSpec& spec,
                                    std::string_view attribute) {
  const auto j = series.schema.require_index(attribute);
  return detail::apply_column(series, j, fault_drift(series.column(j), spec));
}

inline InjectionResult inject_bias(const WeatherSeries& series, const BiasFaultSpec& spec,
                                   std::string_view attribute) {
  const auto j = series.schema.require_index(attribute);
  return detail::apply_column(series, j, fault_bias(series.column(j), spec));
}

// ---------------------------------------------------------------------------
// Spec (de)serialization, used by fault manifests.

inline nlohmann::json to_json(const IndexWindow& w) { return nlohmann::json::array({w.begin, w.end}); }

inline IndexWindow window_from_json(const nlohmann::json& j) {
  return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()};
}

inline nlohmann::json to_json(const RandomFaultSpec& s) {
  nlohmann::json j{{"density", s.density},
                   {"eta_range", {s.eta_lo, s.eta_hi}},
                   {"eta_deadband", s.eta_deadband},
                   {"seed", s.seed}};
  if (s.window) j["window"] = to_json(*s.window);
  return j;
}

inline nlohmann::json to_json(const MalfunctionFaultSpec& s) {
  return {{"intensity", s.intensity}, {"window", to_json(s.window)}, {"seed", s.seed}};
}

inline nlohmann::json to_json(const DriftFaultSpec& s) {
  nlohmann::json j{{"intensity_range", {s.intensity_lo, s.intensity_hi}},
                   {"intensity_deadband", s.intensity_deadband},
                   {"noise_intensity", s.noise_intensity},
                   {"window", to_json(s.window)},
                   {"seed", s.seed}};
  if (s.fixed_intensity) j["fixed_intensity"] = *s.fixed_intensity;
  return j;
}

inline nlohmann::json to_json(const BiasFaultSpec& s) { return {{"alpha", s.alpha}, {"window", to_json(s.window)}}; }

inline RandomFaultSpec random_spec_from_json(const nlohmann::json& j) {
  RandomFaultSpec s;
  s.density = j.at("density").get<double>();
  s.eta_lo = j.at("eta_range").at(0).get<double>();
  s.eta_hi = j.at("eta_range").at(1).get<double>();
  s.eta_deadband = j.at("eta_deadband").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("window")) s.window = window_from_json(j.at("window"));
  return s;
}

inline MalfunctionFaultSpec malfunction_spec_from_json(const nlohmann::json& j) {
  return {j.at("intensity").get<double>(), window_from_json(j.at("window")), j.at("seed").get<std::uint64_t>()};
}

inline DriftFaultSpec drift_spec_from_json(const nlohmann::json& j) {
  DriftFaultSpec s;
  s.intensity_lo = j.at("intensity_range").at(0).get<double>();
  s.intensity_hi = j.at("intensity_range").at(1).get<double>();
  s.intensity_deadband = j.at("intensity_deadband").get<double>();
  s.noise_intensity = j.at("noise_intensity").get<double>();
  s.window = window_from_json(j.at("window"));
  s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("fixed_intensity")) s.fixed_intensity = j.at("fixed_intensity").get<double>();
  return s;
}

inline BiasFaultSpec bias_spec_from_json(const nlohmann::json& j) {
  return {j.at("alpha").get<double>(), window_from_json(j.at("window"))};
}

}  // namespace cerealia::faults
