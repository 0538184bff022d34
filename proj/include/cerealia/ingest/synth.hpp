#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/rng.hpp"
#include "cerealia/core/series.hpp"
#include "cerealia/core/time.hpp"

namespace cerealia::ingest {

struct SynthAttribute {
  std::string name;
  std::string unit;
  double base = 0.0;
  double diurnal_amp = 0.0;
  double seasonal_amp = 0.0;
  double noise_std = 0.0;
};

struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t days = 1;
  std::vector<SynthAttribute> attributes;
  std::chrono::seconds sampling_interval{300};
  Timestamp start = from_unix(1704067200);  // 2024-01-01T00:00:00Z
};

/// Six-channel orchard station used for the synthetic corpora. It carries the
/// four inputs of the fruit-surface-temperature model plus humidity and pressure.
inline std::vector<SynthAttribute> default_station_attributes() {
  return {
      {"air_temperature", "degC", 12.0, 7.0, 10.0, 0.4},
      {"relative_humidity", "%", 60.0, 15.0, 8.0, 2.0},
      {"dew_point", "degC", 4.0, 2.0, 7.0, 0.5},
      {"atmospheric_pressure", "kPa", 97.5, 0.15, 0.4, 0.05},
      {"solar_radiation", "W/m2", 320.0, 380.0, 120.0, 25.0},
      {"wind_speed", "m/s", 3.5, 1.2, 0.6, 0.6},
  };
}

inline SynthConfig default_synth_config(std::uint64_t seed, std::size_t days) {
  SynthConfig c;
  c.seed = seed;
  c.days = days;
  c.attributes = default_station_attributes();
  return c;
}

/// value = base + diurnal_amp*sin(2*pi*hour/24) + seasonal_amp*sin(2*pi*day/365) + N(0, noise_std^2)
inline WeatherSeries synth_generate(const SynthConfig& config) {
  if (config.days < 1) throw Error(Errc::config, "synthetic series needs at least one day");
  if (config.sampling_interval.count() <= 0) throw Error(Errc::config, "sampling interval must be positive");
  for (const auto& a : config.attributes) {
    if (!(a.noise_std >= 0.0)) throw Error(Errc::config, "noise_std must be >= 0 for '" + a.name + "'");
  }

  WeatherSeries series;
  series.schema.sampling_interval = config.sampling_interval;
  for (const auto& a : config.attributes) series.schema.attributes.push_back({a.name, a.unit});

  const auto n = static_cast<std::size_t>(config.days * 86400 / config.sampling_interval.count());
  series.samples.resize(n);
  Rng rng(config.seed);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = series.samples[i];
    s.timestamp = config.start + config.sampling_interval * static_cast<std::int64_t>(i);
    const double diurnal = std::sin(two_pi * hour_of_day(s.timestamp) / 24.0);
    const double seasonal = std::sin(two_pi * day_of_year(s.timestamp) / 365.0);
    s.values.resize(config.attributes.size());
    for (std::size_t j = 0; j < config.attributes.size(); ++j) {
      const auto& a = config.attributes[j];
      s.values[j] = a.base + a.diurnal_amp * diurnal + a.seasonal_amp * seasonal + a.noise_std * rng.normal();
    }
  }
  return series;
}

/// The reference corpus: the default station trimmed to exactly `windows`
/// windows of `spec` (10,000 windows of 48 at stride 24 by default).
inline WeatherSeries corpus_series(std::uint64_t seed, std::size_t windows = 10000, WindowSpec spec = {}) {
  spec.validate();
  if (windows == 0) throw Error(Errc::config, "corpus needs at least one window");
  const std::size_t samples = (windows - 1) * spec.stride + spec.length;
  auto config = default_synth_config(seed, 1);
  const auto per_day = static_cast<std::size_t>(86400 / config.sampling_interval.count());
  config.days = (samples + per_day - 1) / per_day;
  auto series = synth_generate(config);
  series.samples.resize(samples);
  return series;
}

}  // namespace cerealia::ingest
