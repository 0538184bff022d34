#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "cerealia/core/error.hpp"
#include "cerealia/core/rng.hpp"

namespace cerealia::fst {

/// The four weather inputs of the fruit-surface-temperature model.
struct FstInput {
  double air_temp = 0.0;         // degC
  double wind_speed = 0.0;       // m/s
  double dew_point = 0.0;        // degC
  double solar_radiation = 0.0;  // W/m2

  bool operator==(const FstInput&) const = default;

  void validate() const {
    if (!(wind_speed >= 0.0) || !(solar_radiation >= 0.0)) {
      throw Error(Errc::range, "wind speed and solar radiation must be >= 0");
    }
  }

  /// Physically impossible readings (negative wind or radiation) pinned to zero.
  FstInput clamped() const {
    FstInput c = *this;
    c.wind_speed = std::max(c.wind_speed, 0.0);
    c.solar_radiation = std::max(c.solar_radiation, 0.0);
    return c;
  }
};

/// Synthetic ground truth: radiative gain damped by wind, minus a dew-point
/// coupling term, plus Gaussian noise.
struct FstOracleParams {
  double radiation_gain = 0.015;  // a, degC per W/m2
  double wind_damping = 0.7;      // b, per m/s
  double dew_coupling = 0.05;     // c
  double noise_std = 0.2;         // degC
  std::uint64_t seed = 7;

  void validate() const {
    if (!(radiation_gain >= 0.0) || !(wind_damping >= 0.0)) throw Error(Errc::config, "oracle gains must be >= 0");
    if (!(dew_coupling >= 0.0 && dew_coupling < 1.0)) throw Error(Errc::config, "dew coupling must be in [0, 1)");
    if (!(noise_std >= 0.0)) throw Error(Errc::config, "oracle noise_std must be >= 0");
  }
};

inline nlohmann::json to_json(const FstOracleParams& p) {
  return {{"radiation_gain", p.radiation_gain},
          {"wind_damping", p.wind_damping},
          {"dew_coupling", p.dew_coupling},
          {"noise_std", p.noise_std},
          {"seed", p.seed}};
}

inline FstOracleParams oracle_params_from_json(const nlohmann::json& j) {
  FstOracleParams p;
  p.radiation_gain = j.value("radiation_gain", p.radiation_gain);
  p.wind_damping = j.value("wind_damping", p.wind_damping);
  p.dew_coupling = j.value("dew_coupling", p.dew_coupling);
  p.noise_std = j.value("noise_std", p.noise_std);
  p.seed = j.value("seed", p.seed);
  return p;
}

/// air + a*S/(1 + b*W) - c*(air - dew), without noise.
inline double fst_oracle_mean(const FstInput& in, const FstOracleParams& p) {
  return in.air_temp + p.radiation_gain * in.solar_radiation / (1.0 + p.wind_damping * in.wind_speed) -
         p.dew_coupling * (in.air_temp - in.dew_point);
}

/// Noisy oracle. No draw is taken from `rng` when noise_std is 0.
inline double fst_oracle(const FstInput& in, const FstOracleParams& p, Rng& rng) {
  in.validate();
  const double mean = fst_oracle_mean(in, p);
  return p.noise_std > 0.0 ? mean + rng.normal(0.0, p.noise_std) : mean;
}

}  // namespace cerealia::fst
