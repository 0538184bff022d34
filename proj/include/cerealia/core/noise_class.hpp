#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "cerealia/core/error.hpp"

namespace cerealia {

/// The tag set attached to every classified window; `clean` is the no-fault tag.
enum class NoiseClass : std::uint8_t { clean = 0, random = 1, malfunction = 2, drift = 3, bias = 4 };

inline constexpr std::size_t kNoiseClassCount = 5;

inline constexpr std::array<NoiseClass, kNoiseClassCount> kAllNoiseClasses{
    NoiseClass::clean, NoiseClass::random, NoiseClass::malfunction, NoiseClass::drift,
    NoiseClass::bias};

inline constexpr std::array<NoiseClass, 4> kFaultClasses{NoiseClass::random, NoiseClass::malfunction,
                                                        NoiseClass::drift, NoiseClass::bias};

constexpr std::size_t index_of(NoiseClass c) noexcept { return static_cast<std::size_t>(c); }

inline NoiseClass noise_class_at(std::size_t index) {
  if (index >= kNoiseClassCount) {
    throw Error(Errc::range, "unknown noise class index " + std::to_string(index));
  }
  return static_cast<NoiseClass>(index);
}

constexpr std::string_view to_string(NoiseClass c) noexcept {
  switch (c) {
    case NoiseClass::clean: return "clean";
    case NoiseClass::random: return "random";
    case NoiseClass::malfunction: return "malfunction";
    case NoiseClass::drift: return "drift";
    case NoiseClass::bias: return "bias";
  }
  return "?";
}

inline NoiseClass parse_noise_class(std::string_view name) {
  for (auto c : kAllNoiseClasses) {
    if (to_string(c) == name) return c;
  }
  throw Error(Errc::config, "unknown noise class '" + std::string(name) + "'");
}

}  // namespace cerealia
