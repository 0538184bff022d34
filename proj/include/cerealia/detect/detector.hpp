#pragma once

#include <json.hpp>

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/noise_class.hpp"
#include "cerealia/core/series.hpp"

namespace cerealia::detect {

struct Classification {
  NoiseClass label = NoiseClass::clean;
  std::array<double, kNoiseClassCount> scores{};

  bool operator==(const Classification&) const = default;
};

/// What a detector was trained on: attribute order, window length, scaler.
struct DetectorMeta {
  std::vector<std::string> attributes;
  std::size_t window_length = 0;
  ScalerParams scaler;
};

/// Window classifier. Implementations are immutable once built, so one
/// instance can serve any number of threads.
class Detector {
 public:
  explicit Detector(DetectorMeta meta) : meta_(std::move(meta)) {}
  virtual ~Detector() = default;

  const DetectorMeta& meta() const noexcept { return meta_; }
  virtual std::string kind() const = 0;

  /// `window` is standardized with meta().scaler and shaped window_length x arity.
  Classification classify(const WindowMatrix& window) const {
    check_shape(window);
    return classify_checked(window);
  }

  /// Standardizes a raw window with the detector's scaler, then classifies.
  Classification classify_raw(const WindowMatrix& raw) const {
    check_shape(raw);
    WindowMatrix m = raw;
    standardize_in_place(meta_.scaler, m);
    return classify_checked(m);
  }

  /// Model-specific payload (config and learned parameters) for persistence.
  virtual nlohmann::json payload() const = 0;

  void check_shape(const WindowMatrix& window) const {
    const auto k = meta_.window_length;
    const auto n = meta_.attributes.size();
    if (static_cast<std::size_t>(window.rows()) != k || static_cast<std::size_t>(window.cols()) != n) {
      throw Error(Errc::shape, "expected " + std::to_string(k) + "x" + std::to_string(n) + " window, got " +
                                   std::to_string(window.rows()) + "x" + std::to_string(window.cols()));
    }
  }

 protected:
  virtual Classification classify_checked(const WindowMatrix& window) const = 0;

 private:
  DetectorMeta meta_;
};

using DetectorPtr = std::shared_ptr<const Detector>;

/// Argmax with ties resolved toward the lower class index.
inline NoiseClass argmax_label(const std::array<double, kNoiseClassCount>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return noise_class_at(best);
}

/// Hook for retraining a detector on freshly sanitized history. No
/// implementation ships; the runtime only carries the interface.
class RetrainHook {
 public:
  virtual ~RetrainHook() = default;
  virtual DetectorPtr retrain(const DetectorPtr& current, const WeatherSeries& sanitized_history) = 0;
};

}  // namespace cerealia::detect
