#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/detect/detector.hpp"
#include "cerealia/detect/features.hpp"
#include "cerealia/detect/training.hpp"
#include "cerealia/faults/dataset.hpp"
#include "cerealia/metrics/metrics.hpp"

namespace cerealia::detect {

struct StatDetectorConfig {
  double spike_z = 6.0;
  double level_shift_ratio = 1.5;
  double variance_ratio = 9.0;
  double flatness_epsilon = 1e-9;
  double validation_fraction = 0.2;
  std::uint64_t seed = 7;

  void validate() const {
    if (!(spike_z > 0.0 && level_shift_ratio > 0.0 && variance_ratio > 0.0 && flatness_epsilon > 0.0)) {
      throw Error(Errc::config, "statistical detector thresholds must be positive");
    }
  }
};

inline nlohmann::json to_json(const StatDetectorConfig& c) {
  return {{"spike_z", c.spike_z},
          {"level_shift_ratio", c.level_shift_ratio},
          {"variance_ratio", c.variance_ratio},
          {"flatness_epsilon", c.flatness_epsilon},
          {"validation_fraction", c.validation_fraction},
          {"seed", c.seed}};
}

inline StatDetectorConfig stat_config_from_json(const nlohmann::json& j) {
  StatDetectorConfig c;
  c.spike_z = j.value("spike_z", c.spike_z);
  c.level_shift_ratio = j.value("level_shift_ratio", c.level_shift_ratio);
  c.variance_ratio = j.value("variance_ratio", c.variance_ratio);
  c.flatness_epsilon = j.value("flatness_epsilon", c.flatness_epsilon);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.seed = j.value("seed", c.seed);
  return c;
}

/// Per-attribute reference levels measured on clean training windows.
struct CleanReference {
  std::vector<double> residual_rms;   // median-of-five residuals
  std::vector<double> diff_power;     // trimmed mean of squared first differences
  std::vector<double> half_shift_sd;  // spread of (second-half mean - first-half mean)
};

/// Raw rule inputs for one window, maximized over attributes.
struct StatSignals {
  double spike_z = 0.0;
  double variance_ratio = 0.0;
  double shift_ratio = 0.0;
  double min_block_diff_sd = 0.0;
};

namespace detail {

/// Mean of squared differences after dropping the largest tenth, so isolated
/// spikes do not read as broad variance.
inline double trimmed_diff_power(std::span<const double> x) {
  std::vector<double> sq(x.size() - 1);
  for (std::size_t t = 1; t < x.size(); ++t) sq[t - 1] = (x[t] - x[t - 1]) * (x[t] - x[t - 1]);
  std::sort(sq.begin(), sq.end());
  const std::size_t drop = (sq.size() + 9) / 10;
  const std::size_t keep = sq.size() > drop ? sq.size() - drop : sq.size();
  double s = 0.0;
  for (std::size_t i = 0; i < keep; ++i) s += sq[i];
  return s / static_cast<double>(keep);
}

inline double half_shift(std::span<const double> x) {
  const std::size_t h = x.size() / 2;
  double a = 0.0;
  double b = 0.0;
  for (std::size_t t = 0; t < h; ++t) a += x[t];
  for (std::size_t t = h; t < x.size(); ++t) b += x[t];
  return b / static_cast<double>(x.size() - h) - a / static_cast<double>(h);
}

inline std::vector<double> column(const WindowMatrix& w, Eigen::Index j) {
  std::vector<double> c(static_cast<std::size_t>(w.rows()));
  for (Eigen::Index t = 0; t < w.rows(); ++t) c[static_cast<std::size_t>(t)] = w(t, j);
  return c;
}

}  // namespace detail

inline CleanReference measure_reference(const std::vector<const WindowMatrix*>& clean) {
  if (clean.empty()) throw Error(Errc::empty_input, "no windows to measure a clean reference on");
  const auto n = static_cast<std::size_t>(clean.front()->cols());
  CleanReference ref{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  std::vector<double> shift_sum(n, 0.0);
  double residual_count = 0.0;
  for (const auto* w : clean) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto x = detail::column(*w, static_cast<Eigen::Index>(j));
      for (double r : median5_residuals(x)) ref.residual_rms[j] += r * r;
      ref.diff_power[j] += detail::trimmed_diff_power(x);
      const double s = detail::half_shift(x);
      shift_sum[j] += s;
      ref.half_shift_sd[j] += s * s;
    }
    residual_count += static_cast<double>(w->rows());
  }
  const auto count = static_cast<double>(clean.size());
  for (std::size_t j = 0; j < n; ++j) {
    ref.residual_rms[j] = std::max(std::sqrt(ref.residual_rms[j] / residual_count), 1e-12);
    ref.diff_power[j] = std::max(ref.diff_power[j] / count, 1e-24);
    const double mean = shift_sum[j] / count;
    ref.half_shift_sd[j] = std::max(std::sqrt(std::max(ref.half_shift_sd[j] / count - mean * mean, 0.0)), 1e-12);
  }
  return ref;
}

inline StatSignals stat_signals(const WindowMatrix& w, const CleanReference& ref) {
  StatSignals s;
  s.min_block_diff_sd = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    const auto ju = static_cast<std::size_t>(j);
    const auto x = detail::column(w, j);
    for (double r : median5_residuals(x)) s.spike_z = std::max(s.spike_z, std::abs(r) / ref.residual_rms[ju]);
    s.variance_ratio = std::max(s.variance_ratio, detail::trimmed_diff_power(x) / ref.diff_power[ju]);
    s.shift_ratio = std::max(s.shift_ratio, std::abs(detail::half_shift(x)) / ref.half_shift_sd[ju]);
    s.min_block_diff_sd = std::min(s.min_block_diff_sd, attribute_stats(x).min_block_diff_sd);
  }
  return s;
}

/// Threshold rules, checked in this order: a flat run -> bias; broad variance
/// -> malfunction; an isolated outlier -> random; a level shift -> drift, or
/// bias when the window also holds a flat run; otherwise clean.
inline NoiseClass apply_rules(const StatSignals& s, const StatDetectorConfig& c) {
  const bool flat = s.min_block_diff_sd <= c.flatness_epsilon;
  if (flat) return NoiseClass::bias;
  if (s.variance_ratio >= c.variance_ratio) return NoiseClass::malfunction;
  if (s.spike_z >= c.spike_z) return NoiseClass::random;
  if (s.shift_ratio >= c.level_shift_ratio) return NoiseClass::drift;
  return NoiseClass::clean;
}

class StatDetector final : public Detector {
 public:
  StatDetector(DetectorMeta meta, StatDetectorConfig config, CleanReference ref)
      : Detector(std::move(meta)), config_(config), ref_(std::move(ref)) {
    const auto n = this->meta().attributes.size();
    if (ref_.residual_rms.size() != n || ref_.diff_power.size() != n || ref_.half_shift_sd.size() != n) {
      throw Error(Errc::shape, "clean reference does not match the detector attributes");
    }
  }

  std::string kind() const override { return "stat"; }
  const StatDetectorConfig& config() const noexcept { return config_; }
  const CleanReference& reference() const noexcept { return ref_; }

  nlohmann::json payload() const override {
    return {{"config", to_json(config_)},
            {"reference",
             {{"residual_rms", ref_.residual_rms},
              {"diff_power", ref_.diff_power},
              {"half_shift_sd", ref_.half_shift_sd}}}};
  }

 protected:
  Classification classify_checked(const WindowMatrix& window) const override {
    Classification c;
    c.label = apply_rules(stat_signals(window, ref_), config_);
    c.scores.fill(0.025);
    c.scores[index_of(c.label)] = 0.9;
    return c;
  }

 private:
  StatDetectorConfig config_;
  CleanReference ref_;
};

/// Measures the clean reference on the training split, then grid-searches the
/// three thresholds (each at 0.5x to 2x its configured value) for the best
/// validation macro-F1. Ties keep the earlier grid point.
inline std::shared_ptr<const StatDetector> train_stat(const faults::LabeledDataset& ds,
                                                      const StatDetectorConfig& config = {}) {
  config.validate();
  if (ds.size() == 0) throw Error(Errc::empty_input, "cannot calibrate on an empty dataset");
  const bool can_split = ds.size() >= 10 && distinct_labels(ds) >= 2;
  Split split;
  if (can_split) {
    split = stratified_split(ds, config.validation_fraction, config.seed);
  } else {
    split.train = canonical_order(ds);
    split.validation = split.train;
  }
  std::vector<const WindowMatrix*> clean;
  for (auto i : split.train) {
    if (ds.labels[i] == NoiseClass::clean) clean.push_back(&ds.windows[i]);
  }
  if (clean.empty()) {
    for (auto i : split.train) clean.push_back(&ds.windows[i]);
  }
  const auto ref = measure_reference(clean);

  std::vector<StatSignals> signals;
  std::vector<NoiseClass> truth;
  for (auto i : split.validation) {
    signals.push_back(stat_signals(ds.windows[i], ref));
    truth.push_back(ds.labels[i]);
  }
  constexpr std::array<double, 5> grid{1.0, 0.5, 0.75, 1.5, 2.0};
  StatDetectorConfig best = config;
  double best_f1 = -1.0;
  std::vector<NoiseClass> predicted(signals.size());
  for (double a : grid) {
    for (double b : grid) {
      for (double c : grid) {
        StatDetectorConfig trial = config;
        trial.spike_z = config.spike_z * a;
        trial.variance_ratio = config.variance_ratio * b;
        trial.level_shift_ratio = config.level_shift_ratio * c;
        for (std::size_t k = 0; k < signals.size(); ++k) predicted[k] = apply_rules(signals[k], trial);
        const double f1 = metrics::classification_metrics(truth, predicted).macro_f1;
        if (f1 > best_f1) {
          best_f1 = f1;
          best = trial;
        }
      }
    }
  }
  return std::make_shared<const StatDetector>(DetectorMeta{ds.attributes, ds.window_length, ds.scaler}, best, ref);
}

}  // namespace cerealia::detect
