#pragma once

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/series.hpp"
#include "cerealia/detect/detector.hpp"
#include "cerealia/impute/ar.hpp"
#include "cerealia/runtime/alerts.hpp"
#include "cerealia/runtime/store.hpp"

namespace cerealia::runtime {

struct CheckerConfig {
  WindowSpec window{48, 1};
  bool impute_on_flag = true;
  std::string station = "station";
  std::size_t alert_capacity = AlertQueue::kDefaultCapacity;
};

inline nlohmann::json to_json(const CheckerConfig& c) {
  return {{"window_length", c.window.length},
          {"window_stride", c.window.stride},
          {"impute_on_flag", c.impute_on_flag},
          {"station", c.station},
          {"alert_capacity", c.alert_capacity}};
}

struct CheckerStatus {
  std::size_t samples = 0;
  std::size_t window_fill = 0;
  std::size_t windows_classified = 0;
  std::size_t windows_skipped = 0;  // held a missing value
  std::size_t alerts = 0;
  std::size_t alerts_pending = 0;
  std::uint64_t alerts_dropped = 0;
  std::uint64_t alerts_delivered = 0;
  std::size_t committed = 0;
  std::size_t imputed = 0;
  std::size_t store_backlog = 0;
  std::string store_error;
};

inline nlohmann::json to_json(const CheckerStatus& s) {
  return {{"samples", s.samples},
          {"window_fill", s.window_fill},
          {"windows_classified", s.windows_classified},
          {"windows_skipped", s.windows_skipped},
          {"alerts", s.alerts},
          {"alerts_pending", s.alerts_pending},
          {"alerts_dropped", s.alerts_dropped},
          {"alerts_delivered", s.alerts_delivered},
          {"committed", s.committed},
          {"imputed", s.imputed},
          {"store_backlog", s.store_backlog},
          {"store_error", s.store_error}};
}

/// One station's streaming loop. Keeps the trailing window, classifies it
/// every `stride` samples, and raises one alert per non-clean window. A
/// sample is committed (imputed if any window holding it was flagged, then
/// appended to the store) once it has left the trailing window.
class Checker {
 public:
  struct Step {
    std::optional<detect::Classification> classification;
    double classify_seconds = 0.0;
    std::optional<Alert> alert;
    std::vector<WeatherSample> committed;
  };

  Checker(detect::DetectorPtr detector, std::shared_ptr<const impute::ArImputer> imputer, CheckerConfig config,
          HistoryStore* store = nullptr, AlertSink* sink = nullptr)
      : detector_(std::move(detector)),
        imputer_(std::move(imputer)),
        config_(std::move(config)),
        store_(store),
        sink_(sink),
        queue_(config_.alert_capacity) {
    if (!detector_) throw Error(Errc::config, "checker needs a detector");
    config_.window.validate();
    const auto& meta = detector_->meta();
    if (config_.window.length != meta.window_length) {
      throw Error(Errc::config, "checker window of " + std::to_string(config_.window.length) +
                                    " does not match the detector's " + std::to_string(meta.window_length));
    }
    arity_ = meta.attributes.size();
    if (config_.impute_on_flag && imputer_) {
      if (imputer_->schema().names() != meta.attributes) {
        throw Error(Errc::config, "imputer attributes do not match the detector");
      }
      context_.resize(arity_);
    }
    if (store_ != nullptr && store_->size() > 0 && !context_.empty()) {
      const auto history = store_->read_all();
      const std::size_t p = imputer_->lags();
      const std::size_t from = history.size() > p ? history.size() - p : 0;
      seed_history(std::span<const WeatherSample>(history).subspan(from));
    }
  }

  const CheckerConfig& config() const noexcept { return config_; }
  const detect::Detector& detector() const noexcept { return *detector_; }

  /// Preloads the imputation context, e.g. with the tail of a clean history.
  void seed_history(std::span<const WeatherSample> samples) {
    if (context_.empty()) return;
    for (const auto& s : samples) {
      check_arity(s);
      remember(s, false);
    }
  }

  /// Accepts the next sample. Timestamps must increase. When the store fails
  /// the sample is still accepted; the error is rethrown and the unsaved
  /// samples are retried on the next push (or flush_store()).
  Step push(const WeatherSample& sample) {
    check_arity(sample);
    if (last_ts_ && sample.timestamp <= *last_ts_) {
      throw Error(Errc::range, "sample at " + format_iso8601(sample.timestamp) + " is not after " +
                                   format_iso8601(*last_ts_));
    }
    last_ts_ = sample.timestamp;
    ++samples_;
    Step step;
    buffer_.push_back({sample, false});
    if (buffer_.size() > config_.window.length) {
      step.committed.push_back(commit(buffer_.front()));
      buffer_.pop_front();
    }
    if (buffer_.size() == config_.window.length && (samples_ - config_.window.length) % config_.window.stride == 0) {
      classify(step);
    }
    persist(step.committed);
    return step;
  }

  /// Commits everything still in the trailing window.
  std::vector<WeatherSample> finish() {
    std::vector<WeatherSample> out;
    while (!buffer_.empty()) {
      out.push_back(commit(buffer_.front()));
      buffer_.pop_front();
    }
    persist(out);
    return out;
  }

  void flush_store() { persist({}); }

  /// Retries alert delivery.
  void flush_alerts() {
    if (sink_ != nullptr) queue_.flush(*sink_);
  }

  CheckerStatus status() const {
    CheckerStatus s;
    s.samples = samples_;
    s.window_fill = buffer_.size();
    s.windows_classified = classified_;
    s.windows_skipped = skipped_;
    s.alerts = alerts_;
    s.alerts_pending = queue_.pending();
    s.alerts_dropped = queue_.dropped();
    s.alerts_delivered = queue_.delivered();
    s.committed = committed_;
    s.imputed = imputed_;
    s.store_backlog = backlog_.size();
    s.store_error = store_error_;
    return s;
  }

 private:
  struct Pending {
    WeatherSample sample;
    bool flagged;
  };

  void check_arity(const WeatherSample& s) const {
    if (s.values.size() != arity_) {
      throw Error(Errc::shape, "sample has " + std::to_string(s.values.size()) + " values, expected " +
                                   std::to_string(arity_));
    }
  }

  void classify(Step& step) {
    WindowMatrix raw(static_cast<Eigen::Index>(buffer_.size()), static_cast<Eigen::Index>(arity_));
    bool missing = false;
    for (std::size_t t = 0; t < buffer_.size(); ++t) {
      for (std::size_t j = 0; j < arity_; ++j) {
        const double v = buffer_[t].sample.values[j];
        missing = missing || !std::isfinite(v);
        raw(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = v;
      }
    }
    if (missing) {
      ++skipped_;
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = detector_->classify_raw(raw);
    step.classify_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    step.classification = c;
    ++classified_;
    if (c.label == NoiseClass::clean) return;
    for (auto& p : buffer_) p.flagged = true;
    Alert a{++alerts_, config_.station, buffer_.front().sample.timestamp, buffer_.back().sample.timestamp, c.label,
            c.scores};
    step.alert = a;
    queue_.push(std::move(a));
    flush_alerts();
  }

  WeatherSample commit(const Pending& p) {
    WeatherSample out = p.sample;
    if (p.flagged && config_.impute_on_flag && imputer_) {
      const std::size_t lags = imputer_->lags();
      for (std::size_t j = 0; j < arity_; ++j) {
        if (context_[j].size() < lags) {
          throw Error(Errc::warmup, "flagged sample at " + format_iso8601(p.sample.timestamp) + " has fewer than " +
                                        std::to_string(lags) + " trusted samples before it");
        }
        out.values[j] = predict(j, out.timestamp);
      }
      ++imputed_;
    }
    if (!context_.empty()) remember(out, p.flagged);
    ++committed_;
    return out;
  }

  double predict(std::size_t j, Timestamp at) {
    lag_scratch_.assign(context_[j].begin(), context_[j].end());
    return imputer_->predict(j, lag_scratch_, at);
  }

  void remember(const WeatherSample& s, bool imputed) {
    const std::size_t lags = imputer_->lags();
    for (std::size_t j = 0; j < arity_; ++j) {
      double v = s.values[j];
      if (!imputed && !std::isfinite(v)) {
        if (context_[j].size() < lags) {
          context_[j].clear();
          continue;
        }
        v = predict(j, s.timestamp);
      }
      context_[j].push_back(v);
      if (context_[j].size() > lags) context_[j].pop_front();
    }
  }

  void persist(const std::vector<WeatherSample>& committed) {
    if (store_ == nullptr) return;
    backlog_.insert(backlog_.end(), committed.begin(), committed.end());
    if (backlog_.empty()) return;
    try {
      store_->append(backlog_);
      backlog_.clear();
      store_error_.clear();
    } catch (const Error& e) {
      store_error_ = e.what();
      throw;
    }
  }

  detect::DetectorPtr detector_;
  std::shared_ptr<const impute::ArImputer> imputer_;
  CheckerConfig config_;
  HistoryStore* store_;
  AlertSink* sink_;
  AlertQueue queue_;
  std::size_t arity_ = 0;

  std::deque<Pending> buffer_;
  std::vector<std::deque<double>> context_;
  std::vector<double> lag_scratch_;
  std::vector<WeatherSample> backlog_;
  std::optional<Timestamp> last_ts_;
  std::size_t samples_ = 0;
  std::size_t classified_ = 0;
  std::size_t skipped_ = 0;
  std::size_t alerts_ = 0;
  std::size_t committed_ = 0;
  std::size_t imputed_ = 0;
  std::string store_error_;
};

struct CheckerRun {
  std::vector<WeatherSample> sanitized;
  std::vector<Alert> alerts;
  std::vector<NoiseClass> labels;  // one per classified window
  CheckerStatus status;
};

/// Runs a whole stream through a fresh checker.
inline CheckerRun run_checker(std::span<const WeatherSample> stream, detect::DetectorPtr detector,
                              std::shared_ptr<const impute::ArImputer> imputer, const CheckerConfig& config,
                              HistoryStore* store = nullptr, AlertSink* sink = nullptr,
                              std::span<const WeatherSample> warmup = {}) {
  Checker checker(std::move(detector), std::move(imputer), config, store, sink);
  checker.seed_history(warmup);
  CheckerRun run;
  for (const auto& s : stream) {
    auto step = checker.push(s);
    if (step.classification) run.labels.push_back(step.classification->label);
    if (step.alert) run.alerts.push_back(std::move(*step.alert));
    for (auto& c : step.committed) run.sanitized.push_back(std::move(c));
  }
  for (auto& c : checker.finish()) run.sanitized.push_back(std::move(c));
  run.status = checker.status();
  return run;
}

}  // namespace cerealia::runtime
