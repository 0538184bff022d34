#pragma once

#include <httplib.h>
// <resolv.h> defines _res, which Eigen uses as a parameter name.
#undef _res
#include <json.hpp>

#include <array>
#include <cstdint>
#include <deque>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/noise_class.hpp"
#include "cerealia/core/time.hpp"
#include "cerealia/ingest/poller.hpp"

namespace cerealia::runtime {

/// One flagged window. `sequence` counts alerts per checker from 1.
struct Alert {
  std::uint64_t sequence = 0;
  std::string station;
  Timestamp begin{};
  Timestamp end{};
  NoiseClass label = NoiseClass::random;
  std::array<double, kNoiseClassCount> scores{};
};

inline nlohmann::json to_json(const Alert& a) {
  nlohmann::json scores = nlohmann::json::object();
  for (std::size_t i = 0; i < kNoiseClassCount; ++i) scores[std::string(to_string(noise_class_at(i)))] = a.scores[i];
  return {{"sequence", a.sequence},
          {"station", a.station},
          {"begin", format_iso8601(a.begin)},
          {"end", format_iso8601(a.end)},
          {"label", std::string(to_string(a.label))},
          {"scores", scores}};
}

/// Destination for alerts. deliver() returns false when the sink cannot take
/// the alert right now; the caller keeps it and retries later.
class AlertSink {
 public:
  virtual ~AlertSink() = default;
  virtual bool deliver(const Alert& alert) = 0;
};

/// Appends one JSON object per line.
class FileAlertSink final : public AlertSink {
 public:
  explicit FileAlertSink(std::string path) : path_(std::move(path)) {}

  bool deliver(const Alert& alert) override {
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::app);
    if (!out) return false;
    out << to_json(alert).dump() << '\n';
    return static_cast<bool>(out.flush());
  }

 private:
  std::string path_;
  std::mutex mutex_;
};

class MemoryAlertSink final : public AlertSink {
 public:
  bool deliver(const Alert& alert) override {
    std::lock_guard lock(mutex_);
    if (!online_) return false;
    alerts_.push_back(alert);
    return true;
  }

  void set_online(bool online) {
    std::lock_guard lock(mutex_);
    online_ = online;
  }

  std::vector<Alert> alerts() const {
    std::lock_guard lock(mutex_);
    return alerts_;
  }

 private:
  mutable std::mutex mutex_;
  bool online_ = true;
  std::vector<Alert> alerts_;
};

/// POSTs each alert as JSON to an http:// URL.
class HttpAlertSink final : public AlertSink {
 public:
  explicit HttpAlertSink(const std::string& url) : endpoint_(ingest::parse_endpoint(url)) {}

  bool deliver(const Alert& alert) override {
    std::lock_guard lock(mutex_);
    httplib::Client client(endpoint_.origin);
    client.set_connection_timeout(2, 0);
    client.set_read_timeout(5, 0);
    const auto res = client.Post(endpoint_.path, to_json(alert).dump(), "application/json");
    return res && res->status >= 200 && res->status < 300;
  }

 private:
  ingest::Endpoint endpoint_;
  std::mutex mutex_;
};

/// "http://..." becomes an HTTP sink, anything else a file path.
inline std::unique_ptr<AlertSink> make_alert_sink(const std::string& target) {
  if (target.rfind("http://", 0) == 0) return std::make_unique<HttpAlertSink>(target);
  return std::make_unique<FileAlertSink>(target);
}

/// Bounded FIFO between checkers and a sink. When full, the oldest alert is
/// dropped and counted. Safe for concurrent producers.
class AlertQueue {
 public:
  static constexpr std::size_t kDefaultCapacity = 10000;

  explicit AlertQueue(std::size_t capacity = kDefaultCapacity) : capacity_(capacity) {
    if (capacity_ == 0) throw Error(Errc::config, "alert queue capacity must be >= 1");
  }

  void push(Alert alert) {
    std::lock_guard lock(mutex_);
    if (pending_.size() == capacity_) {
      pending_.pop_front();
      ++dropped_;
    }
    pending_.push_back(std::move(alert));
  }

  /// Delivers in order until the sink refuses one. Returns the number delivered.
  std::size_t flush(AlertSink& sink) {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    while (!pending_.empty() && sink.deliver(pending_.front())) {
      pending_.pop_front();
      ++n;
    }
    delivered_ += n;
    return n;
  }

  std::size_t pending() const {
    std::lock_guard lock(mutex_);
    return pending_.size();
  }
  std::uint64_t dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }
  std::uint64_t delivered() const {
    std::lock_guard lock(mutex_);
    return delivered_;
  }
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::deque<Alert> pending_;
  std::uint64_t dropped_ = 0;
  std::uint64_t delivered_ = 0;
};

}  // namespace cerealia::runtime
