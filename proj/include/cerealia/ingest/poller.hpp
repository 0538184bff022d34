#pragma once

#include <httplib.h>
// <resolv.h> defines _res, which Eigen uses as a parameter name.
#undef _res
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>

#include "cerealia/core/error.hpp"
#include "cerealia/core/series.hpp"
#include "cerealia/core/time.hpp"

namespace cerealia::ingest {

/// {"ts": "<ISO-8601 UTC>", "values": {"<attr>": <number>, ...}}. Attributes
/// absent from `values` (or null) are read as missing.
inline WeatherSample sample_from_json(const nlohmann::json& j, const AttributeSchema& schema) {
  try {
    WeatherSample s;
    s.timestamp = parse_iso8601(j.at("ts").get<std::string>());
    const auto& values = j.at("values");
    if (!values.is_object()) throw Error(Errc::format, "'values' must be an object");
    s.values.assign(schema.arity(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < schema.arity(); ++k) {
      const auto it = values.find(schema.attributes[k].name);
      if (it != values.end() && !it->is_null()) s.values[k] = it->get<double>();
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::format, std::string("malformed sample: ") + e.what());
  }
}

inline nlohmann::json sample_to_json(const WeatherSample& s, const AttributeSchema& schema) {
  nlohmann::json values = nlohmann::json::object();
  for (std::size_t k = 0; k < schema.arity() && k < s.values.size(); ++k) {
    if (std::isnan(s.values[k])) {
      values[schema.attributes[k].name] = nullptr;
    } else {
      values[schema.attributes[k].name] = s.values[k];
    }
  }
  return {{"ts", format_iso8601(s.timestamp)}, {"values", values}};
}

struct Endpoint {
  std::string origin;  // scheme://host:port
  std::string path;
};

inline Endpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::config, "endpoint '" + url + "' lacks a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

struct BackoffPolicy {
  std::chrono::milliseconds base{1000};
  std::chrono::milliseconds cap{60000};

  /// Delay after the n-th consecutive failure (n >= 1): base * 2^(n-1), capped.
  std::chrono::milliseconds delay_after(std::uint64_t failures) const {
    if (failures == 0) return std::chrono::milliseconds{0};
    auto delay = base;
    for (std::uint64_t i = 1; i < failures && delay < cap; ++i) delay *= 2;
    return std::min(delay, cap);
  }
};

struct PollerHealth {
  std::uint64_t polls = 0;
  std::uint64_t failures = 0;
  std::uint64_t consecutive_failures = 0;
  std::uint64_t duplicates_dropped = 0;
  std::uint64_t emitted = 0;
  std::chrono::milliseconds current_backoff{0};
  std::string last_error;
};

/// Polls an HTTP endpoint that serves the latest station sample as JSON.
/// Emits samples in timestamp order; repeated or older timestamps are dropped.
/// Network failures never propagate: they grow an exponential backoff and are
/// visible through health().
class RemotePoller {
 public:
  RemotePoller(const std::string& endpoint_url, AttributeSchema schema, std::chrono::milliseconds interval,
               BackoffPolicy backoff = {})
      : endpoint_(parse_endpoint(endpoint_url)),
        schema_(std::move(schema)),
        interval_(interval),
        backoff_(backoff),
        client_(endpoint_.origin) {
    client_.set_connection_timeout(std::chrono::seconds{2});
    client_.set_read_timeout(std::chrono::seconds{5});
  }

  std::optional<WeatherSample> poll_once() {
    std::lock_guard lock(mutex_);
    ++health_.polls;
    auto res = client_.Get(endpoint_.path);
    if (!res || res->status != 200) {
      record_failure(res ? "HTTP status " + std::to_string(res->status) : httplib::to_string(res.error()));
      return std::nullopt;
    }
    WeatherSample sample;
    try {
      sample = sample_from_json(nlohmann::json::parse(res->body), schema_);
    } catch (const std::exception& e) {
      record_failure(e.what());
      return std::nullopt;
    }
    health_.consecutive_failures = 0;
    health_.current_backoff = std::chrono::milliseconds{0};
    if (last_ && sample.timestamp <= *last_) {
      ++health_.duplicates_dropped;
      return std::nullopt;
    }
    last_ = sample.timestamp;
    ++health_.emitted;
    return sample;
  }

  std::chrono::milliseconds next_delay() const {
    std::lock_guard lock(mutex_);
    return health_.consecutive_failures > 0 ? health_.current_backoff : interval_;
  }

  /// Runs until stopped, `max_samples` samples were emitted, or `max_polls`
  /// polls were made (zero means unlimited). Returns the number emitted.
  std::size_t run(std::stop_token stop, const std::function<void(const WeatherSample&)>& sink,
                  std::size_t max_samples = 0, std::size_t max_polls = 0) {
    std::size_t emitted = 0;
    std::size_t polls = 0;
    std::mutex wait_mutex;
    std::condition_variable_any wake;
    while (!stop.stop_requested()) {
      if (auto s = poll_once()) {
        sink(*s);
        ++emitted;
      }
      ++polls;
      if ((max_samples != 0 && emitted >= max_samples) || (max_polls != 0 && polls >= max_polls)) break;
      std::unique_lock lock(wait_mutex);
      wake.wait_for(lock, stop, next_delay(), [] { return false; });
    }
    return emitted;
  }

  PollerHealth health() const {
    std::lock_guard lock(mutex_);
    return health_;
  }

 private:
  void record_failure(std::string message) {
    ++health_.failures;
    ++health_.consecutive_failures;
    health_.current_backoff = backoff_.delay_after(health_.consecutive_failures);
    health_.last_error = std::move(message);
  }

  Endpoint endpoint_;
  AttributeSchema schema_;
  std::chrono::milliseconds interval_;
  BackoffPolicy backoff_;
  httplib::Client client_;
  mutable std::mutex mutex_;
  PollerHealth health_;
  std::optional<Timestamp> last_;
};

}  // namespace cerealia::ingest
