#pragma once

#include <unistd.h>

#include <json.hpp>

#include <algorithm>
#include <barrier>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/detect/detector.hpp"
#include "cerealia/ingest/synth.hpp"
#include "cerealia/runtime/alerts.hpp"
#include "cerealia/runtime/checker.hpp"

namespace cerealia::runtime {

struct BenchConfig {
  std::size_t samples = 1000;
  std::size_t instances = 1;
  std::size_t repetitions = 100;
  std::uint64_t seed = 7;

  void validate() const {
    if (samples < 1000) throw Error(Errc::config, "bench needs at least 1000 samples per stream");
    if (instances < 1) throw Error(Errc::config, "bench needs at least one instance");
    if (repetitions < 1) throw Error(Errc::config, "bench needs at least one repetition");
  }
};

struct BenchReport {
  std::size_t instances = 0;
  std::size_t samples = 0;
  std::size_t repetitions = 0;
  std::uint64_t seed = 0;
  std::size_t classify_calls = 0;  // timed calls over all instances
  double latency_mean = 0.0;       // seconds per classify call
  double latency_p95 = 0.0;
  std::int64_t memory_delta_per_instance = 0;  // bytes
  std::uint64_t label_digest = 0;
  bool labels_identical = true;
  double wall_seconds = 0.0;
};

inline nlohmann::json to_json(const BenchReport& r) {
  return {{"instances", r.instances},
          {"samples", r.samples},
          {"repetitions", r.repetitions},
          {"seed", r.seed},
          {"classify_calls", r.classify_calls},
          {"latency_mean_s", r.latency_mean},
          {"latency_p95_s", r.latency_p95},
          {"memory_delta_per_instance_bytes", r.memory_delta_per_instance},
          {"label_digest", r.label_digest},
          {"labels_identical", r.labels_identical},
          {"wall_seconds", r.wall_seconds}};
}

/// Resident set size of this process, from /proc/self/statm.
inline std::int64_t resident_bytes() {
  std::ifstream in("/proc/self/statm");
  std::int64_t size = 0;
  std::int64_t resident = 0;
  if (!(in >> size >> resident)) return 0;
  return resident * static_cast<std::int64_t>(::sysconf(_SC_PAGESIZE));
}

class DiscardAlertSink final : public AlertSink {
 public:
  bool deliver(const Alert&) override { return true; }
};

/// A synthetic stream in the detector's attribute layout: the default station
/// when the names match, otherwise unit-amplitude diurnal channels.
inline WeatherSeries bench_stream(const detect::Detector& d, std::size_t samples, std::uint64_t seed) {
  auto config = ingest::default_synth_config(seed, 1);
  std::vector<std::string> names;
  for (const auto& a : config.attributes) names.push_back(a.name);
  if (names != d.meta().attributes) {
    config.attributes.clear();
    for (const auto& n : d.meta().attributes) config.attributes.push_back({n, "", 0.0, 1.0, 0.0, 0.1});
  }
  const auto per_day = static_cast<std::size_t>(86400 / config.sampling_interval.count());
  config.days = (samples + per_day - 1) / per_day;
  auto series = ingest::synth_generate(config);
  series.samples.resize(samples);
  return series;
}

/// Runs `instances` checker loops concurrently, each over the same seeded
/// stream. Pass 0 warms up and records the label digest; memory is sampled
/// once every instance has finished it. The next `repetitions` passes time
/// each classify call.
inline BenchReport bench_inference(detect::DetectorPtr detector, const BenchConfig& config) {
  config.validate();
  const auto stream = bench_stream(*detector, config.samples, config.seed);
  CheckerConfig cc;
  cc.impute_on_flag = false;
  cc.window = {detector->meta().window_length, 1};
  cc.station = "bench";

  const auto wall0 = std::chrono::steady_clock::now();
  const std::int64_t rss_before = resident_bytes();
  std::int64_t rss_steady = rss_before;
  std::barrier sync(static_cast<std::ptrdiff_t>(config.instances) + 1);
  std::vector<std::vector<double>> latencies(config.instances);
  std::vector<std::uint64_t> digests(config.instances, 0);
  std::vector<std::exception_ptr> errors(config.instances);

  auto instance = [&](std::size_t k) {
    int phases = 0;
    try {
      DiscardAlertSink sink;
      std::uint64_t digest = 1469598103934665603ull;  // FNV-1a
      for (std::size_t rep = 0; rep <= config.repetitions; ++rep) {
        Checker checker(detector, nullptr, cc, nullptr, &sink);
        for (const auto& s : stream.samples) {
          const auto step = checker.push(s);
          if (!step.classification) continue;
          if (rep == 0) {
            digest = (digest ^ index_of(step.classification->label)) * 1099511628211ull;
          } else {
            latencies[k].push_back(step.classify_seconds);
          }
        }
        if (rep == 0) {
          digests[k] = digest;
          sync.arrive_and_wait();  // warm
          ++phases;
          sync.arrive_and_wait();  // memory sampled
          ++phases;
          latencies[k].reserve(config.repetitions * config.samples);
        }
      }
    } catch (...) {
      errors[k] = std::current_exception();
      if (phases < 2) sync.arrive_and_drop();
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(config.instances);
  for (std::size_t k = 0; k < config.instances; ++k) threads.emplace_back(instance, k);
  sync.arrive_and_wait();
  rss_steady = resident_bytes();
  sync.arrive_and_wait();
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  BenchReport r;
  r.instances = config.instances;
  r.samples = config.samples;
  r.repetitions = config.repetitions;
  r.seed = config.seed;
  std::vector<double> all;
  for (auto& l : latencies) all.insert(all.end(), l.begin(), l.end());
  r.classify_calls = all.size();
  if (!all.empty()) {
    r.latency_mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(all.size()))) - 1;
    std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(rank), all.end());
    r.latency_p95 = all[rank];
  }
  r.memory_delta_per_instance = (rss_steady - rss_before) / static_cast<std::int64_t>(config.instances);
  r.label_digest = digests.front();
  r.labels_identical = std::all_of(digests.begin(), digests.end(), [&](std::uint64_t d) { return d == digests.front(); });
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return r;
}

}  // namespace cerealia::runtime
