#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "cerealia/core/series.hpp"
#include "cerealia/core/time.hpp"

namespace cerealia::testing {

/// Series whose column j is cols[j], 5-minute spacing from 2024-01-01.
inline WeatherSeries make_series(const std::vector<std::vector<double>>& cols,
                                 std::vector<std::string> names = {}) {
  WeatherSeries s;
  s.schema.sampling_interval = std::chrono::seconds{300};
  for (std::size_t j = 0; j < cols.size(); ++j) {
    s.schema.attributes.push_back({j < names.size() ? names[j] : "a" + std::to_string(j), "u"});
  }
  const std::size_t n = cols.empty() ? 0 : cols.front().size();
  for (std::size_t t = 0; t < n; ++t) {
    WeatherSample sample{from_unix(1704067200 + 300 * static_cast<std::int64_t>(t)), {}};
    for (const auto& c : cols) sample.values.push_back(c[t]);
    s.samples.push_back(std::move(sample));
  }
  return s;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("cerealia-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path path_;
};

}  // namespace cerealia::testing
