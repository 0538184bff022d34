#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <string>
#include <string_view>

#include "cerealia/core/error.hpp"

namespace cerealia {

using Timestamp = std::chrono::sys_seconds;

inline Timestamp from_unix(std::int64_t seconds) { return Timestamp{std::chrono::seconds{seconds}}; }

inline std::int64_t to_unix(Timestamp ts) { return ts.time_since_epoch().count(); }

/// Parses `text` with a strptime pattern, interpreting the fields as UTC.
/// The whole string must be consumed.
inline Timestamp parse_timestamp(std::string_view text, const std::string& pattern) {
  const std::string buffer(text);
  std::tm tm{};
  const char* end = ::strptime(buffer.c_str(), pattern.c_str(), &tm);
  if (end == nullptr || *end != '\0') {
    throw Error(Errc::parse, "unparseable timestamp '" + buffer + "' for pattern '" + pattern + "'");
  }
  return from_unix(static_cast<std::int64_t>(::timegm(&tm)));
}

inline constexpr const char* kIsoUtcPattern = "%Y-%m-%dT%H:%M:%SZ";

inline Timestamp parse_iso8601(std::string_view text) { return parse_timestamp(text, kIsoUtcPattern); }

inline std::string format_timestamp(Timestamp ts, const char* pattern = kIsoUtcPattern) {
  const std::time_t t = static_cast<std::time_t>(to_unix(ts));
  std::tm tm{};
  ::gmtime_r(&t, &tm);
  char buf[64];
  const auto n = std::strftime(buf, sizeof buf, pattern, &tm);
  return std::string(buf, n);
}

inline std::string format_iso8601(Timestamp ts) { return format_timestamp(ts); }

/// Fractional hour of the UTC day, in [0, 24).
inline double hour_of_day(Timestamp ts) {
  const auto secs = to_unix(ts);
  auto in_day = secs % 86400;
  if (in_day < 0) in_day += 86400;
  return static_cast<double>(in_day) / 3600.0;
}

/// Fractional days since 1 January (UTC) of the timestamp's year, in [0, 366).
inline double day_of_year(Timestamp ts) {
  using namespace std::chrono;
  const auto day = floor<days>(ts);
  const year_month_day ymd{day};
  const sys_days jan1{ymd.year() / January / 1};
  return static_cast<double>((ts - sys_seconds{jan1}).count()) / 86400.0;
}

}  // namespace cerealia
