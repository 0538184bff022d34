#pragma once

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <fmt/format.h>

#include <cerrno>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/io.hpp"
#include "cerealia/core/series.hpp"
#include "cerealia/core/time.hpp"

namespace cerealia::runtime {

/// Directory for stores when no explicit path is given: $CEREALIA_DATA_DIR,
/// else ./cerealia-data.
inline std::filesystem::path data_dir() {
  if (const char* d = std::getenv("CEREALIA_DATA_DIR"); d != nullptr && *d != '\0') return d;
  return "cerealia-data";
}

inline std::filesystem::path default_store_path(const std::string& station) {
  return data_dir() / (station + ".history");
}

namespace detail {

inline std::uint32_t crc_of(std::string_view s) {
  return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

/// "<crc32 hex> <unix seconds> <v0> <v1> ...\n"; values use the shortest
/// round-trip form, missing ones are written as nan.
inline std::string encode_record(const WeatherSample& s) {
  std::string body = fmt::format("{}", to_unix(s.timestamp));
  for (double v : s.values) fmt::format_to(std::back_inserter(body), " {}", v);
  return fmt::format("{:08x} {}\n", crc_of(body), body);
}

/// Parses one line (without its newline); nullopt when malformed or the checksum fails.
inline std::optional<WeatherSample> decode_record(std::string_view line, std::size_t arity) {
  if (line.size() < 10 || line[8] != ' ') return std::nullopt;
  std::uint32_t crc = 0;
  if (std::from_chars(line.data(), line.data() + 8, crc, 16).ptr != line.data() + 8) return std::nullopt;
  const std::string body(line.substr(9));
  if (crc_of(body) != crc) return std::nullopt;
  const char* p = body.c_str();
  char* end = nullptr;
  errno = 0;
  const long long ts = std::strtoll(p, &end, 10);
  if (end == p || errno != 0) return std::nullopt;
  WeatherSample s{from_unix(ts), {}};
  s.values.reserve(arity);
  p = end;
  while (*p == ' ') {
    ++p;
    const double v = std::strtod(p, &end);
    if (end == p) return std::nullopt;
    s.values.push_back(v);
    p = end;
  }
  if (*p != '\0' || s.values.size() != arity) return std::nullopt;
  return s;
}

}  // namespace detail

/// Append-only sample log with a side index (`<path>.idx`, "count bytes").
/// Appends are written and fsynced before the index moves, so a crash can
/// only leave an unindexed tail; open() keeps the whole, checksummed records
/// of that tail and cuts the rest.
class HistoryStore {
 public:
  /// `max_bytes` caps the data file; 0 means unlimited.
  HistoryStore(std::filesystem::path path, std::size_t arity, std::uint64_t max_bytes = 0)
      : path_(std::move(path)), arity_(arity), max_bytes_(max_bytes) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(Errc::io, "cannot open store '" + path_.string() + "': " + std::strerror(errno));
    recover();
  }

  HistoryStore(const HistoryStore&) = delete;
  HistoryStore& operator=(const HistoryStore&) = delete;
  ~HistoryStore() {
    if (fd_ >= 0) ::close(fd_);
  }

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path index_path() const { return path_.string() + ".idx"; }
  std::size_t size() const noexcept { return count_; }
  std::uint64_t bytes() const noexcept { return bytes_; }

  void append(std::span<const WeatherSample> samples) {
    if (samples.empty()) return;
    std::string buf;
    for (const auto& s : samples) {
      if (s.values.size() != arity_) throw Error(Errc::shape, "sample arity does not match the store");
      buf += detail::encode_record(s);
    }
    if (max_bytes_ != 0 && bytes_ + buf.size() > max_bytes_) {
      throw Error(Errc::storage, "store '" + path_.string() + "' is full (" + std::to_string(max_bytes_) + " bytes)");
    }
    std::size_t done = 0;
    while (done < buf.size()) {
      const auto n = ::write(fd_, buf.data() + done, buf.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        const int err = errno;
        [[maybe_unused]] const int rc = ::ftruncate(fd_, static_cast<off_t>(bytes_));
        throw Error(err == ENOSPC || err == EDQUOT ? Errc::storage : Errc::io,
                    "cannot append to store '" + path_.string() + "': " + std::strerror(err));
      }
      done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw Error(Errc::storage, "cannot sync store '" + path_.string() + "'");
    bytes_ += buf.size();
    count_ += samples.size();
    write_index();
  }

  void append(const WeatherSample& s) { append(std::span<const WeatherSample>(&s, 1)); }

  /// Every indexed sample, in append order.
  std::vector<WeatherSample> read_all() const {
    const std::string data = read_file(path_.string());
    if (data.size() < bytes_) throw Error(Errc::storage, "store '" + path_.string() + "' is shorter than its index");
    std::vector<WeatherSample> out;
    out.reserve(count_);
    std::size_t pos = 0;
    while (pos < bytes_) {
      const auto nl = data.find('\n', pos);
      auto rec = nl == std::string::npos || nl >= bytes_ ? std::nullopt
                                                         : detail::decode_record(std::string_view(data).substr(pos, nl - pos), arity_);
      if (!rec) throw Error(Errc::storage, "corrupt record at byte " + std::to_string(pos) + " of '" + path_.string() + "'");
      out.push_back(std::move(*rec));
      pos = nl + 1;
    }
    return out;
  }

 private:
  void recover() {
    std::uint64_t idx_count = 0;
    std::uint64_t idx_bytes = 0;
    if (std::filesystem::exists(index_path())) {
      std::istringstream in(read_file(index_path().string()));
      if (!(in >> idx_count >> idx_bytes)) {
        idx_count = 0;
        idx_bytes = 0;
      }
    }
    const std::string data = read_file(path_.string());
    if (data.size() < idx_bytes) {  // index ahead of data: trust nothing, rescan
      idx_count = 0;
      idx_bytes = 0;
    }
    std::size_t pos = idx_bytes;
    std::size_t count = idx_count;
    while (pos < data.size()) {
      const auto nl = data.find('\n', pos);
      if (nl == std::string::npos) break;
      if (!detail::decode_record(std::string_view(data).substr(pos, nl - pos), arity_)) break;
      pos = nl + 1;
      ++count;
    }
    if (pos < data.size() && ::ftruncate(fd_, static_cast<off_t>(pos)) != 0) {
      throw Error(Errc::storage, "cannot trim the torn tail of '" + path_.string() + "'");
    }
    count_ = count;
    bytes_ = pos;
    if (count_ != idx_count || bytes_ != idx_bytes || !std::filesystem::exists(index_path())) write_index();
  }

  void write_index() { write_file_atomic(index_path().string(), fmt::format("{} {}\n", count_, bytes_)); }

  std::filesystem::path path_;
  std::size_t arity_;
  std::uint64_t max_bytes_;
  int fd_ = -1;
  std::size_t count_ = 0;
  std::uint64_t bytes_ = 0;
};

}  // namespace cerealia::runtime
