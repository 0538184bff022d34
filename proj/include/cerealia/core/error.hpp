#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cerealia {

enum class Errc {
  empty_input,
  schema,
  range,
  shape,
  format,
  parse,
  incompatible,
  degenerate,
  divergence,
  numerical,
  storage,
  config,
  usage,
  io,
  warmup,
};

constexpr std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::empty_input: return "empty_input";
    case Errc::schema: return "schema";
    case Errc::range: return "range";
    case Errc::shape: return "shape";
    case Errc::format: return "format";
    case Errc::parse: return "parse";
    case Errc::incompatible: return "incompatible";
    case Errc::degenerate: return "degenerate";
    case Errc::divergence: return "divergence";
    case Errc::numerical: return "numerical";
    case Errc::storage: return "storage";
    case Errc::config: return "config";
    case Errc::usage: return "usage";
    case Errc::io: return "io";
    case Errc::warmup: return "warmup";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message) : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cerealia
