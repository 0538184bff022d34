#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/noise_class.hpp"
#include "cerealia/core/rng.hpp"
#include "cerealia/core/series.hpp"
#include "cerealia/faults/injectors.hpp"

namespace cerealia::faults {

/// Knobs shared by window-level fault placement (datasets and series corruption).
struct PlacementConfig {
  std::size_t min_fault_length = 24;
  std::size_t max_fault_length = 96;  // clipped to the window length
  double random_density = 0.1;       // inside the fault segment
  /// When false, one uniformly chosen attribute per fault; when true, every attribute.
  bool all_attributes = false;
  /// A placement whose effect is below this many clean stddevs of the
  /// attribute is redrawn (new attribute, segment and seed). The effect is the
  /// offset X(t0) * intensity for drift and the largest change otherwise.
  double min_effect = 1.0;
  std::size_t max_attempts = 32;
  RandomFaultSpec random{};
  MalfunctionFaultSpec malfunction{};
  DriftFaultSpec drift{};
  BiasFaultSpec bias{};
};

struct DatasetConfig {
  double pct_inconsistent = 25.0;
  WindowSpec window{};
  std::uint64_t seed = 7;
  /// Every faulty window gets this class instead of the round-robin split.
  std::optional<NoiseClass> only_class;
  PlacementConfig placement{};
  std::size_t min_windows = 100;
};

/// One applied fault, in series coordinates; enough to replay it exactly.
struct FaultRecord {
  NoiseClass label = NoiseClass::clean;
  std::vector<std::string> attributes;
  IndexWindow window;
  nlohmann::json params;
  std::uint64_t seed = 0;
  std::optional<std::size_t> window_index;
};

struct DatasetProvenance {
  std::string source;
  std::uint64_t seed = 0;
  double pct_inconsistent = 0.0;
};

struct LabeledDataset {
  std::vector<std::string> attributes;
  std::size_t window_length = 0;
  std::vector<WindowMatrix> windows;  // standardized
  std::vector<NoiseClass> labels;
  std::vector<std::size_t> starts;  // series index of each window's first sample
  ScalerParams scaler;
  DatasetProvenance provenance;
  std::vector<FaultRecord> manifest;

  std::size_t size() const noexcept { return windows.size(); }
  std::size_t arity() const noexcept { return attributes.size(); }
};

namespace detail {

/// Faults one column with `label` over `w`; `params` receives the spec used.
inline ColumnFault fault_column(std::span<const double> x, NoiseClass label, const IndexWindow& w,
                                std::uint64_t seed, const PlacementConfig& pc, nlohmann::json& params) {
  switch (label) {
    case NoiseClass::random: {
      auto spec = pc.random;
      spec.density = pc.random_density;
      spec.window = w;
      spec.seed = seed;
      params = to_json(spec);
      return fault_random(x, spec);
    }
    case NoiseClass::malfunction: {
      auto spec = pc.malfunction;
      spec.window = w;
      spec.seed = seed;
      params = to_json(spec);
      return fault_malfunction(x, spec);
    }
    case NoiseClass::drift: {
      auto spec = pc.drift;
      spec.window = w;
      spec.seed = seed;
      params = to_json(spec);
      return fault_drift(x, spec);
    }
    case NoiseClass::bias: {
      auto spec = pc.bias;
      spec.window = w;
      params = to_json(spec);
      return fault_bias(x, spec);
    }
    case NoiseClass::clean:
      break;
  }
  throw Error(Errc::config, "cannot inject the clean class");
}

inline double max_change(std::span<const double> before, std::span<const double> after, const IndexWindow& w) {
  double m = 0.0;
  for (std::size_t i = w.begin; i < w.end; ++i) {
    const double d = std::abs(after[i] - before[i]);
    if (!std::isnan(d)) m = std::max(m, d);
  }
  return m;
}

}  // namespace detail

/// Places one `label` fault entirely inside [region_begin, region_begin + region_length)
/// of `series`, modifying it in place. Draws come from `rng`; the chosen
/// attributes, segment and per-fault seed are returned as a record.
inline FaultRecord place_fault(WeatherSeries& series, std::size_t region_begin, std::size_t region_length,
                               NoiseClass label, Rng& rng, const ScalerParams& clean_scale,
                               const PlacementConfig& pc, std::vector<bool>* mask = nullptr) {
  const std::size_t arity = series.arity();
  const std::size_t lo = std::min(pc.min_fault_length, region_length);
  const std::size_t hi = std::clamp(pc.max_fault_length, lo, region_length);
  FaultRecord rec;
  rec.label = label;
  std::vector<std::pair<std::size_t, ColumnFault>> applied;
  for (std::size_t attempt = 0; attempt < std::max<std::size_t>(pc.max_attempts, 1); ++attempt) {
    applied.clear();
    std::vector<std::size_t> columns;
    if (pc.all_attributes) {
      columns.resize(arity);
      std::iota(columns.begin(), columns.end(), std::size_t{0});
    } else {
      columns.push_back(static_cast<std::size_t>(rng.below(arity)));
    }
    const auto length = static_cast<std::size_t>(rng.between(lo, hi));
    const auto offset = static_cast<std::size_t>(rng.below(region_length - length + 1));
    rec.window = {region_begin + offset, region_begin + offset + length};
    rec.seed = rng.next_u64();
    bool strong = false;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto j = columns[c];
      const auto x = series.column(j);
      // Each attribute of a multi-attribute fault gets its own stream.
      const auto column_seed = columns.size() == 1 ? rec.seed : derive_seed(rec.seed, j);
      auto fault = detail::fault_column(x, label, rec.window, column_seed, pc, rec.params);
      // Drift is judged by its offset; the other classes by their largest change.
      const double effect = label == NoiseClass::drift && fault.drawn_intensity
                                ? std::abs(*fault.drawn_intensity * x[rec.window.begin])
                                : detail::max_change(x, fault.values, rec.window);
      if (effect >= pc.min_effect * clean_scale.stddev[j]) strong = true;
      applied.emplace_back(j, std::move(fault));
    }
    if (strong || attempt + 1 >= pc.max_attempts) break;
  }
  rec.attributes.clear();
  for (auto& [j, fault] : applied) {
    rec.attributes.push_back(series.schema.attributes[j].name);
    series.set_column(j, fault.values);
    if (mask) {
      for (auto i : fault.mask) (*mask)[i] = true;
    }
  }
  if (pc.all_attributes) rec.params["all_attributes"] = true;
  return rec;
}

/// Replays a recorded fault onto `series` in place.
inline void replay_fault(WeatherSeries& series, const FaultRecord& rec) {
  for (const auto& name : rec.attributes) {
    const auto j = series.schema.require_index(name);
    const auto x = series.column(j);
    const auto seed = rec.attributes.size() == 1 ? rec.seed : derive_seed(rec.seed, j);
    ColumnFault fault;
    switch (rec.label) {
      case NoiseClass::random: {
        auto spec = random_spec_from_json(rec.params);
        spec.seed = seed;
        fault = fault_random(x, spec);
        break;
      }
      case NoiseClass::malfunction: {
        auto spec = malfunction_spec_from_json(rec.params);
        spec.seed = seed;
        fault = fault_malfunction(x, spec);
        break;
      }
      case NoiseClass::drift: {
        auto spec = drift_spec_from_json(rec.params);
        spec.seed = seed;
        fault = fault_drift(x, spec);
        break;
      }
      case NoiseClass::bias:
        fault = fault_bias(x, bias_spec_from_json(rec.params));
        break;
      case NoiseClass::clean:
        throw Error(Errc::config, "manifest entry carries the clean class");
    }
    series.set_column(j, fault.values);
  }
}

/// Windows to fault and their classes: round(W * pct / 100) windows chosen by
/// a seeded shuffle, classes assigned round-robin over the four fault classes.
inline std::vector<NoiseClass> assign_labels(std::size_t window_total, double pct, std::uint64_t seed,
                                             std::optional<NoiseClass> only_class = std::nullopt) {
  if (!(pct >= 0.0 && pct <= 100.0)) throw Error(Errc::config, "inconsistency percentage must lie in [0, 100]");
  if (only_class && *only_class == NoiseClass::clean) throw Error(Errc::config, "cannot inject the clean class");
  const auto faulty = static_cast<std::size_t>(std::llround(static_cast<double>(window_total) * pct / 100.0));
  std::vector<std::size_t> order(window_total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<NoiseClass> labels(window_total, NoiseClass::clean);
  for (std::size_t i = 0; i < faulty; ++i) {
    labels[order[i]] = only_class ? *only_class : kFaultClasses[i % kFaultClasses.size()];
  }
  return labels;
}

/// Builds standardized labeled windows. Each faulty window is a private copy of
/// the clean samples with exactly one fault placed inside it, so overlapping
/// neighbours stay clean. The scaler is fit on samples covered by clean windows.
inline LabeledDataset build_labeled_dataset(const WeatherSeries& series, const DatasetConfig& config,
                                            std::string source = "series") {
  config.window.validate();
  const std::size_t total = window_count(series.size(), config.window);
  if (total < config.min_windows) {
    throw Error(Errc::empty_input, "series yields " + std::to_string(total) + " windows; at least " +
                                       std::to_string(config.min_windows) + " are required");
  }
  const auto starts = window_starts(series.size(), config.window);
  const auto labels = assign_labels(total, config.pct_inconsistent, config.seed, config.only_class);
  const std::size_t len = config.window.length;

  std::vector<bool> covered(series.size(), false);
  for (std::size_t w = 0; w < total; ++w) {
    if (labels[w] != NoiseClass::clean) continue;
    std::fill(covered.begin() + static_cast<std::ptrdiff_t>(starts[w]),
              covered.begin() + static_cast<std::ptrdiff_t>(starts[w] + len), true);
  }
  ScalerFitter fitter(series.arity());
  bool any = false;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (covered[i]) {
      fitter.add(series.samples[i].values);
      any = true;
    }
  }
  if (!any) {
    for (const auto& s : series.samples) fitter.add(s.values);
  }

  LabeledDataset ds;
  ds.attributes = series.schema.names();
  ds.window_length = len;
  ds.scaler = fitter.finish();
  ds.provenance = {std::move(source), config.seed, config.pct_inconsistent};
  ds.windows.reserve(total);
  ds.labels = labels;
  ds.starts = starts;
  for (std::size_t w = 0; w < total; ++w) {
    WindowMatrix m;
    if (labels[w] == NoiseClass::clean) {
      m = window_matrix(std::span<const WeatherSample>(series.samples).subspan(starts[w], len), series.arity());
    } else {
      WeatherSeries copy = series.slice(starts[w], starts[w] + len);
      Rng rng(derive_seed(config.seed, w));
      auto rec = place_fault(copy, 0, len, labels[w], rng, ds.scaler, config.placement);
      rec.window = {rec.window.begin + starts[w], rec.window.end + starts[w]};
      if (rec.params.contains("window")) rec.params["window"] = to_json(rec.window);
      rec.window_index = w;
      ds.manifest.push_back(std::move(rec));
      m = window_matrix(copy.samples, series.arity());
    }
    standardize_in_place(ds.scaler, m);
    ds.windows.push_back(std::move(m));
  }
  return ds;
}

/// A series with non-overlapping faulted windows (stride = window length).
struct CorruptedSeries {
  WeatherSeries series;
  std::vector<bool> mask;          // per sample: value altered
  std::vector<NoiseClass> labels;  // per non-overlapping window
  std::vector<FaultRecord> manifest;
};

inline CorruptedSeries corrupt_series(const WeatherSeries& clean, double pct, std::size_t window_length,
                                      std::uint64_t seed, const PlacementConfig& pc = {},
                                      std::optional<NoiseClass> only_class = std::nullopt) {
  const WindowSpec spec{window_length, window_length};
  const auto starts = window_starts(clean.size(), spec);
  CorruptedSeries out{clean, std::vector<bool>(clean.size(), false),
                      assign_labels(starts.size(), pct, seed, only_class), {}};
  const auto scale = fit_scaler(clean);
  for (std::size_t w = 0; w < starts.size(); ++w) {
    if (out.labels[w] == NoiseClass::clean) continue;
    Rng rng(derive_seed(seed, w));
    auto rec = place_fault(out.series, starts[w], window_length, out.labels[w], rng, scale, pc, &out.mask);
    rec.window_index = w;
    out.manifest.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const FaultRecord& r) {
  nlohmann::json j{{"class", std::string(to_string(r.label))},
                   {"attribute", r.attributes.size() == 1 ? nlohmann::json(r.attributes.front())
                                                          : nlohmann::json(r.attributes)},
                   {"window", to_json(r.window)},
                   {"params", r.params},
                   {"seed", r.seed}};
  if (r.window_index) j["window_index"] = *r.window_index;
  return j;
}

inline FaultRecord fault_record_from_json(const nlohmann::json& j) {
  FaultRecord r;
  r.label = parse_noise_class(j.at("class").get<std::string>());
  const auto& a = j.at("attribute");
  if (a.is_array()) {
    r.attributes = a.get<std::vector<std::string>>();
  } else {
    r.attributes = {a.get<std::string>()};
  }
  r.window = window_from_json(j.at("window"));
  r.params = j.at("params");
  r.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("window_index")) r.window_index = j.at("window_index").get<std::size_t>();
  return r;
}

inline nlohmann::json manifest_to_json(const std::vector<FaultRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) arr.push_back(to_json(r));
  return arr;
}

inline std::vector<FaultRecord> manifest_from_json(const nlohmann::json& j) {
  std::vector<FaultRecord> out;
  for (const auto& e : j) out.push_back(fault_record_from_json(e));
  return out;
}

inline nlohmann::json to_json(const ScalerParams& s) { return {{"mean", s.mean}, {"stddev", s.stddev}}; }

inline ScalerParams scaler_from_json(const nlohmann::json& j) {
  ScalerParams s{j.at("mean").get<std::vector<double>>(), j.at("stddev").get<std::vector<double>>()};
  if (s.mean.size() != s.stddev.size()) throw Error(Errc::format, "scaler mean/stddev lengths differ");
  return s;
}

inline nlohmann::json dataset_to_json(const LabeledDataset& ds) {
  nlohmann::json windows = nlohmann::json::array();
  for (std::size_t w = 0; w < ds.size(); ++w) {
    const auto& m = ds.windows[w];
    windows.push_back({{"label", std::string(to_string(ds.labels[w]))},
                       {"start", ds.starts[w]},
                       {"values", std::vector<double>(m.data(), m.data() + m.size())}});
  }
  return {{"format", "cerealia-dataset"},
          {"version", 1},
          {"attributes", ds.attributes},
          {"window_length", ds.window_length},
          {"scaler", to_json(ds.scaler)},
          {"provenance",
           {{"source", ds.provenance.source},
            {"seed", ds.provenance.seed},
            {"pct_inconsistent", ds.provenance.pct_inconsistent}}},
          {"manifest", manifest_to_json(ds.manifest)},
          {"windows", windows}};
}

inline LabeledDataset dataset_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "cerealia-dataset") throw Error(Errc::format, "not a dataset document");
    if (j.at("version").get<int>() != 1) throw Error(Errc::incompatible, "unsupported dataset version");
    LabeledDataset ds;
    ds.attributes = j.at("attributes").get<std::vector<std::string>>();
    ds.window_length = j.at("window_length").get<std::size_t>();
    ds.scaler = scaler_from_json(j.at("scaler"));
    const auto& p = j.at("provenance");
    ds.provenance = {p.at("source").get<std::string>(), p.at("seed").get<std::uint64_t>(),
                     p.at("pct_inconsistent").get<double>()};
    ds.manifest = manifest_from_json(j.at("manifest"));
    const auto rows = static_cast<Eigen::Index>(ds.window_length);
    const auto cols = static_cast<Eigen::Index>(ds.attributes.size());
    for (const auto& w : j.at("windows")) {
      const auto values = w.at("values").get<std::vector<double>>();
      if (values.size() != ds.window_length * ds.attributes.size()) {
        throw Error(Errc::shape, "dataset window has " + std::to_string(values.size()) + " values");
      }
      ds.windows.emplace_back(Eigen::Map<const WindowMatrix>(values.data(), rows, cols));
      ds.labels.push_back(parse_noise_class(w.at("label").get<std::string>()));
      ds.starts.push_back(w.at("start").get<std::size_t>());
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("malformed dataset: ") + e.what());
  }
}

inline bool is_cbor_path(const std::string& path) {
  return path.size() >= 5 && path.compare(path.size() - 5, 5, ".cbor") == 0;
}

/// Writes JSON, or CBOR when the path ends in ".cbor".
inline void write_document(const std::string& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write '" + path + "'");
  if (is_cbor_path(path)) {
    const auto bytes = nlohmann::json::to_cbor(doc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  } else {
    out << doc.dump(1) << '\n';
  }
  if (!out) throw Error(Errc::io, "failed writing '" + path + "'");
}

inline nlohmann::json read_document(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open '" + path + "'");
  try {
    if (is_cbor_path(path)) {
      std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      return nlohmann::json::from_cbor(bytes);
    }
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, "'" + path + "': " + e.what());
  }
}

}  // namespace cerealia::faults
