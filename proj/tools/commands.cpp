#include <fmt/format.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "cerealia/cerealia.hpp"
#include "cli.hpp"
#include "cli_internal.hpp"

namespace cerealia::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::size_t> parse_sizes(const std::string& text, const char* flag) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw Error(Errc::usage, fmt::format("{} expects a comma-separated list of integers, got '{}'", flag, text));
    }
  }
  if (out.empty()) throw Error(Errc::usage, fmt::format("{} is empty", flag));
  return out;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(Errc::usage, fmt::format("{} is required", flag));
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_flags(const std::string& path, const std::vector<bool>& flags) {
  std::string text;
  text.reserve(flags.size() * 2);
  for (bool f : flags) text += f ? "1\n" : "0\n";
  ensure_parent(path);
  write_file_atomic(path, text);
}

std::vector<bool> read_flags(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open flags file '" + path + "'");
  std::vector<bool> flags;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line == "0" || line == "1") {
      flags.push_back(line == "1");
    } else if (!line.empty()) {
      throw Error(Errc::parse, fmt::format("flags file '{}' line {}: expected 0 or 1", path, line_no));
    }
  }
  return flags;
}

void save_csv(const std::string& path, const WeatherSeries& s) {
  ensure_parent(path);
  std::ostringstream text;
  ingest::write_csv(text, s);
  write_file_atomic(path, text.str());
}

json class_counts(const std::vector<NoiseClass>& labels) {
  json counts = json::object();
  for (auto c : kAllNoiseClasses) counts[std::string(to_string(c))] = 0;
  for (auto l : labels) counts[std::string(to_string(l))] = counts[std::string(to_string(l))].get<std::size_t>() + 1;
  return counts;
}

/// Labels each non-overlapping detector-length window; a window with a missing
/// value counts as flagged.
std::vector<bool> detector_flags(const detect::Detector& d, const WeatherSeries& s) {
  const std::size_t len = d.meta().window_length;
  std::vector<bool> flags(s.size(), false);
  for (auto start : window_starts(s.size(), {len, len})) {
    const auto m = window_matrix(std::span<const WeatherSample>(s.samples).subspan(start, len), s.arity());
    const bool flagged = !m.allFinite() || d.classify_raw(m).label != NoiseClass::clean;
    if (flagged) std::fill(flags.begin() + static_cast<std::ptrdiff_t>(start),
                           flags.begin() + static_cast<std::ptrdiff_t>(start + len), true);
  }
  return flags;
}

std::shared_ptr<const impute::ArImputer> load_imputer(const std::string& path) {
  return std::make_shared<const impute::ArImputer>(impute::ArImputer::from_json(faults::read_document(path)));
}

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

std::pair<std::string, int> split_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::usage, "--listen expects host:port");
  try {
    return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error(Errc::usage, "--listen expects host:port, got '" + listen + "'");
  }
}

template <class T>
std::shared_ptr<T> make_state(std::vector<std::shared_ptr<void>>& state) {
  auto p = std::make_shared<T>();
  state.push_back(p);
  return p;
}

CLI::App* add_report_flag(CLI::App* sub, Command& cmd, std::string& report) {
  sub->add_option("--report", report, "Write a JSON report embedding the effective config");
  cmd.outputs.insert("report");
  return sub;
}

// ---------------------------------------------------------------------------

struct GenerateOpts {
  std::uint64_t seed = 7;
  std::size_t days = 30;
  std::size_t windows = 0;
  std::string start = "2024-01-01T00:00:00Z";
  long long interval = 300;
  std::string out;
  std::string report;
};

void add_generate(CLI::App& app, std::vector<Command>& commands, std::vector<std::shared_ptr<void>>& state, Io io) {
  auto o = make_state<GenerateOpts>(state);
  Command cmd;
  cmd.app = app.add_subcommand("generate", "Synthesize a station series as CSV");
  cmd.app->add_option("--seed", o->seed, "Generator seed");
  cmd.app->add_option("--days", o->days, "Length in days");
  cmd.app->add_option("--windows", o->windows, "Trim to exactly N windows of 48 at stride 24 (0 = whole days)");
  cmd.app->add_option("--start", o->start, "First timestamp (UTC)");
  cmd.app->add_option("--interval", o->interval, "Sampling interval in seconds");
  cmd.app->add_option("--out", o->out, "Output CSV");
  cmd.outputs.insert("out");
  add_report_flag(cmd.app, cmd, o->report);
  cmd.run = [o, io] {
    require(o->out, "--out");
    auto config = ingest::default_synth_config(o->seed, o->days);
    config.start = parse_iso8601(o->start);
    config.sampling_interval = std::chrono::seconds{o->interval};
    if (o->windows > 0) {
      if (o->interval <= 0) throw Error(Errc::config, "sampling interval must be positive");
      const std::size_t samples = (o->windows - 1) * 24 + 48;
      const auto per_day = static_cast<std::size_t>(86400 / o->interval);
      config.days = (samples + per_day - 1) / per_day;
      auto series = ingest::synth_generate(config);
      series.samples.resize(samples);
      save_csv(o->out, series);
    } else {
      save_csv(o->out, ingest::synth_generate(config));
    }
    const auto series = load_series(o->out, "header", o->interval);
    Outcome r;
    r.result = {{"samples", series.size()},
                {"attributes", series.schema.names()},
                {"first", format_iso8601(series.samples.front().timestamp)},
                {"last", format_iso8601(series.samples.back().timestamp)},
                {"crc32", file_crc(o->out)}};
    io.out << fmt::format("wrote {} samples x {} attributes to {}\n", series.size(), series.arity(), o->out);
    return r;
  };
  commands.push_back(std::move(cmd));
}

// ---------------------------------------------------------------------------

struct IngestOpts {
  std::string csv;
  std::string schema = "header";
  std::string timestamp_column = "timestamp";
  std::string timestamp_format = kIsoUtcPattern;
  std::string delimiter = ",";
  long long interval = 300;
  double max_reject_ratio = 0.05;
  std::string out;
  std::string report;
};

void add_ingest(CLI::App& app, std::vector<Command>& commands, std::vector<std::shared_ptr<void>>& state, Io io) {
  auto o = make_state<IngestOpts>(state);
  Command cmd;
  cmd.app = app.add_subcommand("ingest", "Validate a station CSV and write it in canonical form");
  cmd.app->add_option("--csv,--in", o->csv, "Input CSV");
  cmd.app->add_option("--schema", o->schema, "station schema: header, beutenberg, quincy, or a schema JSON path");
  cmd.app->add_option("--timestamp-column", o->timestamp_column, "Timestamp column name");
  cmd.app->add_option("--timestamp-format", o->timestamp_format, "strptime-style timestamp pattern");
  cmd.app->add_option("--delimiter", o->delimiter, "Field delimiter (one character)");
  cmd.app->add_option("--interval", o->interval, "Sampling interval in seconds (header schema only)");
  cmd.app->add_option("--max-reject-ratio", o->max_reject_ratio, "Fail when more rows than this are rejected");
  cmd.app->add_option("--out", o->out, "Canonical CSV output");
  cmd.outputs.insert("out");
  add_report_flag(cmd.app, cmd, o->report);
  cmd.run = [o, io] {
    require(o->csv, "--csv");
    if (o->delimiter.size() != 1) throw Error(Errc::usage, "--delimiter must be a single character");
    ingest::CsvFormat format = o->schema == "beutenberg" ? ingest::beutenberg_csv_format() : ingest::CsvFormat{};
    format.delimiter = o->delimiter.front();
    if (o->timestamp_column != "timestamp") format.timestamp_column = o->timestamp_column;
    if (o->timestamp_format != kIsoUtcPattern) format.timestamp_format = o->timestamp_format;
    format.max_reject_ratio = o->max_reject_ratio;
    const auto schema = resolve_schema(o->schema, o->csv, format.timestamp_column, format.delimiter, o->interval);
    const auto parsed = ingest::parse_csv(o->csv, format, schema);
    json rejects = json::array();
    for (std::size_t i = 0; i < parsed.rejects.size() && i < 20; ++i) {
      rejects.push_back({{"line", parsed.rejects[i].line}, {"reason", parsed.rejects[i].reason}});
    }
    std::size_t missing = 0;
    for (const auto& s : parsed.series.samples) {
      for (double v : s.values) missing += std::isfinite(v) ? 0 : 1;
    }
    Outcome r;
    r.result = {{"data_rows", parsed.data_rows},
                {"samples", parsed.series.size()},
                {"attributes", parsed.series.schema.names()},
                {"rejected", parsed.rejects.size()},
                {"first_rejects", rejects},
                {"missing_values", missing}};
    if (!o->out.empty()) {
      save_csv(o->out, parsed.series);
      r.result["crc32"] = file_crc(o->out);
    }
    io.out << fmt::format("{} rows, {} accepted, {} rejected\n", parsed.data_rows, parsed.series.size(),
                          parsed.rejects.size());
    return r;
  };
  commands.push_back(std::move(cmd));
}

// ---------------------------------------------------------------------------

struct InjectOpts {
  std::string in;
  std::string schema = "header";
  double pct = 25.0;
  std::uint64_t seed = 7;
  std::string only_class;
  std::size_t window = 48;
  std::size_t stride = 24;
  double min_effect = 1.0;
  bool all_attributes = false;
  std::string out;
  std::string manifest;
  std::string series_out;
  std::string flags_out;
  std::string report;
};

void add_inject(CLI::App& app, std::vector<Command>& commands, std::vector<std::shared_ptr<void>>& state, Io io) {
  auto o = make_state<InjectOpts>(state);
  Command cmd;
  cmd.app = app.add_subcommand("inject", "Inject labeled faults into a series");
  cmd.app->add_option("--in", o->in, "Clean input CSV");
  cmd.app->add_option("--schema", o->schema, "Schema of the input (see ingest)");
  cmd.app->add_option("--pct", o->pct, "Percentage of windows carrying a fault");
  cmd.app->add_option("--seed", o->seed, "Fault seed");
  cmd.app->add_option("--class", o->only_class, "Inject only this class (random|malfunction|drift|bias)");
  cmd.app->add_option("--window", o->window, "Window length");
  cmd.app->add_option("--stride", o->stride, "Window stride of the labeled dataset");
  cmd.app->add_option("--min-effect", o->min_effect, "Minimum fault effect in clean standard deviations");
  cmd.app->add_flag("--all-attributes", o->all_attributes, "Fault every attribute instead of one");
  cmd.app->add_option("--out", o->out, "Labeled window dataset (.json or .cbor)");
  cmd.app->add_option("--manifest", o->manifest, "Fault manifest JSON");
  cmd.app->add_option("--series-out", o->series_out, "Corrupted series CSV (non-overlapping windows)");
  cmd.app->add_option("--flags-out", o->flags_out, "Per-sample altered flags of --series-out, one 0/1 per line");
  for (const char* name : {"out", "manifest", "series-out", "flags-out"}) cmd.outputs.insert(name);
  add_report_flag(cmd.app, cmd, o->report);
  cmd.run = [o, io] {
    require(o->in, "--in");
    if (o->out.empty() && o->series_out.empty()) throw Error(Errc::usage, "give --out and/or --series-out");
    const auto series = load_series(o->in, o->schema);
    std::optional<NoiseClass> only;
    if (!o->only_class.empty()) only = parse_noise_class(o->only_class);
    faults::PlacementConfig pc;
    pc.min_effect = o->min_effect;
    pc.all_attributes = o->all_attributes;

    Outcome r;
    json manifest = json::object();
    if (!o->out.empty()) {
      faults::DatasetConfig dc;
      dc.pct_inconsistent = o->pct;
      dc.window = {o->window, o->stride};
      dc.seed = o->seed;
      dc.only_class = only;
      dc.placement = pc;
      const auto ds = faults::build_labeled_dataset(series, dc, fs::path(o->in).filename().string());
      ensure_parent(o->out);
      faults::write_document(o->out, faults::dataset_to_json(ds));
      manifest["dataset"] = faults::manifest_to_json(ds.manifest);
      r.result["dataset"] = {{"windows", ds.size()}, {"classes", class_counts(ds.labels)}, {"crc32", file_crc(o->out)}};
      io.out << fmt::format("dataset: {} windows, {} faulty -> {}\n", ds.size(), ds.manifest.size(), o->out);
    }
    if (!o->series_out.empty()) {
      const auto cs = faults::corrupt_series(series, o->pct, o->window, o->seed, pc, only);
      save_csv(o->series_out, cs.series);
      manifest["series"] = faults::manifest_to_json(cs.manifest);
      std::size_t altered = 0;
      for (bool m : cs.mask) altered += m ? 1 : 0;
      r.result["series"] = {{"windows", cs.labels.size()},
                            {"classes", class_counts(cs.labels)},
                            {"altered_samples", altered},
                            {"crc32", file_crc(o->series_out)}};
      if (!o->flags_out.empty()) {
        write_flags(o->flags_out, cs.mask);
        r.result["series"]["flags_crc32"] = file_crc(o->flags_out);
      }
      io.out << fmt::format("series: {} faulty windows, {} altered samples -> {}\n", cs.manifest.size(), altered,
                            o->series_out);
    }
    if (!o->manifest.empty()) {
      ensure_parent(o->manifest);
      write_file_atomic(o->manifest, manifest.dump(1) + "\n");
      r.result["manifest_crc32"] = file_crc(o->manifest);
    }
    return r;
  };
  commands.push_back(std::move(cmd));
}

// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string data;
  std::string model_out;
  std::string detector = "neural";
  std::string input = "features";
  std::string hidden = "64,32";
  double dropout = 0.2;
  double lr = 0.001;
  std::size_t batch = 64;
  std::size_t epochs = 100;
  std::size_t patience = 5;
  double validation_fraction = 0.2;
  std::uint64_t seed = 7;
  std::string report;
};

void add_train(CLI::App& app, std::vector<Command>& commands, std::vector<std::shared_ptr<void>>& state, Io io) {
  auto o = make_state<TrainOpts>(state);
  Command cmd;
  cmd.app = app.add_subcommand("train", "Train a window detector on a labeled dataset");
  cmd.app->add_option("--data", o->data, "Labeled dataset from inject --out");
  cmd.app->add_option("--model-out", o->model_out, "Detector output (.json or .cbor)");
  cmd.app->add_option("--detector", o->detector, "neural or stat");
  cmd.app->add_option("--input", o->input, "Neural input: features or window");
  cmd.app->add_option("--hidden", o->hidden, "Hidden layer widths, comma separated");
  cmd.app->add_option("--dropout", o->dropout, "Dropout rate on hidden layers");
  cmd.app->add_option("--lr", o->lr, "Adam learning rate");
  cmd.app->add_option("--batch", o->batch, "Mini-batch size");
  cmd.app->add_option("--epochs", o->epochs, "Maximum epochs");
  cmd.app->add_option("--patience", o->patience, "Early-stopping patience in epochs");
  cmd.app->add_option("--validation-fraction", o->validation_fraction, "Held-out fraction, stratified by class");
  cmd.app->add_option("--seed", o->seed, "Split, initialization and shuffling seed");
  cmd.outputs.insert("model-out");
  add_report_flag(cmd.app, cmd, o->report);
  cmd.run = [o, io] {
    require(o->data, "--data");
    require(o->model_out, "--model-out");
    const auto ds = faults::dataset_from_json(faults::read_document(o->data));
    Outcome r;
    json metrics_json;
    double macro_f1 = 0.0;
    if (o->detector == "neural") {
      detect::NeuralDetectorConfig c;
      c.input = detect::parse_neural_input(o->input);
      c.hidden_layers = parse_sizes(o->hidden, "--hidden");
      c.dropout = o->dropout;
      c.learning_rate = o->lr;
      c.batch_size = o->batch;
      c.max_epochs = o->epochs;
      c.early_stop_patience = o->patience;
      c.validation_fraction = o->validation_fraction;
      c.seed = o->seed;
      auto [det, rep] = detect::train_neural(ds, c);
      ensure_parent(o->model_out);
      detect::save_detector(*det, o->model_out);
      r.result["training"] = detect::to_json(rep);
      macro_f1 = rep.validation.macro_f1;
    } else if (o->detector == "stat") {
      detect::StatDetectorConfig c;
      c.validation_fraction = o->validation_fraction;
      c.seed = o->seed;
      auto det = detect::train_stat(ds, c);
      ensure_parent(o->model_out);
      detect::save_detector(*det, o->model_out);
      const auto split = detect::stratified_split(ds, c.validation_fraction, c.seed);
      const auto ev = detect::evaluate_detector(*det, ds, split.validation);
      r.result["training"] = {{"payload", det->payload()}, {"validation", metrics::to_json(ev.metrics)}};
      macro_f1 = ev.metrics.macro_f1;
    } else {
      throw Error(Errc::usage, "--detector must be neural or stat, got '" + o->detector + "'");
    }
    r.result["detector"] = o->detector;
    r.result["windows"] = ds.size();
    r.result["validation_macro_f1"] = macro_f1;
    r.result["model_crc32"] = file_crc(o->model_out);
    io.out << fmt::format("{} detector: validation macro_f1={:.4f} -> {}\n", o->detector, macro_f1, o->model_out);
    return r;
  };
  commands.push_back(std::move(cmd));
}

// ---------------------------------------------------------------------------

struct EvaluateOpts {
  std::string data;
  std::string model;
  std::string report;
};

void add_evaluate(CLI::App& app, std::vector<Command>& commands, std::vector<std::shared_ptr<void>>& state, Io io) {
  auto o = make_state<EvaluateOpts>(state);
  Command cmd;
  cmd.app = app.add_subcommand("evaluate", "Score a detector on a labeled dataset");
  cmd.app->add_option("--data", o->data, "Labeled dataset");
  cmd.app->add_option("--model", o->model, "Detector file");
  add_report_flag(cmd.app, cmd, o->report);
  cmd.run = [o, io] {
    require(o->data, "--data");
    require(o->model, "--model");
    const auto ds = faults::dataset_from_json(faults::read_document(o->data));
    const auto det = detect::load_detector(o->model);
    const auto ev = detect::evaluate_detector(*det, ds);
    Outcome r;
    r.result = metrics::to_json(ev.metrics);
    r.result["detector"] = det->kind();
    r.result["windows"] = ds.size();
    io.out << r.result.dump(2) << "\n";
    return r;
  };
  commands.push_back(std::move(cmd));
}

// ---------------------------------------------------------------------------

struct ImputeOpts {
  bool fit = false;
  std::string in;
  std::string schema = "header";
  std::string model;
  std::string model_out;
  std::size_t lags = 12;
  double ridge = 1e-3;
  bool no_calendar = false;
  std::string flags;
  std::string detector;
  std::string truth;
  std::string out;
  std::string report;
};

void add_impute(CLI::App& app, std::vector<Command>& commands, std::vector<std::shared_ptr<void>>& state, Io io) {
  auto o = make_state<ImputeOpts>(state);
  Command cmd;
  cmd.app = app.add_subcommand("impute", "Fit an AR imputer (--fit) or replace flagged samples");
  cmd.app->add_flag("--fit", o->fit, "Fit an imputer on --in and write --model-out");
  cmd.app->add_option("--in", o->in, "Input CSV");
  cmd.app->add_option("--schema", o->schema, "Schema of the input (see ingest)");
  cmd.app->add_option("--model", o->model, "Imputer file");
  cmd.app->add_option("--model-out", o->model_out, "Fitted imputer output");
  cmd.app->add_option("--lags", o->lags, "Autoregressive order");
  cmd.app->add_option("--ridge", o->ridge, "Ridge penalty");
  cmd.app->add_flag("--no-calendar", o->no_calendar, "Drop hour/day-of-year terms");
  cmd.app->add_option("--flags", o->flags, "Per-sample 0/1 flags file");
  cmd.app->add_option("--detector", o->detector, "Flag with this detector over non-overlapping windows instead");
  cmd.app->add_option("--truth", o->truth, "Clean CSV to score the repair against");
  cmd.app->add_option("--out", o->out, "Imputed CSV");
  cmd.outputs.insert("model-out");
  cmd.outputs.insert("out");
  add_report_flag(cmd.app, cmd, o->report);
  cmd.run = [o, io] {
    require(o->in, "--in");
    const auto series = load_series(o->in, o->schema);
    Outcome r;
    if (o->fit) {
      require(o->model_out, "--model-out");
      impute::ArImputerConfig c;
      c.lags = o->lags;
      c.ridge = o->ridge;
      c.calendar_features = !o->no_calendar;
      const auto imp = impute::fit_imputer(series, c);
      ensure_parent(o->model_out);
      write_file_atomic(o->model_out, imp.to_json().dump(1) + "\n");
      json attrs = json::object();
      for (std::size_t j = 0; j < series.arity(); ++j) {
        attrs[series.schema.attributes[j].name] = {{"residual_stddev", imp.model(j).residual_stddev()},
                                                   {"rows", imp.model(j).rows}};
      }
      r.result = {{"mode", "fit"}, {"lags", c.lags}, {"attributes", attrs}, {"model_crc32", file_crc(o->model_out)}};
      io.out << fmt::format("imputer (p={}) fitted on {} samples -> {}\n", c.lags, series.size(), o->model_out);
      return r;
    }
    require(o->model, "--model");
    require(o->out, "--out");
    if (o->flags.empty() == o->detector.empty()) throw Error(Errc::usage, "give exactly one of --flags or --detector");
    const auto imp = load_imputer(o->model);
    const auto flags = o->flags.empty() ? detector_flags(*detect::load_detector(o->detector), series) : read_flags(o->flags);
    const auto repaired = impute::impute_flagged(series, flags, *imp);
    save_csv(o->out, repaired);
    std::size_t flagged = 0;
    for (bool f : flags) flagged += f ? 1 : 0;
    r.result = {{"mode", "apply"}, {"samples", series.size()}, {"flagged_samples", flagged}, {"crc32", file_crc(o->out)}};
    if (!o->truth.empty()) {
      const auto truth = load_series(o->truth, o->schema);
      if (truth.size() != series.size() || truth.arity() != series.arity()) {
        throw Error(Errc::shape, "--truth does not match the input shape");
      }
      double before = 0.0;
      double after = 0.0;
      std::size_t n = 0;
      for (std::size_t t = 0; t < series.size(); ++t) {
        if (!flags[t]) continue;
        for (std::size_t j = 0; j < series.arity(); ++j) {
          before += std::abs(series.value(t, j) - truth.value(t, j));
          after += std::abs(repaired.value(t, j) - truth.value(t, j));
          ++n;
        }
      }
      if (n > 0) {
        r.result["mae_flagged_before"] = before / static_cast<double>(n);
        r.result["mae_flagged_after"] = after / static_cast<double>(n);
      }
    }
    io.out << fmt::format("imputed {} flagged samples -> {}\n", flagged, o->out);
    return r;
  };
  commands.push_back(std::move(cmd));
}

// ---------------------------------------------------------------------------

struct FstOpts {
  std::uint64_t corpus_seed = 7;
  double pct = 20.0;
  std::string detector;
  std::string imputer;
  std::size_t days = 120;
  std::uint64_t fault_seed = 11;
  std::uint64_t oracle_seed = 7;
  std::uint64_t regressor_seed = 7;
  double train_fraction = 0.7;
  std::string report;
};

void add_fst(CLI::App& app, std::vector<Command>& commands, std::vector<std::shared_ptr<void>>& state, Io io) {
  auto o = make_state<FstOpts>(state);
  Command cmd;
  cmd.app = app.add_subcommand("fst", "Fruit-surface-temperature experiment: clean, imperfect and imputed inputs");
  cmd.app->add_option("--corpus-seed", o->corpus_seed, "Synthetic series seed");
  cmd.app->add_option("--pct", o->pct, "Percentage of faulty test windows");
  cmd.app->add_option("--detector", o->detector, "Detector file");
  cmd.app->add_option("--imputer", o->imputer, "Imputer file");
  cmd.app->add_option("--days", o->days, "Series length in days");
  cmd.app->add_option("--fault-seed", o->fault_seed, "Fault placement seed");
  cmd.app->add_option("--oracle-seed", o->oracle_seed, "Target noise seed");
  cmd.app->add_option("--regressor-seed", o->regressor_seed, "Regressor split and initialization seed");
  cmd.app->add_option("--train-fraction", o->train_fraction, "Leading fraction of the series used for training");
  add_report_flag(cmd.app, cmd, o->report);
  cmd.run = [o, io] {
    require(o->detector, "--detector");
    require(o->imputer, "--imputer");
    fst::FstExperimentConfig c;
    c.corpus_seed = o->corpus_seed;
    c.pct_faulty = o->pct;
    c.days = o->days;
    c.fault_seed = o->fault_seed;
    c.oracle.seed = o->oracle_seed;
    c.regressor.seed = o->regressor_seed;
    c.train_fraction = o->train_fraction;
    const auto det = detect::load_detector(o->detector);
    c.window_length = det->meta().window_length;
    const auto imp = load_imputer(o->imputer);
    const auto rep = fst::run_fst_experiment(c, *det, *imp);
    Outcome r;
    r.result = fst::to_json(rep);
    r.result["kind"] = "fst";
    render_report(json{{"command", "fst"}, {"result", r.result}}, io.out);
    return r;
  };
  commands.push_back(std::move(cmd));
}

// ---------------------------------------------------------------------------

struct ServeOpts {
  std::string model;
  std::string imputer;
  std::string listen = "127.0.0.1:8080";
  std::string store;
  std::uint64_t max_store_bytes = 0;
  std::string station = "station";
  std::size_t stride = 1;
  std::string alerts;
  bool no_impute = false;
  std::string poll;
  long long poll_interval_ms = 300000;
  double run_for = 0.0;
  std::string stream;
  std::string schema = "header";
  std::string sanitized_out;
  std::string report;
};

void add_serve(CLI::App& app, std::vector<Command>& commands, std::vector<std::shared_ptr<void>>& state, Io io) {
  auto o = make_state<ServeOpts>(state);
  Command cmd;
  cmd.app = app.add_subcommand("serve", "Run a streaming checker over HTTP, or over a recorded CSV with --stream");
  cmd.app->add_option("--model", o->model, "Detector file");
  cmd.app->add_option("--imputer", o->imputer, "Imputer file (flagged samples are stored imputed)");
  cmd.app->add_option("--listen", o->listen, "host:port; port 0 picks a free one");
  cmd.app->add_option("--store", o->store, "History store path (default $CEREALIA_DATA_DIR/<station>.history)");
  cmd.app->add_option("--max-store-bytes", o->max_store_bytes, "Store quota in bytes (0 = unlimited)");
  cmd.app->add_option("--station", o->station, "Station name used in alerts");
  cmd.app->add_option("--stride", o->stride, "Classify every N samples");
  cmd.app->add_option("--alerts", o->alerts, "Alert sink: JSON-lines file path or http(s) URL");
  cmd.app->add_flag("--no-impute", o->no_impute, "Store flagged samples as received");
  cmd.app->add_option("--poll", o->poll, "Poll this URL for the latest sample instead of waiting for POSTs");
  cmd.app->add_option("--poll-interval-ms", o->poll_interval_ms, "Polling period");
  cmd.app->add_option("--run-for", o->run_for, "Stop after this many seconds (0 = until interrupted)");
  cmd.app->add_option("--stream", o->stream, "Process this CSV offline and exit");
  cmd.app->add_option("--schema", o->schema, "Schema of --stream (see ingest)");
  cmd.app->add_option("--sanitized-out", o->sanitized_out, "With --stream: write the committed series as CSV");
  for (const char* name : {"store", "alerts", "sanitized-out"}) cmd.outputs.insert(name);
  add_report_flag(cmd.app, cmd, o->report);
  cmd.run = [o, io] {
    require(o->model, "--model");
    const auto det = detect::load_detector(o->model);
    std::shared_ptr<const impute::ArImputer> imp;
    if (!o->imputer.empty()) imp = load_imputer(o->imputer);
    runtime::CheckerConfig cc;
    cc.window = {det->meta().window_length, o->stride};
    cc.impute_on_flag = !o->no_impute && imp != nullptr;
    cc.station = o->station;
    const std::string store_path = o->store.empty() ? runtime::default_store_path(o->station).string() : o->store;
    ensure_parent(store_path);
    runtime::HistoryStore store(store_path, det->meta().attributes.size(), o->max_store_bytes);
    std::unique_ptr<runtime::AlertSink> sink;
    if (!o->alerts.empty()) {
      if (o->alerts.find("://") == std::string::npos) ensure_parent(o->alerts);
      sink = runtime::make_alert_sink(o->alerts);
    }

    Outcome r;
    if (!o->stream.empty()) {
      const auto series = load_series(o->stream, o->schema);
      if (series.schema.names() != det->meta().attributes) {
        throw Error(Errc::incompatible, "--stream columns do not match the detector attributes");
      }
      auto run = runtime::run_checker(series.samples, det, imp, cc, &store, sink.get());
      json alert_labels = json::object();
      std::vector<NoiseClass> alert_classes;
      for (const auto& a : run.alerts) alert_classes.push_back(a.label);
      r.result = {{"mode", "stream"},
                  {"checker", runtime::to_json(cc)},
                  {"samples", series.size()},
                  {"windows", class_counts(run.labels)},
                  {"alerts", class_counts(alert_classes)},
                  {"status", runtime::to_json(run.status)}};
      if (!o->sanitized_out.empty()) {
        WeatherSeries out{series.schema, std::move(run.sanitized)};
        save_csv(o->sanitized_out, out);
        r.result["sanitized_crc32"] = file_crc(o->sanitized_out);
      }
      io.out << fmt::format("{} samples, {} windows classified, {} alerts\n", series.size(),
                            run.status.windows_classified, run.status.alerts);
      return r;
    }

    AttributeSchema schema;
    for (const auto& name : det->meta().attributes) schema.attributes.push_back({name, ""});
    auto checker = std::make_unique<runtime::Checker>(det, imp, cc, &store, sink.get());
    runtime::CheckerService service(std::move(checker), schema);
    const auto [host, port] = split_listen(o->listen);
    const int bound = service.start(host, port);
    io.out << fmt::format("listening on {}:{}\n", host, bound) << std::flush;

    std::jthread poller_thread;
    std::unique_ptr<ingest::RemotePoller> poller;
    if (!o->poll.empty()) {
      poller = std::make_unique<ingest::RemotePoller>(o->poll, schema, std::chrono::milliseconds{o->poll_interval_ms});
      poller_thread = std::jthread([&, bound_port = bound, h = host](std::stop_token stop) {
        httplib::Client self(h, bound_port);
        poller->run(stop, [&](const WeatherSample& s) {
          self.Post("/ingest", ingest::sample_to_json(s, schema).dump(), "application/json");
        });
      });
    }

    g_interrupted.store(false);
    auto prev_int = std::signal(SIGINT, on_signal);
    auto prev_term = std::signal(SIGTERM, on_signal);
    const auto t0 = std::chrono::steady_clock::now();
    while (!g_interrupted.load()) {
      if (o->run_for > 0.0 &&
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= o->run_for) {
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds{50});
    }
    std::signal(SIGINT, prev_int);
    std::signal(SIGTERM, prev_term);
    if (poller_thread.joinable()) {
      poller_thread.request_stop();
      poller_thread.join();
    }
    service.stop();
    r.result = {{"mode", "http"}, {"checker", runtime::to_json(cc)}};
    r.timing["status"] = service.status();
    if (poller) {
      const auto h = poller->health();
      r.timing["poller"] = {{"polls", h.polls}, {"failures", h.failures}, {"emitted", h.emitted}};
    }
    return r;
  };
  commands.push_back(std::move(cmd));
}

// ---------------------------------------------------------------------------

struct BenchOpts {
  std::string model;
  std::string instances = "1,5,15,30";
  std::size_t samples = 1000;
  std::size_t repetitions = 100;
  std::uint64_t seed = 7;
  std::string report;
};

void add_bench(CLI::App& app, std::vector<Command>& commands, std::vector<std::shared_ptr<void>>& state, Io io) {
  auto o = make_state<BenchOpts>(state);
  Command cmd;
  cmd.app = app.add_subcommand("bench", "Measure classify latency and memory with concurrent checker instances");
  cmd.app->add_option("--model", o->model, "Detector file");
  cmd.app->add_option("--instances", o->instances, "Instance counts to run, comma separated");
  cmd.app->add_option("--samples", o->samples, "Stream length per instance (>= 1000)");
  cmd.app->add_option("--repetitions", o->repetitions, "Timed passes over the stream");
  cmd.app->add_option("--seed", o->seed, "Stream seed");
  add_report_flag(cmd.app, cmd, o->report);
  cmd.run = [o, io] {
    require(o->model, "--model");
    const auto det = detect::load_detector(o->model);
    Outcome r;
    r.result["runs"] = json::array();
    r.timing["runs"] = json::array();
    io.out << fmt::format("{:>9} {:>14} {:>14} {:>16}\n", "instances", "mean_ms", "p95_ms", "mem_kb/instance");
    for (auto n : parse_sizes(o->instances, "--instances")) {
      runtime::BenchConfig bc{o->samples, n, o->repetitions, o->seed};
      const auto rep = runtime::bench_inference(det, bc);
      const auto j = runtime::to_json(rep);
      r.result["runs"].push_back({{"instances", rep.instances},
                                  {"samples", rep.samples},
                                  {"repetitions", rep.repetitions},
                                  {"seed", rep.seed},
                                  {"classify_calls", rep.classify_calls},
                                  {"label_digest", rep.label_digest},
                                  {"labels_identical", rep.labels_identical}});
      r.timing["runs"].push_back({{"instances", rep.instances},
                                  {"latency_mean_s", j["latency_mean_s"]},
                                  {"latency_p95_s", j["latency_p95_s"]},
                                  {"memory_delta_per_instance_bytes", j["memory_delta_per_instance_bytes"]},
                                  {"wall_seconds", j["wall_seconds"]}});
      io.out << fmt::format("{:>9} {:>14.4f} {:>14.4f} {:>16.1f}\n", n, rep.latency_mean * 1e3, rep.latency_p95 * 1e3,
                            static_cast<double>(rep.memory_delta_per_instance) / 1024.0)
             << std::flush;
    }
    r.result["kind"] = "bench";
    return r;
  };
  commands.push_back(std::move(cmd));
}

// ---------------------------------------------------------------------------

struct ReportOpts {
  std::string in;
  std::string plots;
  bool replay = false;
  std::string replay_dir;
};

/// Paths in `a` and `b` that differ, JSON-pointer style; at most `limit`.
void diff_json(const json& a, const json& b, const std::string& at, std::vector<std::string>& out, std::size_t limit) {
  if (out.size() >= limit) return;
  if (a.type() != b.type()) {
    out.push_back(at.empty() ? "/" : at);
    return;
  }
  if (a.is_object()) {
    for (const auto& [k, v] : a.items()) {
      if (!b.contains(k)) {
        out.push_back(at + "/" + k);
      } else {
        diff_json(v, b.at(k), at + "/" + k, out, limit);
      }
    }
    for (const auto& [k, v] : b.items()) {
      if (!a.contains(k)) out.push_back(at + "/" + k);
    }
  } else if (a.is_array()) {
    if (a.size() != b.size()) {
      out.push_back(at);
      return;
    }
    for (std::size_t i = 0; i < a.size(); ++i) diff_json(a[i], b[i], at + "/" + std::to_string(i), out, limit);
  } else if (a != b) {
    out.push_back(at.empty() ? "/" : at);
  }
}

void add_report(CLI::App& app, std::vector<Command>& commands, std::vector<std::shared_ptr<void>>& state, Io io) {
  auto o = make_state<ReportOpts>(state);
  Command cmd;
  cmd.app = app.add_subcommand("report", "Render a JSON report; optionally plot it or re-run it from its config");
  cmd.app->add_option("--in", o->in, "Report JSON");
  cmd.app->add_option("--plots", o->plots, "Directory for SVG plots");
  cmd.app->add_flag("--replay", o->replay, "Re-run the report's command from its embedded config and compare");
  cmd.app->add_option("--replay-dir", o->replay_dir, "Where replayed outputs go (default: a temporary directory)");
  cmd.run = [o, io] {
    require(o->in, "--in");
    const auto report = faults::read_document(o->in);
    if (!report.is_object() || report.value("format", "") != kReportFormat) {
      throw Error(Errc::format, "'" + o->in + "' is not a cerealia report");
    }
    if (report.value("version", 0) != kReportVersion) throw Error(Errc::incompatible, "unsupported report version");
    render_report(report, io.out);
    Outcome r;
    if (!o->plots.empty()) {
      fs::create_directories(o->plots);
      const auto files = write_plots(report, o->plots);
      for (const auto& f : files) io.out << "plot: " << f << "\n";
      r.result["plots"] = files;
    }
    if (o->replay) {
      fs::path dir = o->replay_dir;
      if (dir.empty()) {
        dir = fs::temp_directory_path() /
              fmt::format("cerealia-replay-{}", std::chrono::steady_clock::now().time_since_epoch().count());
      }
      fs::create_directories(dir);
      json outputs = json::object();
      for (const auto& [name, path] : report.at("outputs").items()) {
        outputs[name] = (dir / (name + "-" + fs::path(path.get<std::string>()).filename().string())).string();
      }
      const auto args = replay_args(report.at("command").get<std::string>(), report.at("config"), outputs);
      std::ostringstream sub_out;
      std::ostringstream sub_err;
      const int status = run_cli(args, sub_out, sub_err);
      if (status != 0) {
        throw Error(Errc::incompatible, "replay failed (exit " + std::to_string(status) + "): " + sub_err.str());
      }
      const auto again = faults::read_document(outputs.at("report").get<std::string>());
      std::vector<std::string> diffs;
      for (const char* key : {"command", "config", "result"}) {
        diff_json(report.at(key), again.at(key), std::string("/") + key, diffs, 20);
      }
      r.result["replay_identical"] = diffs.empty();
      if (!diffs.empty()) {
        std::string joined;
        for (const auto& d : diffs) joined += (joined.empty() ? "" : ", ") + d;
        throw Error(Errc::incompatible, "replay differs at " + joined);
      }
      io.out << "replay: identical (timing excluded)\n";
    }
    return r;
  };
  commands.push_back(std::move(cmd));
}

}  // namespace

void register_commands(CLI::App& app, std::vector<Command>& commands, std::vector<std::shared_ptr<void>>& state,
                       Io io) {
  add_generate(app, commands, state, io);
  add_ingest(app, commands, state, io);
  add_inject(app, commands, state, io);
  add_train(app, commands, state, io);
  add_evaluate(app, commands, state, io);
  add_impute(app, commands, state, io);
  add_fst(app, commands, state, io);
  add_serve(app, commands, state, io);
  add_bench(app, commands, state, io);
  add_report(app, commands, state, io);
}

}  // namespace cerealia::cli
