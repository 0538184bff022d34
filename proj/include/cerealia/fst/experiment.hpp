#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/rng.hpp"
#include "cerealia/core/series.hpp"
#include "cerealia/detect/detector.hpp"
#include "cerealia/faults/dataset.hpp"
#include "cerealia/fst/oracle.hpp"
#include "cerealia/fst/regressor.hpp"
#include "cerealia/impute/ar.hpp"
#include "cerealia/ingest/synth.hpp"
#include "cerealia/metrics/metrics.hpp"

namespace cerealia::fst {

/// Which series columns feed the regressor.
struct FstColumns {
  std::string air_temp = "air_temperature";
  std::string wind_speed = "wind_speed";
  std::string dew_point = "dew_point";
  std::string solar_radiation = "solar_radiation";
};

struct FstExperimentConfig {
  std::uint64_t corpus_seed = 7;
  std::size_t days = 120;
  double pct_faulty = 20.0;
  std::uint64_t fault_seed = 11;
  double train_fraction = 0.7;
  std::size_t window_length = 48;
  FstOracleParams oracle{};
  FstRegressorConfig regressor{};
  FstColumns columns{};

  void validate() const {
    if (days < 2) throw Error(Errc::config, "experiment needs at least two days of data");
    if (!(pct_faulty >= 0.0 && pct_faulty <= 100.0)) throw Error(Errc::config, "pct_faulty must be in [0, 100]");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error(Errc::config, "train_fraction must be in (0, 1)");
    if (window_length < 2) throw Error(Errc::config, "window_length must be >= 2");
    oracle.validate();
    regressor.validate();
  }
};

inline nlohmann::json to_json(const FstExperimentConfig& c) {
  return {{"corpus_seed", c.corpus_seed},
          {"days", c.days},
          {"pct_faulty", c.pct_faulty},
          {"fault_seed", c.fault_seed},
          {"train_fraction", c.train_fraction},
          {"window_length", c.window_length},
          {"oracle", to_json(c.oracle)},
          {"regressor", to_json(c.regressor)},
          {"columns",
           {{"air_temp", c.columns.air_temp},
            {"wind_speed", c.columns.wind_speed},
            {"dew_point", c.columns.dew_point},
            {"solar_radiation", c.columns.solar_radiation}}}};
}

inline FstExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  FstExperimentConfig c;
  c.corpus_seed = j.value("corpus_seed", c.corpus_seed);
  c.days = j.value("days", c.days);
  c.pct_faulty = j.value("pct_faulty", c.pct_faulty);
  c.fault_seed = j.value("fault_seed", c.fault_seed);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.window_length = j.value("window_length", c.window_length);
  if (j.contains("oracle")) c.oracle = oracle_params_from_json(j.at("oracle"));
  if (j.contains("regressor")) c.regressor = regressor_config_from_json(j.at("regressor"));
  if (j.contains("columns")) {
    const auto& k = j.at("columns");
    c.columns.air_temp = k.value("air_temp", c.columns.air_temp);
    c.columns.wind_speed = k.value("wind_speed", c.columns.wind_speed);
    c.columns.dew_point = k.value("dew_point", c.columns.dew_point);
    c.columns.solar_radiation = k.value("solar_radiation", c.columns.solar_radiation);
  }
  return c;
}

/// Regressor inputs for every sample; wind and radiation are clamped at zero.
inline std::vector<FstInput> fst_inputs(const WeatherSeries& s, const FstColumns& cols) {
  const auto a = s.schema.require_index(cols.air_temp);
  const auto w = s.schema.require_index(cols.wind_speed);
  const auto d = s.schema.require_index(cols.dew_point);
  const auto r = s.schema.require_index(cols.solar_radiation);
  std::vector<FstInput> out;
  out.reserve(s.size());
  for (const auto& x : s.samples) out.push_back(FstInput{x.values[a], x.values[w], x.values[d], x.values[r]}.clamped());
  return out;
}

struct FstWindowCounts {
  std::size_t total = 0;
  std::size_t faulty = 0;
  std::size_t flagged = 0;
  std::size_t flagged_faulty = 0;
};

struct FstExperimentReport {
  FstExperimentConfig config;
  std::string detector_kind;
  FstFitReport regressor;
  metrics::RegressionMetrics clean;
  metrics::RegressionMetrics imperfect;
  metrics::RegressionMetrics imputed;
  FstWindowCounts windows;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
};

inline nlohmann::json to_json(const FstExperimentReport& r) {
  return {{"config", to_json(r.config)},
          {"detector_kind", r.detector_kind},
          {"regressor", to_json(r.regressor)},
          {"conditions",
           {{"clean", metrics::to_json(r.clean)},
            {"imperfect", metrics::to_json(r.imperfect)},
            {"imputed", metrics::to_json(r.imputed)}}},
          {"windows",
           {{"total", r.windows.total},
            {"faulty", r.windows.faulty},
            {"flagged", r.windows.flagged},
            {"flagged_faulty", r.windows.flagged_faulty}}},
          {"train_samples", r.train_samples},
          {"test_samples", r.test_samples}};
}

/// Swappable regressor training; the default is fit_fst_regressor.
using FstTrainer = std::function<std::shared_ptr<const FstRegressor>(std::span<const FstInput>, std::span<const double>,
                                                                     const FstRegressorConfig&, FstFitReport&)>;

inline FstTrainer default_fst_trainer() {
  return [](std::span<const FstInput> in, std::span<const double> y, const FstRegressorConfig& c, FstFitReport& rep) {
    auto [model, report] = fit_fst_regressor(in, y, c);
    rep = std::move(report);
    return std::shared_ptr<const FstRegressor>(std::move(model));
  };
}

/// One regressor trained on the clean early part of the corpus, then scored on
/// the later part three ways: clean inputs, fault-injected inputs, and
/// fault-injected inputs whose detector-flagged windows were imputed.
inline FstExperimentReport run_fst_experiment(const FstExperimentConfig& config, const detect::Detector& detector,
                                              const impute::ArImputer& imputer,
                                              const FstTrainer& trainer = default_fst_trainer()) {
  config.validate();
  const auto series = ingest::synth_generate(ingest::default_synth_config(config.corpus_seed, config.days));
  if (detector.meta().attributes != series.schema.names()) {
    throw Error(Errc::incompatible, "detector attributes do not match the corpus");
  }
  if (detector.meta().window_length != config.window_length) {
    throw Error(Errc::incompatible, "detector window length " + std::to_string(detector.meta().window_length) +
                                        " does not match the experiment window " +
                                        std::to_string(config.window_length));
  }
  if (imputer.schema().names() != series.schema.names()) {
    throw Error(Errc::incompatible, "imputer attributes do not match the corpus");
  }

  const auto split = static_cast<std::size_t>(std::floor(config.train_fraction * static_cast<double>(series.size())));
  if (split < imputer.lags()) throw Error(Errc::empty_input, "training part is shorter than the imputer warm-up");
  const auto train = series.slice(0, split);
  const auto test = series.slice(split, series.size());

  // Ground truth comes from the clean inputs, one noise draw per sample in time order.
  const auto clean_in = fst_inputs(series, config.columns);
  std::vector<double> truth(clean_in.size());
  Rng noise(config.oracle.seed);
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = fst_oracle(clean_in[i], config.oracle, noise);

  FstExperimentReport report;
  report.config = config;
  report.detector_kind = detector.kind();
  report.train_samples = train.size();
  report.test_samples = test.size();
  const std::span<const FstInput> train_in(clean_in.data(), split);
  const std::span<const double> train_y(truth.data(), split);
  const auto model = trainer(train_in, train_y, config.regressor, report.regressor);

  const std::span<const double> test_y(truth.data() + split, test.size());
  auto score = [&](const WeatherSeries& s) {
    const auto pred = model->predict(fst_inputs(s, config.columns));
    return metrics::regression_metrics(test_y, pred);
  };

  const auto corrupted = faults::corrupt_series(test, config.pct_faulty, config.window_length, config.fault_seed);
  std::vector<bool> flags(test.size(), false);
  const WindowSpec spec{config.window_length, config.window_length};
  const auto starts = window_starts(test.size(), spec);
  const std::span<const WeatherSample> all(corrupted.series.samples);
  for (std::size_t w = 0; w < starts.size(); ++w) {
    const auto raw = window_matrix(all.subspan(starts[w], spec.length), corrupted.series.arity());
    const bool flagged = detector.classify_raw(raw).label != NoiseClass::clean;
    const bool faulty = corrupted.labels[w] != NoiseClass::clean;
    report.windows.total += 1;
    report.windows.faulty += faulty ? 1 : 0;
    report.windows.flagged += flagged ? 1 : 0;
    report.windows.flagged_faulty += flagged && faulty ? 1 : 0;
    if (flagged) std::fill(flags.begin() + static_cast<std::ptrdiff_t>(starts[w]),
                           flags.begin() + static_cast<std::ptrdiff_t>(starts[w] + spec.length), true);
  }
  const std::span<const WeatherSample> warmup(train.samples.data() + (train.size() - imputer.lags()), imputer.lags());
  const auto repaired = impute::impute_flagged(corrupted.series, flags, imputer, warmup);

  report.clean = score(test);
  report.imperfect = score(corrupted.series);
  report.imputed = score(repaired);
  return report;
}

}  // namespace cerealia::fst
