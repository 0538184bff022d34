#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/rng.hpp"
#include "cerealia/detect/detector.hpp"
#include "cerealia/detect/features.hpp"
#include "cerealia/detect/fit.hpp"
#include "cerealia/detect/mlp.hpp"
#include "cerealia/detect/training.hpp"
#include "cerealia/faults/dataset.hpp"
#include "cerealia/metrics/metrics.hpp"

namespace cerealia::detect {

/// What the network sees: the window's summary features (see WindowFeatureMap)
/// or the raw flattened window.
enum class NeuralInput { features, window };

inline std::string_view to_string(NeuralInput i) { return i == NeuralInput::features ? "features" : "window"; }

inline NeuralInput parse_neural_input(std::string_view s) {
  if (s == "features") return NeuralInput::features;
  if (s == "window") return NeuralInput::window;
  throw Error(Errc::config, "unknown network input '" + std::string(s) + "' (expected features or window)");
}

struct NeuralDetectorConfig {
  NeuralInput input = NeuralInput::features;
  std::vector<std::size_t> hidden_layers{64, 32};
  double dropout = 0.2;
  double learning_rate = 0.001;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 5;
  double validation_fraction = 0.2;
  std::uint64_t seed = 7;

  void validate() const {
    for (auto w : hidden_layers) {
      if (w == 0) throw Error(Errc::config, "hidden layer widths must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(Errc::config, "dropout must lie in [0, 1)");
    if (!(learning_rate > 0.0)) throw Error(Errc::config, "learning rate must be positive");
    if (batch_size == 0) throw Error(Errc::config, "batch size must be positive");
    if (max_epochs == 0) throw Error(Errc::config, "max_epochs must be at least 1; no training is possible");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
      throw Error(Errc::config, "validation fraction must lie in (0, 1)");
    }
  }
};

inline nlohmann::json to_json(const NeuralDetectorConfig& c) {
  return {{"input", std::string(to_string(c.input))},
          {"hidden_layers", c.hidden_layers},
          {"dropout", c.dropout},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"validation_fraction", c.validation_fraction},
          {"seed", c.seed}};
}

inline NeuralDetectorConfig neural_config_from_json(const nlohmann::json& j) {
  NeuralDetectorConfig c;
  if (j.contains("input")) c.input = parse_neural_input(j.at("input").get<std::string>());
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.dropout = j.value("dropout", c.dropout);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.seed = j.value("seed", c.seed);
  return c;
}

struct TrainReport {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  std::vector<double> train_loss_history;
  std::vector<double> validation_loss_history;
  metrics::ClassificationMetrics validation;
  std::size_t train_windows = 0;
  std::size_t validation_windows = 0;
};

inline nlohmann::json to_json(const TrainReport& r) {
  return {{"epochs_run", r.epochs_run},
          {"best_epoch", r.best_epoch},
          {"train_loss", r.train_loss},
          {"validation_loss", r.validation_loss},
          {"train_loss_history", r.train_loss_history},
          {"validation_loss_history", r.validation_loss_history},
          {"train_windows", r.train_windows},
          {"validation_windows", r.validation_windows},
          {"validation", metrics::to_json(r.validation)}};
}

/// Standardized window -> input vector (features or flattened) -> MLP -> softmax.
class NeuralDetector final : public Detector {
 public:
  NeuralDetector(DetectorMeta meta, WindowFeatureMap features, Mlp net, NeuralDetectorConfig config)
      : Detector(std::move(meta)), features_(std::move(features)), net_(std::move(net)), config_(std::move(config)) {
    const auto inputs = config_.input == NeuralInput::features
                            ? features_.size()
                            : this->meta().window_length * this->meta().attributes.size();
    if (config_.input == NeuralInput::features && features_.arity() != this->meta().attributes.size()) {
      throw Error(Errc::shape, "feature map arity does not match the detector attributes");
    }
    if (net_.inputs() != inputs || net_.outputs() != kNoiseClassCount) {
      throw Error(Errc::shape, "network shape does not match the detector input");
    }
  }

  std::string kind() const override { return "neural"; }
  const Mlp& network() const noexcept { return net_; }
  const WindowFeatureMap& feature_map() const noexcept { return features_; }
  const NeuralDetectorConfig& config() const noexcept { return config_; }

  nlohmann::json payload() const override {
    nlohmann::json j{{"config", to_json(config_)}, {"network", net_.to_json()}};
    if (config_.input == NeuralInput::features) j["features"] = features_.to_json();
    return j;
  }

  Eigen::VectorXd input_vector(const WindowMatrix& window) const {
    if (config_.input == NeuralInput::features) {
      const auto f = features_.transform(window);
      return Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
    }
    return Eigen::Map<const Eigen::VectorXd>(window.data(), window.size());
  }

 protected:
  Classification classify_checked(const WindowMatrix& window) const override {
    const Eigen::MatrixXd p = net_.forward(input_vector(window));
    Classification c;
    for (std::size_t i = 0; i < kNoiseClassCount; ++i) c.scores[i] = p(static_cast<Eigen::Index>(i), 0);
    c.label = argmax_label(c.scores);
    return c;
  }

 private:
  WindowFeatureMap features_;
  Mlp net_;
  NeuralDetectorConfig config_;
};

namespace detail {

/// One input column per window, in the order of `idx`.
inline Eigen::MatrixXd stack_inputs(const faults::LabeledDataset& ds, const std::vector<std::size_t>& idx,
                                    NeuralInput input, const WindowFeatureMap& features) {
  const auto rows = static_cast<Eigen::Index>(input == NeuralInput::features ? features.size()
                                                                              : ds.window_length * ds.arity());
  Eigen::MatrixXd x(rows, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    const auto& w = ds.windows[idx[c]];
    if (input == NeuralInput::features) {
      const auto f = features.transform(w);
      x.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::VectorXd>(f.data(), rows);
    } else {
      x.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
    }
  }
  return x;
}

inline Eigen::MatrixXd one_hot(const faults::LabeledDataset& ds, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNoiseClassCount),
                                            static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    y(static_cast<Eigen::Index>(index_of(ds.labels[idx[c]])), static_cast<Eigen::Index>(c)) = 1.0;
  }
  return y;
}

}  // namespace detail

/// Mini-batch Adam on categorical cross-entropy with early stopping on
/// validation loss; the best-validation weights are kept.
inline std::pair<std::shared_ptr<const NeuralDetector>, TrainReport> train_neural(
    const faults::LabeledDataset& ds, const NeuralDetectorConfig& config) {
  config.validate();
  if (ds.size() < 100) {
    throw Error(Errc::empty_input, "training needs at least 100 windows, got " + std::to_string(ds.size()));
  }
  if (distinct_labels(ds) < 2) throw Error(Errc::degenerate, "dataset holds a single class; nothing to separate");

  const auto split = stratified_split(ds, config.validation_fraction, config.seed);
  WindowFeatureMap features;
  if (config.input == NeuralInput::features) {
    std::vector<const WindowMatrix*> clean;
    for (auto i : split.train) {
      if (ds.labels[i] == NoiseClass::clean) clean.push_back(&ds.windows[i]);
    }
    if (clean.empty()) {
      for (auto i : split.train) clean.push_back(&ds.windows[i]);
    }
    features = WindowFeatureMap::fit(clean);
  }
  const Eigen::MatrixXd x_train = detail::stack_inputs(ds, split.train, config.input, features);
  const Eigen::MatrixXd y_train = detail::one_hot(ds, split.train);
  const Eigen::MatrixXd x_val = detail::stack_inputs(ds, split.validation, config.input, features);
  const Eigen::MatrixXd y_val = detail::one_hot(ds, split.validation);

  std::vector<std::size_t> widths{static_cast<std::size_t>(x_train.rows())};
  widths.insert(widths.end(), config.hidden_layers.begin(), config.hidden_layers.end());
  widths.push_back(kNoiseClassCount);
  Mlp net(widths, OutputKind::softmax, derive_seed(config.seed, 0x1417));
  const FitOptions opt{config.learning_rate, config.batch_size, config.max_epochs,
                       config.early_stop_patience, config.dropout, config.seed};
  auto history = fit_network(net, x_train, y_train, x_val, y_val, opt);

  TrainReport report;
  report.train_windows = split.train.size();
  report.validation_windows = split.validation.size();
  report.epochs_run = history.epochs_run;
  report.best_epoch = history.best_epoch;
  report.train_loss = history.train_loss;
  report.validation_loss = history.validation_loss;
  report.train_loss_history = std::move(history.train_loss_history);
  report.validation_loss_history = std::move(history.validation_loss_history);

  auto detector = std::make_shared<const NeuralDetector>(
      DetectorMeta{ds.attributes, ds.window_length, ds.scaler}, std::move(features), std::move(net), config);
  report.validation = evaluate_detector(*detector, ds, split.validation).metrics;
  return {std::move(detector), std::move(report)};
}

}  // namespace cerealia::detect
