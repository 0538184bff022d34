#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/rng.hpp"
#include "cerealia/detect/fit.hpp"
#include "cerealia/detect/mlp.hpp"
#include "cerealia/fst/oracle.hpp"
#include "cerealia/metrics/metrics.hpp"

namespace cerealia::fst {

/// Anything that maps the four weather inputs to a surface temperature.
class FstRegressor {
 public:
  virtual ~FstRegressor() = default;
  virtual std::string kind() const = 0;
  virtual std::vector<double> predict(std::span<const FstInput> inputs) const = 0;

  double predict(const FstInput& in) const { return predict(std::span<const FstInput>(&in, 1)).front(); }
};

struct FstRegressorConfig {
  std::size_t hidden = 32;
  double learning_rate = 0.001;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 5;
  double validation_fraction = 0.2;
  std::uint64_t seed = 7;

  void validate() const {
    if (hidden == 0) throw Error(Errc::config, "hidden width must be >= 1");
    if (!(learning_rate > 0.0)) throw Error(Errc::config, "learning_rate must be > 0");
    if (batch_size == 0) throw Error(Errc::config, "batch_size must be >= 1");
    if (max_epochs == 0) throw Error(Errc::config, "max_epochs must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
      throw Error(Errc::config, "validation_fraction must be in (0, 1)");
    }
  }
};

inline nlohmann::json to_json(const FstRegressorConfig& c) {
  return {{"hidden", c.hidden},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"validation_fraction", c.validation_fraction},
          {"seed", c.seed}};
}

inline FstRegressorConfig regressor_config_from_json(const nlohmann::json& j) {
  FstRegressorConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.seed = j.value("seed", c.seed);
  return c;
}

inline std::array<double, 4> as_array(const FstInput& in) {
  return {in.air_temp, in.wind_speed, in.dew_point, in.solar_radiation};
}

/// 4 -> hidden -> 1 ReLU network on standardized inputs and target.
class MlpFstRegressor final : public FstRegressor {
 public:
  MlpFstRegressor(std::array<double, 4> in_mean, std::array<double, 4> in_std, double out_mean, double out_std,
                  detect::Mlp net)
      : in_mean_(in_mean), in_std_(in_std), out_mean_(out_mean), out_std_(out_std), net_(std::move(net)) {}

  std::string kind() const override { return "mlp"; }

  std::vector<double> predict(std::span<const FstInput> inputs) const override {
    const Eigen::MatrixXd y = net_.forward(design(inputs));
    std::vector<double> out(inputs.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = y(0, static_cast<Eigen::Index>(i)) * out_std_ + out_mean_;
    return out;
  }

  Eigen::MatrixXd design(std::span<const FstInput> inputs) const {
    Eigen::MatrixXd x(4, static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto v = as_array(inputs[i]);
      for (std::size_t q = 0; q < 4; ++q) x(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(i)) = (v[q] - in_mean_[q]) / in_std_[q];
    }
    return x;
  }

  double standardize_target(double y) const { return (y - out_mean_) / out_std_; }

  nlohmann::json to_json() const {
    return {{"kind", kind()},
            {"input_mean", in_mean_},
            {"input_std", in_std_},
            {"target_mean", out_mean_},
            {"target_std", out_std_},
            {"network", net_.to_json()}};
  }

 private:
  std::array<double, 4> in_mean_;
  std::array<double, 4> in_std_;
  double out_mean_;
  double out_std_;
  detect::Mlp net_;
};

struct FstFitReport {
  detect::FitHistory history;
  metrics::RegressionMetrics validation;
  std::size_t train_pairs = 0;
  std::size_t validation_pairs = 0;
};

inline nlohmann::json to_json(const FstFitReport& r) {
  return {{"epochs_run", r.history.epochs_run},
          {"best_epoch", r.history.best_epoch},
          {"train_loss", r.history.train_loss},
          {"validation_loss", r.history.validation_loss},
          {"train_pairs", r.train_pairs},
          {"validation_pairs", r.validation_pairs},
          {"validation", metrics::to_json(r.validation)}};
}

/// Trains on a seeded random split of the pairs and reports the held-out fit.
inline std::pair<std::shared_ptr<const MlpFstRegressor>, FstFitReport> fit_fst_regressor(
    std::span<const FstInput> inputs, std::span<const double> targets, const FstRegressorConfig& config = {}) {
  config.validate();
  if (inputs.size() != targets.size()) throw Error(Errc::shape, "inputs and targets differ in length");
  if (inputs.size() < 500) {
    throw Error(Errc::empty_input, "regressor needs at least 500 pairs, got " + std::to_string(inputs.size()));
  }
  const std::size_t n = inputs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(config.seed, 0xf570));
  split_rng.shuffle(std::span<std::size_t>(order));
  const auto n_val = static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(n)));
  const std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  const std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  std::array<double, 4> mean{};
  std::array<double, 4> sd{};
  double y_mean = 0.0;
  double y_sd = 0.0;
  for (auto i : train_idx) {
    const auto v = as_array(inputs[i]);
    for (std::size_t q = 0; q < 4; ++q) mean[q] += v[q];
    y_mean += targets[i];
  }
  const auto nt = static_cast<double>(train_idx.size());
  for (auto& m : mean) m /= nt;
  y_mean /= nt;
  for (auto i : train_idx) {
    const auto v = as_array(inputs[i]);
    for (std::size_t q = 0; q < 4; ++q) sd[q] += (v[q] - mean[q]) * (v[q] - mean[q]);
    y_sd += (targets[i] - y_mean) * (targets[i] - y_mean);
  }
  for (auto& s : sd) s = std::max(std::sqrt(s / nt), 1e-8);
  y_sd = std::max(std::sqrt(y_sd / nt), 1e-8);

  auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<FstInput> in;
    in.reserve(idx.size());
    for (auto i : idx) in.push_back(inputs[i]);
    return in;
  };
  const auto train_in = gather(train_idx);
  const auto val_in = gather(val_idx);

  detect::Mlp net({4, config.hidden, 1}, detect::OutputKind::linear, derive_seed(config.seed, 0xf571));
  MlpFstRegressor shape(mean, sd, y_mean, y_sd, net);
  auto targets_of = [&](const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd y(1, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) y(0, static_cast<Eigen::Index>(k)) = shape.standardize_target(targets[idx[k]]);
    return y;
  };
  const detect::FitOptions opt{config.learning_rate, config.batch_size, config.max_epochs,
                               config.early_stop_patience, 0.0, config.seed};
  FstFitReport report;
  report.history = detect::fit_network(net, shape.design(train_in), targets_of(train_idx), shape.design(val_in),
                                       targets_of(val_idx), opt);
  report.train_pairs = train_idx.size();
  report.validation_pairs = val_idx.size();

  auto model = std::make_shared<const MlpFstRegressor>(mean, sd, y_mean, y_sd, std::move(net));
  const auto pred = model->predict(val_in);
  std::vector<double> truth;
  for (auto i : val_idx) truth.push_back(targets[i]);
  report.validation = metrics::regression_metrics(truth, pred);
  return {std::move(model), std::move(report)};
}

}  // namespace cerealia::fst
