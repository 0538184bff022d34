#pragma once

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/noise_class.hpp"

namespace cerealia::metrics {

/// Counts indexed (true class, predicted class).
class ConfusionMatrix {
 public:
  void add(NoiseClass truth, NoiseClass predicted, std::uint64_t n = 1) {
    counts_[index_of(truth)][index_of(predicted)] += n;
  }

  std::uint64_t at(NoiseClass truth, NoiseClass predicted) const {
    return counts_[index_of(truth)][index_of(predicted)];
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts_) {
      for (auto c : row) t += c;
    }
    return t;
  }

  std::uint64_t true_positives(NoiseClass c) const { return at(c, c); }

  std::uint64_t false_positives(NoiseClass c) const {
    std::uint64_t fp = 0;
    for (auto t : kAllNoiseClasses) {
      if (t != c) fp += at(t, c);
    }
    return fp;
  }

  std::uint64_t false_negatives(NoiseClass c) const {
    std::uint64_t fn = 0;
    for (auto p : kAllNoiseClasses) {
      if (p != c) fn += at(c, p);
    }
    return fn;
  }

  /// True when the class occurs among the truths or the predictions.
  bool present(NoiseClass c) const { return true_positives(c) + false_positives(c) + false_negatives(c) > 0; }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::array<std::array<std::uint64_t, kNoiseClassCount>, kNoiseClassCount> counts_{};
};

inline ConfusionMatrix confusion(std::span<const NoiseClass> truth, std::span<const NoiseClass> predicted) {
  if (truth.size() != predicted.size()) {
    throw Error(Errc::shape, "truth has " + std::to_string(truth.size()) + " labels but predictions have " +
                                 std::to_string(predicted.size()));
  }
  if (truth.empty()) throw Error(Errc::empty_input, "cannot build a confusion matrix from no labels");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < truth.size(); ++i) m.add(truth[i], predicted[i]);
  return m;
}

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Set when any of the three hit a zero denominator and was reported as 0.
  bool degenerate = false;
};

/// Harmonic mean; 0 when both are 0.
inline double f1_from_pr(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

inline Prf1 prf1(const ConfusionMatrix& m, NoiseClass c) {
  const auto tp = static_cast<double>(m.true_positives(c));
  const auto fp = static_cast<double>(m.false_positives(c));
  const auto fn = static_cast<double>(m.false_negatives(c));
  Prf1 r;
  if (tp + fp > 0.0) {
    r.precision = tp / (tp + fp);
  } else {
    r.degenerate = true;
  }
  if (tp + fn > 0.0) {
    r.recall = tp / (tp + fn);
  } else {
    r.degenerate = true;
  }
  if (r.precision + r.recall == 0.0) r.degenerate = true;
  r.f1 = f1_from_pr(r.precision, r.recall);
  return r;
}

inline Prf1 prf1(const ConfusionMatrix& m, std::size_t class_index) { return prf1(m, noise_class_at(class_index)); }

struct ClassificationMetrics {
  ConfusionMatrix matrix;
  std::array<Prf1, kNoiseClassCount> per_class{};
  std::vector<NoiseClass> averaged;  // classes entering the macro averages
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;

  const Prf1& of(NoiseClass c) const { return per_class[index_of(c)]; }
};

/// Macro averages run over the classes present in truth or predictions.
inline ClassificationMetrics classification_metrics(const ConfusionMatrix& m) {
  ClassificationMetrics out;
  out.matrix = m;
  double correct = 0.0;
  for (auto c : kAllNoiseClasses) {
    out.per_class[index_of(c)] = prf1(m, c);
    correct += static_cast<double>(m.true_positives(c));
    if (!m.present(c)) continue;
    out.averaged.push_back(c);
    out.macro_precision += out.per_class[index_of(c)].precision;
    out.macro_recall += out.per_class[index_of(c)].recall;
    out.macro_f1 += out.per_class[index_of(c)].f1;
  }
  if (!out.averaged.empty()) {
    const auto k = static_cast<double>(out.averaged.size());
    out.macro_precision /= k;
    out.macro_recall /= k;
    out.macro_f1 /= k;
  }
  const auto total = static_cast<double>(m.total());
  out.accuracy = total > 0.0 ? correct / total : 0.0;
  return out;
}

inline ClassificationMetrics classification_metrics(std::span<const NoiseClass> truth,
                                                    std::span<const NoiseClass> predicted) {
  return classification_metrics(confusion(truth, predicted));
}

struct RegressionMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
};

/// Raised when the targets are constant; carries MAE and RMSE regardless.
class R2Undefined : public Error {
 public:
  explicit R2Undefined(RegressionMetrics partial)
      : Error(Errc::degenerate, "R^2 is undefined for constant targets"), partial_(partial) {}
  const RegressionMetrics& partial() const noexcept { return partial_; }

 private:
  RegressionMetrics partial_;
};

inline RegressionMetrics regression_metrics(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) {
    throw Error(Errc::shape, "y has " + std::to_string(y.size()) + " values but predictions have " +
                                 std::to_string(y_hat.size()));
  }
  if (y.size() < 2) throw Error(Errc::empty_input, "regression metrics need at least two points");
  const auto n = static_cast<double>(y.size());
  double abs_sum = 0.0;
  double ss_res = 0.0;
  double y_sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - y_hat[i];
    abs_sum += std::abs(e);
    ss_res += e * e;
    y_sum += y[i];
  }
  const double y_mean = y_sum / n;
  double ss_tot = 0.0;
  for (double v : y) ss_tot += (v - y_mean) * (v - y_mean);
  RegressionMetrics r{abs_sum / n, std::sqrt(ss_res / n), 0.0};
  if (ss_tot == 0.0) throw R2Undefined(r);
  r.r2 = 1.0 - ss_res / ss_tot;
  return r;
}

// ---------------------------------------------------------------------------
// Report serialization (full precision; rounding is a display concern)

inline nlohmann::json to_json(const Prf1& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}, {"degenerate", p.degenerate}};
}

inline nlohmann::json to_json(const ConfusionMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (auto t : kAllNoiseClasses) {
    nlohmann::json row = nlohmann::json::array();
    for (auto p : kAllNoiseClasses) row.push_back(m.at(t, p));
    rows.push_back(row);
  }
  nlohmann::json labels = nlohmann::json::array();
  for (auto c : kAllNoiseClasses) labels.push_back(std::string(to_string(c)));
  return {{"labels", labels}, {"counts", rows}};
}

inline nlohmann::json to_json(const ClassificationMetrics& m) {
  nlohmann::json per_class = nlohmann::json::object();
  for (auto c : kAllNoiseClasses) per_class[std::string(to_string(c))] = to_json(m.of(c));
  nlohmann::json averaged = nlohmann::json::array();
  for (auto c : m.averaged) averaged.push_back(std::string(to_string(c)));
  return {{"macro_precision", m.macro_precision},
          {"macro_recall", m.macro_recall},
          {"macro_f1", m.macro_f1},
          {"accuracy", m.accuracy},
          {"macro_over", averaged},
          {"per_class", per_class},
          {"confusion", to_json(m.matrix)}};
}

inline nlohmann::json to_json(const RegressionMetrics& r) {
  return {{"mae", r.mae}, {"rmse", r.rmse}, {"r2", r.r2}};
}

}  // namespace cerealia::metrics
