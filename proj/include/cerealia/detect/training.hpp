#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/rng.hpp"
#include "cerealia/detect/detector.hpp"
#include "cerealia/faults/dataset.hpp"
#include "cerealia/metrics/metrics.hpp"

namespace cerealia::detect {

/// Window indices ordered by series position, so results do not depend on
/// the order windows are stored in.
inline std::vector<std::size_t> canonical_order(const faults::LabeledDataset& ds) {
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (ds.starts[a] != ds.starts[b]) return ds.starts[a] < ds.starts[b];
    return index_of(ds.labels[a]) < index_of(ds.labels[b]);
  });
  return order;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Per class, round(fraction * count) windows go to validation (at least one
/// when the class has two or more windows). Both lists come back in canonical order.
inline Split stratified_split(const faults::LabeledDataset& ds, double validation_fraction, std::uint64_t seed) {
  const auto order = canonical_order(ds);
  std::array<std::vector<std::size_t>, kNoiseClassCount> by_class;
  for (auto i : order) by_class[index_of(ds.labels[i])].push_back(i);
  std::vector<bool> is_val(ds.size(), false);
  for (std::size_t c = 0; c < kNoiseClassCount; ++c) {
    auto members = by_class[c];
    if (members.empty()) continue;
    Rng rng(derive_seed(seed, 0x5011u + c));
    rng.shuffle(std::span<std::size_t>(members));
    auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(members.size())));
    if (members.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, members.size() - 1);
    for (std::size_t k = 0; k < n_val; ++k) is_val[members[k]] = true;
  }
  Split s;
  for (auto i : order) (is_val[i] ? s.validation : s.train).push_back(i);
  return s;
}

inline std::size_t distinct_labels(const faults::LabeledDataset& ds) {
  std::set<NoiseClass> seen(ds.labels.begin(), ds.labels.end());
  return seen.size();
}

/// Brings a window standardized with `from` onto the scale of `to`.
inline WindowMatrix restandardize(const WindowMatrix& w, const ScalerParams& from, const ScalerParams& to) {
  if (from == to) return w;
  WindowMatrix m = w;
  unstandardize_in_place(from, m);
  standardize_in_place(to, m);
  return m;
}

inline void require_compatible(const Detector& d, const faults::LabeledDataset& ds) {
  if (d.meta().attributes != ds.attributes || d.meta().window_length != ds.window_length) {
    throw Error(Errc::incompatible, "detector was trained on a different attribute layout or window length");
  }
}

struct Evaluation {
  std::vector<NoiseClass> truth;
  std::vector<NoiseClass> predicted;
  metrics::ClassificationMetrics metrics;
};

/// Classifies the selected windows (all when `indices` is empty).
inline Evaluation evaluate_detector(const Detector& d, const faults::LabeledDataset& ds,
                                    const std::vector<std::size_t>& indices = {}) {
  require_compatible(d, ds);
  std::vector<std::size_t> idx = indices;
  if (idx.empty()) idx = canonical_order(ds);
  Evaluation e;
  for (auto i : idx) {
    e.truth.push_back(ds.labels[i]);
    e.predicted.push_back(d.classify(restandardize(ds.windows[i], ds.scaler, d.meta().scaler)).label);
  }
  e.metrics = metrics::classification_metrics(e.truth, e.predicted);
  return e;
}

}  // namespace cerealia::detect
