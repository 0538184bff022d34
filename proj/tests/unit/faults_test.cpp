#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cerealia/faults/dataset.hpp"
#include "cerealia/faults/injectors.hpp"
#include "cerealia/ingest/synth.hpp"
#include "support.hpp"

using namespace cerealia;
using namespace cerealia::faults;
using cerealia::testing::make_series;
using cerealia::testing::TempDir;

namespace {

std::vector<double> noisy(std::size_t n, std::uint64_t seed, double mean = 20.0, double sd = 5.0) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal(mean, sd);
  return x;
}

double stddev(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

void expect_identity_outside_mask(const std::vector<double>& before, const ColumnFault& f) {
  std::vector<bool> in(before.size(), false);
  for (auto i : f.mask) in[i] = true;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (!in[i]) {
      ASSERT_EQ(f.values[i], before[i]) << "index " << i;
    }
  }
}

WeatherSeries synth_windows(std::size_t windows, std::uint64_t seed = 7) {
  return ingest::corpus_series(seed, windows);
}

}  // namespace

TEST(Bias, HandComputedLevel) {
  const std::vector<double> x{10, 12, 14};
  const auto f = fault_bias(x, {2.0, {0, 3}});
  EXPECT_EQ(f.values, (std::vector<double>{24, 24, 24}));
  EXPECT_EQ(f.mask, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(f.warnings.empty());
  EXPECT_EQ(BiasFaultSpec{}.alpha, 2.0);
}

TEST(Bias, AlphaOneFlattensAndWarns) {
  const std::vector<double> x{1, 2, 3, 10, 12, 14, 7};
  const auto f = fault_bias(x, {1.0, {3, 6}});
  EXPECT_EQ(f.values, (std::vector<double>{1, 2, 3, 12, 12, 12, 7}));
  EXPECT_EQ(f.warnings.size(), 1u);
}

TEST(Bias, ConstantAtAlphaTimesOriginalMean) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = noisy(200, trial);
    const std::size_t b = rng.below(150);
    const std::size_t e = b + 1 + rng.below(50);
    const double alpha = rng.uniform(-3, 3);
    const auto f = fault_bias(x, {alpha, {b, e}});
    double mean = 0.0;
    for (std::size_t i = b; i < e; ++i) mean += x[i];
    mean /= static_cast<double>(e - b);
    const auto [lo, hi] = std::minmax_element(f.values.begin() + b, f.values.begin() + e);
    EXPECT_EQ(*hi - *lo, 0.0);
    EXPECT_NEAR(*lo, alpha * mean, 1e-9 * std::abs(alpha * mean) + 1e-12);
    expect_identity_outside_mask(x, f);
  }
}

TEST(Injectors, WindowsOutsideTheSeriesAreRangeErrors) {
  const std::vector<double> x(10, 1.0);
  const auto code = [](auto&& fn) -> std::optional<Errc> {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return std::nullopt;
  };
  EXPECT_EQ(code([&] { fault_bias(x, {2.0, {5, 11}}); }), Errc::range);
  EXPECT_EQ(code([&] { fault_malfunction(x, {4.5, {3, 3}, 1}); }), Errc::range);
  DriftFaultSpec d;
  d.window = {10, 12};
  EXPECT_EQ(code([&] { fault_drift(x, d); }), Errc::range);
  RandomFaultSpec r;
  r.window = IndexWindow{8, 20};
  EXPECT_EQ(code([&] { fault_random(x, r); }), Errc::range);
  r = {};
  r.density = 1.5;
  EXPECT_THROW(fault_random(x, r), Error);
}

TEST(Random, ZeroDensityIsIdentity) {
  const auto x = noisy(500, 1);
  RandomFaultSpec s;
  s.density = 0.0;
  s.seed = 3;
  const auto f = fault_random(x, s);
  EXPECT_EQ(f.values, x);
  EXPECT_TRUE(f.mask.empty());
}

TEST(Random, QuarterDensityOnTenThousandPoints) {
  const auto x = noisy(10000, 2);
  RandomFaultSpec s;
  s.density = 0.25;
  s.seed = 7;
  const auto f = fault_random(x, s);
  EXPECT_GE(f.mask.size(), 2350u);
  EXPECT_LE(f.mask.size(), 2650u);
  // mask is exactly the set of changed indices
  std::size_t changed = 0;
  for (std::size_t i = 0; i < x.size(); ++i) changed += f.values[i] != x[i];
  EXPECT_EQ(changed, f.mask.size());
  EXPECT_TRUE(std::is_sorted(f.mask.begin(), f.mask.end()));
}

TEST(Random, SparseDensityOnAThousandReadings) {
  const auto x = noisy(1050, 3);
  RandomFaultSpec s;
  s.density = 0.011;
  s.seed = 1;
  const auto n = fault_random(x, s).mask.size();
  EXPECT_GE(n, 4u);
  EXPECT_LE(n, 20u);
}

TEST(Random, FullDensityFactorBounds) {
  const auto x = noisy(5000, 4, 50.0, 10.0);
  RandomFaultSpec s;
  s.density = 1.0;
  s.eta_deadband = 0.0;
  s.seed = 5;
  const auto f = fault_random(x, s);
  ASSERT_EQ(f.mask.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double factor = f.values[i] / x[i];
    EXPECT_GE(factor, -0.5 - 1e-12);
    EXPECT_LE(factor, 2.5 + 1e-12);
  }
}

TEST(Random, DeadbandIsRespected) {
  const auto x = noisy(5000, 5, 50.0, 1.0);
  RandomFaultSpec s;
  s.density = 1.0;
  s.seed = 6;
  const auto f = fault_random(x, s);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_GE(std::abs(f.values[i] / x[i] - 1.0), 0.25 - 1e-12);
}

TEST(Malfunction, FlatSegmentIsUnchangedAndWarned) {
  std::vector<double> x(100, 3.0);
  const auto f = fault_malfunction(x, {4.5, {10, 60}, 1});
  EXPECT_EQ(f.values, x);
  EXPECT_EQ(f.mask.size(), 50u);
  EXPECT_EQ(f.warnings.size(), 1u);
}

TEST(Malfunction, PerturbationStddevIsIntensityTimesSigma) {
  const auto x = noisy(3000, 6);
  const IndexWindow w{500, 2500};
  const auto f = fault_malfunction(x, {4.5, w, 9});
  std::vector<double> inside(x.begin() + 500, x.begin() + 2500);
  std::vector<double> diff;
  for (std::size_t i = w.begin; i < w.end; ++i) diff.push_back(f.values[i] - x[i]);
  EXPECT_NEAR(stddev(diff) / (4.5 * stddev(inside)), 1.0, 0.1);
  expect_identity_outside_mask(x, f);
  EXPECT_EQ(f.mask.size(), 2000u);
}

TEST(Drift, FixedIntensityWithoutNoiseShiftsByTwentyAtTen) {
  std::vector<double> x(30);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 10.0 + 0.5 * static_cast<double>(i % 7);
  DriftFaultSpec s;
  s.fixed_intensity = 2.0;
  s.noise_intensity = 0.0;
  s.window = {7, 20};  // x[7] == 10
  const auto f = fault_drift(x, s);
  for (std::size_t i = 7; i < 20; ++i) EXPECT_EQ(f.values[i], x[i] + 20.0);
  expect_identity_outside_mask(x, f);
  EXPECT_EQ(*f.drawn_intensity, 2.0);
}

TEST(Drift, MeanOffsetIsDeltaPlusNoiseIntensity) {
  const auto x = noisy(4000, 7);
  DriftFaultSpec s;
  s.window = {1000, 3000};
  s.seed = 13;
  s.noise_intensity = 1.0;
  const auto f = fault_drift(x, s);
  const double delta = x[1000] * *f.drawn_intensity;
  std::vector<double> inside(x.begin() + 1000, x.begin() + 3000);
  double mean = 0.0;
  for (std::size_t i = 1000; i < 3000; ++i) mean += f.values[i] - x[i];
  mean /= 2000.0;
  const double se = 3.0 * stddev(inside) / std::sqrt(2000.0);
  EXPECT_NEAR(mean, delta + 1.0, 3.0 * se);
  EXPECT_GE(std::abs(*f.drawn_intensity), 0.5);
  EXPECT_LE(std::abs(*f.drawn_intensity), 4.0);
}

TEST(Drift, ZeroAnchorWarns) {
  std::vector<double> x{0, 1, 2, 3};
  DriftFaultSpec s;
  s.window = {0, 4};
  s.noise_intensity = 0.0;
  const auto f = fault_drift(x, s);
  EXPECT_EQ(f.values, x);
  EXPECT_EQ(f.warnings.size(), 1u);
}

TEST(Injectors, IdentityOutsideMaskOnRandomSeries) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = noisy(300, 100 + trial);
    const std::size_t b = rng.below(250);
    const IndexWindow w{b, b + 1 + rng.below(300 - b - 1)};
    RandomFaultSpec r;
    r.density = rng.uniform();
    r.seed = trial;
    r.window = w;
    expect_identity_outside_mask(x, fault_random(x, r));
    expect_identity_outside_mask(x, fault_malfunction(x, {4.5, w, static_cast<std::uint64_t>(trial)}));
    DriftFaultSpec d;
    d.window = w;
    d.seed = trial;
    expect_identity_outside_mask(x, fault_drift(x, d));
    expect_identity_outside_mask(x, fault_bias(x, {2.0, w}));
  }
}

TEST(Injectors, SeriesLevelApiRejectsUnknownAttribute) {
  const auto s = make_series({{1, 2, 3}}, {"t"});
  try {
    inject_bias(s, {2.0, {0, 3}}, "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::schema);
  }
  const auto r = inject_bias(s, {2.0, {0, 2}}, "t");
  EXPECT_EQ(r.series.column(0), (std::vector<double>{3, 3, 3}));
  EXPECT_EQ(r.mask, (std::vector<bool>{true, true, false}));
}

TEST(Dataset, ZeroPercentIsAllClean) {
  DatasetConfig c;
  c.pct_inconsistent = 0;
  const auto ds = build_labeled_dataset(synth_windows(120), c);
  EXPECT_EQ(ds.windows.size(), 120u);
  EXPECT_TRUE(std::all_of(ds.labels.begin(), ds.labels.end(), [](auto l) { return l == NoiseClass::clean; }));
  EXPECT_TRUE(ds.manifest.empty());
}

TEST(Dataset, QuarterOfFourHundredIsTwentyFivePerClass) {
  const auto ds = build_labeled_dataset(synth_windows(400), {});
  ASSERT_EQ(ds.windows.size(), 400u);
  std::map<NoiseClass, int> counts;
  for (auto l : ds.labels) ++counts[l];
  EXPECT_EQ(counts[NoiseClass::clean], 300);
  for (auto c : kFaultClasses) EXPECT_EQ(counts[c], 25) << to_string(c);
  EXPECT_EQ(ds.manifest.size(), 100u);
}

TEST(Dataset, FaultsStayInsideTheirWindow) {
  const auto ds = build_labeled_dataset(synth_windows(200), {});
  for (const auto& rec : ds.manifest) {
    const auto start = ds.starts[*rec.window_index];
    EXPECT_GE(rec.window.begin, start);
    EXPECT_LE(rec.window.end, start + 48);
    EXPECT_GE(rec.window.size(), 24u);
    EXPECT_EQ(rec.label, ds.labels[*rec.window_index]);
    EXPECT_EQ(rec.attributes.size(), 1u);
  }
}

TEST(Dataset, ScalerIsFitOnCleanWindowsOnly) {
  const auto series = synth_windows(150);
  const auto ds = build_labeled_dataset(series, {});
  std::vector<bool> covered(series.size(), false);
  for (std::size_t w = 0; w < ds.labels.size(); ++w) {
    if (ds.labels[w] != NoiseClass::clean) continue;
    for (std::size_t i = ds.starts[w]; i < ds.starts[w] + 48; ++i) covered[i] = true;
  }
  for (std::size_t j = 0; j < series.arity(); ++j) {
    double sum = 0.0, n = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
      if (covered[i]) sum += series.value(i, j), n += 1;
    }
    EXPECT_NEAR(ds.scaler.mean[j], sum / n, 1e-9 * std::max(1.0, std::abs(sum / n)));
  }
}

TEST(Dataset, SameSeedSameDataset) {
  const auto series = synth_windows(130);
  const auto a = build_labeled_dataset(series, {});
  const auto b = build_labeled_dataset(series, {});
  EXPECT_EQ(dataset_to_json(a), dataset_to_json(b));
  DatasetConfig other;
  other.seed = 8;
  EXPECT_NE(dataset_to_json(a), dataset_to_json(build_labeled_dataset(series, other)));
}

TEST(Dataset, TooFewWindowsIsEmptyInput) {
  try {
    build_labeled_dataset(synth_windows(99), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_input);
  }
}

TEST(Dataset, LabelProportionsOverRandomConfigurations) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t total = 100 + rng.below(5000);
    const double pct = rng.uniform(0.0, 100.0);
    const auto labels = assign_labels(total, pct, rng.next_u64());
    const auto expected = static_cast<std::size_t>(std::llround(static_cast<double>(total) * pct / 100.0));
    std::map<NoiseClass, std::size_t> counts;
    for (auto l : labels) ++counts[l];
    ASSERT_EQ(total - counts[NoiseClass::clean], expected);
    for (auto c : kFaultClasses) {
      const double quarter = static_cast<double>(expected) / 4.0;
      EXPECT_LE(std::abs(static_cast<double>(counts[c]) - quarter), 1.0);
      if (expected >= 20) {
        EXPECT_LE(std::abs(static_cast<double>(counts[c]) - quarter), 0.2 * quarter);
      }
    }
  }
  EXPECT_THROW(assign_labels(10, 101, 1), Error);
  EXPECT_THROW(assign_labels(10, 10, 1, NoiseClass::clean), Error);
}

TEST(Dataset, OnlyClassRestrictsLabels) {
  DatasetConfig c;
  c.only_class = NoiseClass::drift;
  const auto ds = build_labeled_dataset(synth_windows(100), c);
  for (auto l : ds.labels) EXPECT_TRUE(l == NoiseClass::clean || l == NoiseClass::drift);
}

TEST(Manifest, ReplayReproducesDatasetWindowsBitExactly) {
  const auto series = synth_windows(160);
  const auto ds = build_labeled_dataset(series, {});
  const auto records = manifest_from_json(manifest_to_json(ds.manifest));
  ASSERT_EQ(records.size(), ds.manifest.size());
  for (const auto& rec : records) {
    auto copy = series;
    replay_fault(copy, rec);
    const auto w = *rec.window_index;
    auto m = window_matrix(std::span<const WeatherSample>(copy.samples).subspan(ds.starts[w], 48), copy.arity());
    standardize_in_place(ds.scaler, m);
    ASSERT_TRUE(m == ds.windows[w]) << "window " << w << " class " << to_string(rec.label);
  }
}

TEST(Manifest, ReplayReproducesCorruptedSeriesBitExactly) {
  const auto series = synth_windows(200);
  for (bool all : {false, true}) {
    PlacementConfig pc;
    pc.all_attributes = all;
    const auto out = corrupt_series(series, 30, 48, 5, pc);
    auto copy = series;
    for (const auto& rec : manifest_from_json(manifest_to_json(out.manifest))) replay_fault(copy, rec);
    for (std::size_t t = 0; t < series.size(); ++t) ASSERT_EQ(copy.samples[t].values, out.series.samples[t].values);
    std::size_t masked = std::count(out.mask.begin(), out.mask.end(), true);
    EXPECT_GT(masked, 0u);
  }
}

TEST(Manifest, DocumentsRoundTripThroughJsonAndCbor) {
  TempDir dir("faults");
  const auto ds = build_labeled_dataset(synth_windows(100), {});
  for (const char* name : {"d.json", "d.cbor"}) {
    const auto path = dir.file(name);
    write_document(path, dataset_to_json(ds));
    const auto back = dataset_from_json(read_document(path));
    EXPECT_EQ(dataset_to_json(back), dataset_to_json(ds));
  }
}
