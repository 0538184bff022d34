#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cerealia/core/rng.hpp"
#include "cerealia/metrics/metrics.hpp"

using namespace cerealia;
using namespace cerealia::metrics;

namespace {

std::vector<NoiseClass> random_labels(Rng& rng, std::size_t n) {
  std::vector<NoiseClass> out(n);
  for (auto& l : out) l = noise_class_at(rng.below(kAllNoiseClasses.size()));
  return out;
}

}  // namespace

TEST(Confusion, PerfectPredictionsAreDiagonal) {
  const std::vector<NoiseClass> y{NoiseClass::clean, NoiseClass::bias, NoiseClass::drift, NoiseClass::bias};
  const auto m = confusion(y, y);
  for (auto t : kAllNoiseClasses) {
    for (auto p : kAllNoiseClasses) {
      EXPECT_EQ(m.at(t, p), t == p ? m.at(t, t) : 0u);
    }
  }
  EXPECT_EQ(m.at(NoiseClass::bias, NoiseClass::bias), 2u);
  const auto r = prf1(m, NoiseClass::bias);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.f1, 1.0);
}

TEST(Confusion, CountsFollowTheDefinition) {
  const std::vector<NoiseClass> y{NoiseClass::clean, NoiseClass::bias};
  const std::vector<NoiseClass> p{NoiseClass::bias, NoiseClass::bias};
  const auto m = confusion(y, p);
  EXPECT_EQ(m.at(NoiseClass::clean, NoiseClass::bias), 1u);
  EXPECT_EQ(m.at(NoiseClass::bias, NoiseClass::bias), 1u);
  EXPECT_EQ(m.total(), 2u);
}

TEST(Confusion, TotalIsConservedAndLengthsMustMatch) {
  Rng rng(1);
  const auto a = random_labels(rng, 1000), b = random_labels(rng, 1000);
  EXPECT_EQ(confusion(a, b).total(), 1000u);
  try {
    confusion(std::span(a).first(3), std::span(b).first(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::shape);
  }
}

TEST(Prf1, ThreeHitsOneFalseAlarmOneMiss) {
  ConfusionMatrix m;
  m.add(NoiseClass::bias, NoiseClass::bias, 3);
  m.add(NoiseClass::clean, NoiseClass::bias, 1);
  m.add(NoiseClass::bias, NoiseClass::clean, 1);
  const auto r = prf1(m, NoiseClass::bias);
  EXPECT_DOUBLE_EQ(r.precision, 0.75);
  EXPECT_DOUBLE_EQ(r.recall, 0.75);
  EXPECT_DOUBLE_EQ(r.f1, 0.75);
}

TEST(Prf1, PublishedPrecisionRecallPairIsConsistent) {
  EXPECT_NEAR(f1_from_pr(0.9963, 0.9890), 0.9926, 5e-5);
}

TEST(Prf1, ZeroPrecisionAndRecallGiveZeroF1) {
  ConfusionMatrix m;
  m.add(NoiseClass::bias, NoiseClass::clean, 2);
  m.add(NoiseClass::clean, NoiseClass::drift, 1);
  const auto r = prf1(m, NoiseClass::bias);
  EXPECT_EQ(r.f1, 0.0);
  EXPECT_TRUE(r.degenerate);
  EXPECT_THROW(prf1(m, std::size_t{9}), Error);
}

TEST(Classification, AgreesWithBruteForceCounting) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    const auto y = random_labels(rng, n), p = random_labels(rng, n);
    const auto m = classification_metrics(y, p);
    double f1_sum = 0.0;
    std::size_t classes = 0, correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += y[i] == p[i];
    for (auto c : kAllNoiseClasses) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += y[i] == c && p[i] == c;
        fp += y[i] != c && p[i] == c;
        fn += y[i] == c && p[i] != c;
      }
      const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
      const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      ASSERT_NEAR(m.of(c).precision, prec, 1e-12);
      ASSERT_NEAR(m.of(c).recall, rec, 1e-12);
      ASSERT_NEAR(m.of(c).f1, f1, 1e-12);
      if (std::find(y.begin(), y.end(), c) != y.end() || std::find(p.begin(), p.end(), c) != p.end()) {
        f1_sum += f1;
        ++classes;
      }
    }
    ASSERT_NEAR(m.macro_f1, f1_sum / static_cast<double>(classes), 1e-12);
    ASSERT_NEAR(m.accuracy, static_cast<double>(correct) / static_cast<double>(n), 1e-12);
    for (auto c : kAllNoiseClasses) {
      ASSERT_GE(m.of(c).f1, 0.0);
      ASSERT_LE(m.of(c).f1, 1.0);
    }
  }
}

TEST(Classification, InvariantUnderJointPermutation) {
  Rng rng(3);
  auto y = random_labels(rng, 200), p = random_labels(rng, 200);
  const auto before = to_json(classification_metrics(y, p));
  std::vector<std::size_t> order(200);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<NoiseClass> y2, p2;
  for (auto i : order) y2.push_back(y[i]), p2.push_back(p[i]);
  EXPECT_EQ(to_json(classification_metrics(y2, p2)), before);
}

TEST(Regression, IdentityIsPerfect) {
  const std::vector<double> y{1, 5, 2, 8};
  const auto r = regression_metrics(y, y);
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.r2, 1.0);
}

TEST(Regression, HandComputedExample) {
  const std::vector<double> y{1, 2, 3}, yh{2, 2, 2};
  const auto r = regression_metrics(y, yh);
  EXPECT_DOUBLE_EQ(r.mae, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.rmse, std::sqrt(2.0 / 3.0));
  EXPECT_DOUBLE_EQ(r.r2, 0.0);
}

TEST(Regression, ConstantTargetsLeaveR2Undefined) {
  const std::vector<double> y{4, 4, 4}, yh{3, 4, 6};
  try {
    regression_metrics(y, yh);
    FAIL();
  } catch (const R2Undefined& e) {
    EXPECT_DOUBLE_EQ(e.partial().mae, 1.0);
    EXPECT_DOUBLE_EQ(e.partial().rmse, std::sqrt(5.0 / 3.0));
    EXPECT_EQ(e.code(), Errc::degenerate);
  }
}

TEST(Regression, RmseDominatesMaeAndIgnoresOrder) {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.below(100);
    std::vector<double> y(n), yh(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.normal(0, 10);
      yh[i] = y[i] + rng.normal(0, 3);
    }
    const auto r = regression_metrics(y, yh);
    ASSERT_GE(r.rmse, r.mae - 1e-12);
    ASSERT_GE(r.mae, 0.0);
    std::reverse(y.begin(), y.end());
    std::reverse(yh.begin(), yh.end());
    const auto s = regression_metrics(y, yh);
    ASSERT_NEAR(s.mae, r.mae, 1e-12);
    ASSERT_NEAR(s.rmse, r.rmse, 1e-12);
    ASSERT_NEAR(s.r2, r.r2, 1e-12);
  }
}
