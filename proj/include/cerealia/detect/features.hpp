#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/series.hpp"

namespace cerealia::detect {

/// Per-attribute statistics of one standardized window.
struct AttributeStats {
  double max_abs_diff = 0.0;
  double mean_abs_diff = 0.0;
  double min_block_diff_sd = 0.0;  // smallest stddev of first differences over any block
  double max_abs_residual = 0.0;   // |x - median of 5 neighbours|
  double mean_abs_residual = 0.0;
  double range = 0.0;
  double mean = 0.0;
  double max_step = 0.0;  // largest |mean(next b) - mean(previous b)|
  double head_mean = 0.0;
  double tail_mean = 0.0;
};

inline constexpr std::size_t kStatBlock = 8;

/// Median-of-five residual at each index, with edge samples repeated.
inline std::vector<double> median5_residuals(std::span<const double> x) {
  std::vector<double> r(x.size());
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    std::array<double, 5> w{};
    for (std::ptrdiff_t q = -2; q <= 2; ++q) w[static_cast<std::size_t>(q + 2)] = x[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(t + q, 0, n - 1))];
    std::nth_element(w.begin(), w.begin() + 2, w.end());
    r[static_cast<std::size_t>(t)] = x[static_cast<std::size_t>(t)] - w[2];
  }
  return r;
}

inline AttributeStats attribute_stats(std::span<const double> x) {
  AttributeStats s;
  const std::size_t k = x.size();
  if (k < 2) throw Error(Errc::shape, "window statistics need at least two samples");
  const std::size_t b = std::min(kStatBlock, k / 2 == 0 ? std::size_t{1} : k / 2);

  std::vector<double> d(k - 1);
  for (std::size_t t = 1; t < k; ++t) d[t - 1] = x[t] - x[t - 1];
  for (double v : d) {
    s.max_abs_diff = std::max(s.max_abs_diff, std::abs(v));
    s.mean_abs_diff += std::abs(v);
  }
  s.mean_abs_diff /= static_cast<double>(d.size());

  const std::size_t db = std::min(b, d.size());
  s.min_block_diff_sd = std::numeric_limits<double>::infinity();
  for (std::size_t start = 0; start + db <= d.size(); ++start) {
    double mu = 0.0;
    for (std::size_t q = start; q < start + db; ++q) mu += d[q];
    mu /= static_cast<double>(db);
    double ss = 0.0;
    for (std::size_t q = start; q < start + db; ++q) ss += (d[q] - mu) * (d[q] - mu);
    s.min_block_diff_sd = std::min(s.min_block_diff_sd, std::sqrt(ss / static_cast<double>(db)));
  }

  for (double r : median5_residuals(x)) {
    s.max_abs_residual = std::max(s.max_abs_residual, std::abs(r));
    s.mean_abs_residual += std::abs(r);
  }
  s.mean_abs_residual /= static_cast<double>(k);

  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  s.range = *hi - *lo;
  for (double v : x) s.mean += v;
  s.mean /= static_cast<double>(k);

  for (std::size_t t = b; t + b <= k; ++t) {
    double before = 0.0;
    double after = 0.0;
    for (std::size_t q = t - b; q < t; ++q) before += x[q];
    for (std::size_t q = t; q < t + b; ++q) after += x[q];
    s.max_step = std::max(s.max_step, std::abs(after - before) / static_cast<double>(b));
  }
  for (std::size_t q = 0; q < b; ++q) {
    s.head_mean += x[q];
    s.tail_mean += x[k - b + q];
  }
  s.head_mean /= static_cast<double>(b);
  s.tail_mean /= static_cast<double>(b);
  return s;
}

/// Window -> fixed-length feature vector. Per attribute: the ten statistics
/// above plus the signed residuals of its mean, head and tail levels against
/// a linear prediction from the other attributes' levels. The prediction
/// coefficients and the per-feature centring come from clean training windows;
/// each centred feature is compressed with sign(z) * log(1 + |z|).
class WindowFeatureMap {
 public:
  static constexpr std::size_t kPerAttribute = 13;

  WindowFeatureMap() = default;

  std::size_t arity() const noexcept { return arity_; }
  std::size_t size() const noexcept { return arity_ * kPerAttribute; }
  bool fitted() const noexcept { return arity_ != 0; }

  /// Fits on clean standardized windows (each k x n).
  static WindowFeatureMap fit(const std::vector<const WindowMatrix*>& clean, double ridge = 1e-6) {
    if (clean.empty()) throw Error(Errc::empty_input, "feature map needs at least one clean window");
    WindowFeatureMap f;
    f.arity_ = static_cast<std::size_t>(clean.front()->cols());
    const std::size_t n = f.arity_;
    std::vector<std::vector<AttributeStats>> stats;
    stats.reserve(clean.size());
    for (const auto* w : clean) stats.push_back(all_stats(*w));

    // Level prediction of attribute j from the other attributes' window means.
    f.coef_.assign(n, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
    if (n >= 2) {
      const auto rows = static_cast<Eigen::Index>(stats.size());
      Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(n));
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) m(r, static_cast<Eigen::Index>(j)) = stats[static_cast<std::size_t>(r)][j].mean;
      }
      for (std::size_t j = 0; j < n; ++j) {
        Eigen::MatrixXd a(rows, static_cast<Eigen::Index>(n));  // intercept + the other n-1 attributes
        a.col(0).setOnes();
        Eigen::Index c = 1;
        for (std::size_t i = 0; i < n; ++i) {
          if (i != j) a.col(c++) = m.col(static_cast<Eigen::Index>(i));
        }
        Eigen::MatrixXd ata = a.transpose() * a;
        ata.diagonal().tail(ata.rows() - 1).array() += ridge * static_cast<double>(rows);
        const Eigen::VectorXd beta = ata.ldlt().solve(a.transpose() * m.col(static_cast<Eigen::Index>(j)));
        f.coef_[j] = beta;
      }
    }

    std::vector<std::vector<double>> raw;
    raw.reserve(clean.size());
    for (const auto& s : stats) raw.push_back(f.raw_features(s));
    const std::size_t d = f.size();
    f.center_.assign(d, 0.0);
    f.scale_.assign(d, 0.0);
    for (const auto& v : raw) {
      for (std::size_t q = 0; q < d; ++q) f.center_[q] += v[q];
    }
    for (auto& c : f.center_) c /= static_cast<double>(raw.size());
    for (const auto& v : raw) {
      for (std::size_t q = 0; q < d; ++q) f.scale_[q] += (v[q] - f.center_[q]) * (v[q] - f.center_[q]);
    }
    for (auto& s : f.scale_) s = std::max(std::sqrt(s / static_cast<double>(raw.size())), 1e-6);
    return f;
  }

  std::vector<double> transform(const WindowMatrix& w) const {
    if (static_cast<std::size_t>(w.cols()) != arity_) throw Error(Errc::shape, "feature map arity mismatch");
    auto v = raw_features(all_stats(w));
    for (std::size_t q = 0; q < v.size(); ++q) {
      const double z = (v[q] - center_[q]) / scale_[q];
      v[q] = std::copysign(std::log1p(std::abs(z)), z);
    }
    return v;
  }

  nlohmann::json to_json() const {
    nlohmann::json coef = nlohmann::json::array();
    for (const auto& c : coef_) coef.push_back(std::vector<double>(c.data(), c.data() + c.size()));
    return {{"arity", arity_}, {"level_coefficients", coef}, {"center", center_}, {"scale", scale_}};
  }

  static WindowFeatureMap from_json(const nlohmann::json& j) {
    WindowFeatureMap f;
    f.arity_ = j.at("arity").get<std::size_t>();
    for (const auto& c : j.at("level_coefficients")) {
      const auto v = c.get<std::vector<double>>();
      if (v.size() != f.arity_) throw Error(Errc::parse, "level coefficient vector has the wrong length");
      f.coef_.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    f.center_ = j.at("center").get<std::vector<double>>();
    f.scale_ = j.at("scale").get<std::vector<double>>();
    if (f.coef_.size() != f.arity_ || f.center_.size() != f.size() || f.scale_.size() != f.size()) {
      throw Error(Errc::parse, "feature map dimensions are inconsistent");
    }
    return f;
  }

 private:
  static std::vector<AttributeStats> all_stats(const WindowMatrix& w) {
    std::vector<AttributeStats> out;
    std::vector<double> col(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index t = 0; t < w.rows(); ++t) col[static_cast<std::size_t>(t)] = w(t, j);
      out.push_back(attribute_stats(col));
    }
    return out;
  }

  double predict_level(const std::vector<AttributeStats>& s, std::size_t j, double AttributeStats::*level) const {
    const auto& beta = coef_[j];
    double p = beta[0];
    Eigen::Index c = 1;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != j) p += beta[c++] * (s[i].*level);
    }
    return p;
  }

  std::vector<double> raw_features(const std::vector<AttributeStats>& s) const {
    std::vector<double> v;
    v.reserve(size());
    for (std::size_t j = 0; j < s.size(); ++j) {
      const auto& a = s[j];
      v.insert(v.end(), {a.max_abs_diff, a.mean_abs_diff, a.min_block_diff_sd, a.max_abs_residual,
                         a.mean_abs_residual, a.range, a.mean, a.max_step, a.head_mean, a.tail_mean});
      if (s.size() >= 2) {
        v.push_back(a.mean - predict_level(s, j, &AttributeStats::mean));
        v.push_back(a.head_mean - predict_level(s, j, &AttributeStats::head_mean));
        v.push_back(a.tail_mean - predict_level(s, j, &AttributeStats::tail_mean));
      } else {
        v.insert(v.end(), {0.0, 0.0, 0.0});
      }
    }
    return v;
  }

  std::size_t arity_ = 0;
  std::vector<Eigen::VectorXd> coef_;
  std::vector<double> center_;
  std::vector<double> scale_;
};

}  // namespace cerealia::detect
