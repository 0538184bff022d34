#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <deque>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/series.hpp"
#include "cerealia/core/time.hpp"
#include "cerealia/ingest/schemas.hpp"

namespace cerealia::impute {

struct ArImputerConfig {
  std::size_t lags = 12;
  double ridge = 1e-3;
  bool calendar_features = true;
  std::uint64_t seed = 0;  // the fit is deterministic; kept so reports carry every seed

  void validate() const {
    if (lags < 1) throw Error(Errc::config, "imputer needs at least one lag");
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw Error(Errc::config, "ridge must be finite and >= 0");
  }

  std::size_t calendar_count() const noexcept { return calendar_features ? 4 : 0; }
  std::size_t coefficient_count() const noexcept { return 1 + lags + calendar_count(); }
};

inline nlohmann::json to_json(const ArImputerConfig& c) {
  return {{"lags", c.lags}, {"ridge", c.ridge}, {"calendar_features", c.calendar_features}, {"seed", c.seed}};
}

inline ArImputerConfig imputer_config_from_json(const nlohmann::json& j) {
  ArImputerConfig c;
  c.lags = j.value("lags", c.lags);
  c.ridge = j.value("ridge", c.ridge);
  c.calendar_features = j.value("calendar_features", c.calendar_features);
  c.seed = j.value("seed", c.seed);
  return c;
}

/// Coefficients laid out as [intercept, lag 1 .. lag p, sin hour, cos hour, sin day, cos day].
struct AttributeModel {
  std::vector<double> coefficients;
  double residual_variance = 0.0;
  std::size_t rows = 0;

  double residual_stddev() const { return std::sqrt(residual_variance); }
};

/// sin/cos of time-of-day and day-of-year.
inline std::array<double, 4> calendar_terms(Timestamp ts) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double h = two_pi * hour_of_day(ts) / 24.0;
  const double d = two_pi * day_of_year(ts) / 365.25;
  return {std::sin(h), std::cos(h), std::sin(d), std::cos(d)};
}

class ArImputer {
 public:
  ArImputer(AttributeSchema schema, ArImputerConfig config, std::vector<AttributeModel> models)
      : schema_(std::move(schema)), config_(config), models_(std::move(models)) {
    config_.validate();
    if (models_.size() != schema_.arity()) throw Error(Errc::shape, "one model per attribute is required");
    for (const auto& m : models_) {
      if (m.coefficients.size() != config_.coefficient_count()) {
        throw Error(Errc::shape, "imputer coefficient vector has the wrong length");
      }
    }
  }

  const AttributeSchema& schema() const noexcept { return schema_; }
  const ArImputerConfig& config() const noexcept { return config_; }
  std::size_t lags() const noexcept { return config_.lags; }
  const AttributeModel& model(std::size_t j) const { return models_.at(j); }

  /// One-step prediction for attribute j at time `at`. `lags` holds at least
  /// p values, most recent last.
  double predict(std::size_t j, std::span<const double> lags, Timestamp at) const {
    const auto& b = models_.at(j).coefficients;
    const std::size_t p = config_.lags;
    double y = b[0];
    for (std::size_t i = 1; i <= p; ++i) y += b[i] * lags[lags.size() - i];
    if (config_.calendar_features) {
      const auto cal = calendar_terms(at);
      for (std::size_t q = 0; q < 4; ++q) y += b[1 + p + q] * cal[q];
    }
    return y;
  }

  /// Iterated one-step forecast of the `horizon` samples following `recent`.
  std::vector<WeatherSample> forecast(std::span<const WeatherSample> recent, std::size_t horizon) const {
    const std::size_t p = config_.lags;
    const std::size_t n = schema_.arity();
    if (recent.size() < p) {
      throw Error(Errc::empty_input, "forecast needs " + std::to_string(p) + " recent samples, got " +
                                         std::to_string(recent.size()));
    }
    std::vector<std::vector<double>> ctx(n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t t = recent.size() - p; t < recent.size(); ++t) {
        if (recent[t].values.size() != n) throw Error(Errc::shape, "sample arity does not match the imputer");
        const double v = recent[t].values[j];
        if (!std::isfinite(v)) {
          throw Error(Errc::empty_input, "forecast needs " + std::to_string(p) + " valid recent values of '" +
                                             schema_.attributes[j].name + "'");
        }
        ctx[j].push_back(v);
      }
    }
    std::vector<WeatherSample> out;
    out.reserve(horizon);
    Timestamp ts = recent.back().timestamp;
    for (std::size_t k = 0; k < horizon; ++k) {
      ts += schema_.sampling_interval;
      WeatherSample s{ts, std::vector<double>(n)};
      for (std::size_t j = 0; j < n; ++j) {
        s.values[j] = predict(j, ctx[j], ts);
        ctx[j].push_back(s.values[j]);
      }
      out.push_back(std::move(s));
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json models = nlohmann::json::array();
    for (std::size_t j = 0; j < models_.size(); ++j) {
      models.push_back({{"attribute", schema_.attributes[j].name},
                        {"coefficients", models_[j].coefficients},
                        {"residual_variance", models_[j].residual_variance},
                        {"rows", models_[j].rows}});
    }
    return {{"format", kFormat},
            {"version", kVersion},
            {"config", impute::to_json(config_)},
            {"schema", ingest::schema_to_json(schema_)},
            {"models", models}};
  }

  static ArImputer from_json(const nlohmann::json& j) {
    try {
      if (j.value("format", std::string{}) != kFormat) throw Error(Errc::parse, "not an imputer file");
      if (j.at("version").get<int>() != kVersion) {
        throw Error(Errc::incompatible, "unsupported imputer version " + j.at("version").dump());
      }
      std::vector<AttributeModel> models;
      for (const auto& m : j.at("models")) {
        models.push_back({m.at("coefficients").get<std::vector<double>>(), m.at("residual_variance").get<double>(),
                          m.at("rows").get<std::size_t>()});
      }
      return ArImputer(ingest::schema_from_json(j.at("schema")), imputer_config_from_json(j.at("config")),
                       std::move(models));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse, std::string("malformed imputer file: ") + e.what());
    }
  }

  static constexpr const char* kFormat = "cerealia-imputer";
  static constexpr int kVersion = 1;

 private:
  AttributeSchema schema_;
  ArImputerConfig config_;
  std::vector<AttributeModel> models_;
};

namespace detail {

/// Ridge least squares with an unpenalized intercept. Columns are centred, so
/// the intercept falls out of the means. Returns [intercept, slopes...].
inline Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double ridge,
                                   const std::string& what) {
  const auto rows = x.rows();
  const Eigen::RowVectorXd xm = x.colwise().mean();
  const double ym = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - xm;
  const Eigen::VectorXd yc = y.array() - ym;
  Eigen::MatrixXd a = xc.transpose() * xc;
  a.diagonal().array() += ridge * static_cast<double>(rows);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
  const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-12 * scale) {
    throw Error(Errc::numerical, "singular normal equations for '" + what + "'; use a ridge penalty > 0");
  }
  const Eigen::VectorXd beta = ldlt.solve(xc.transpose() * yc);
  Eigen::VectorXd out(beta.size() + 1);
  out[0] = ym - xm.dot(beta);
  out.tail(beta.size()) = beta;
  return out;
}

}  // namespace detail

/// Fits one ridge AR(p) model per attribute. Rows whose target or lags are
/// missing are skipped. A constant attribute gets an intercept-only model.
inline ArImputer fit_imputer(const WeatherSeries& history, const ArImputerConfig& config = {}) {
  config.validate();
  const std::size_t p = config.lags;
  if (history.size() < 10 * p) {
    throw Error(Errc::empty_input, "imputer needs at least " + std::to_string(10 * p) + " samples of history, got " +
                                       std::to_string(history.size()));
  }
  const std::size_t n = history.arity();
  const std::size_t cal = config.calendar_count();
  std::vector<std::array<double, 4>> calendar(history.size());
  if (cal > 0) {
    for (std::size_t t = 0; t < history.size(); ++t) calendar[t] = calendar_terms(history.samples[t].timestamp);
  }

  std::vector<AttributeModel> models(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto col = history.column(j);
    std::vector<std::size_t> targets;
    for (std::size_t t = p; t < col.size(); ++t) {
      bool ok = std::isfinite(col[t]);
      for (std::size_t i = 1; ok && i <= p; ++i) ok = std::isfinite(col[t - i]);
      if (ok) targets.push_back(t);
    }
    const std::string& name = history.schema.attributes[j].name;
    if (targets.size() < config.coefficient_count()) {
      throw Error(Errc::empty_input, "too few complete rows to fit '" + name + "'");
    }
    auto& m = models[j];
    m.rows = targets.size();
    m.coefficients.assign(config.coefficient_count(), 0.0);

    const double first = col[targets.front()];
    const bool constant = std::all_of(targets.begin(), targets.end(), [&](std::size_t t) {
      for (std::size_t i = 0; i <= p; ++i) {
        if (col[t - i] != first) return false;
      }
      return true;
    });
    if (constant) {
      m.coefficients[0] = first;
      continue;
    }

    const auto rows = static_cast<Eigen::Index>(targets.size());
    Eigen::MatrixXd x(rows, static_cast<Eigen::Index>(p + cal));
    Eigen::VectorXd y(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const std::size_t t = targets[static_cast<std::size_t>(r)];
      y[r] = col[t];
      for (std::size_t i = 1; i <= p; ++i) x(r, static_cast<Eigen::Index>(i - 1)) = col[t - i];
      for (std::size_t q = 0; q < cal; ++q) x(r, static_cast<Eigen::Index>(p + q)) = calendar[t][q];
    }
    const Eigen::VectorXd beta = detail::ridge_solve(x, y, config.ridge, name);
    for (Eigen::Index q = 0; q < beta.size(); ++q) m.coefficients[static_cast<std::size_t>(q)] = beta[q];
    const Eigen::VectorXd resid = y - ((x * beta.tail(beta.size() - 1)).array() + beta[0]).matrix();
    m.residual_variance = resid.squaredNorm() / static_cast<double>(rows);
  }
  return ArImputer(history.schema, config, std::move(models));
}

/// Read access to a sample stream, by index.
template <typename S>
concept SampleSource = requires(const S& s, std::size_t i, std::size_t j) {
  { s.size() } -> std::convertible_to<std::size_t>;
  { s.timestamp(i) } -> std::convertible_to<Timestamp>;
  { s.value(i, j) } -> std::convertible_to<double>;
  { s.schema() } -> std::convertible_to<const AttributeSchema&>;
};

struct SeriesSource {
  const WeatherSeries& series;

  std::size_t size() const { return series.size(); }
  Timestamp timestamp(std::size_t i) const { return series.samples[i].timestamp; }
  double value(std::size_t i, std::size_t j) const { return series.samples[i].values[j]; }
  const AttributeSchema& schema() const { return series.schema; }
};

/// Replaces every flagged sample with a left-to-right forecast. Forecasts see
/// only unflagged values, earlier imputations and `warmup`; a flagged value is
/// never read. Unflagged samples are copied unchanged, missing ones included
/// (a missing context value is stood in for by its forecast, or restarts the
/// warm-up when there is not yet enough context).
template <SampleSource Src>
WeatherSeries impute_flagged(const Src& source, const std::vector<bool>& flags, const ArImputer& imputer,
                             std::span<const WeatherSample> warmup = {}) {
  const std::size_t len = source.size();
  if (flags.size() != len) {
    throw Error(Errc::shape, "flags length " + std::to_string(flags.size()) + " does not match series length " +
                                 std::to_string(len));
  }
  const std::size_t n = source.schema().arity();
  if (imputer.schema().arity() != n) throw Error(Errc::incompatible, "imputer arity does not match series");
  const std::size_t p = imputer.lags();

  std::vector<std::deque<double>> ctx(n);
  auto push = [&](std::size_t j, double v) {
    ctx[j].push_back(v);
    if (ctx[j].size() > p) ctx[j].pop_front();
  };
  for (const auto& s : warmup) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(s.values.at(j))) throw Error(Errc::warmup, "warm-up segment has a missing value");
      push(j, s.values[j]);
    }
  }

  WeatherSeries out{source.schema(), {}};
  out.samples.resize(len);
  std::vector<double> lags(p);
  auto forecast_at = [&](std::size_t j, Timestamp at) {
    std::copy(ctx[j].begin(), ctx[j].end(), lags.begin());
    return imputer.predict(j, lags, at);
  };
  for (std::size_t i = 0; i < len; ++i) {
    auto& s = out.samples[i];
    s.timestamp = source.timestamp(i);
    s.values.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const bool ready = ctx[j].size() == p;
      if (flags[i]) {
        if (!ready) {
          throw Error(Errc::warmup, "sample " + std::to_string(i) + " is flagged before " + std::to_string(p) +
                                        " trusted samples are available");
        }
        s.values[j] = forecast_at(j, s.timestamp);
        push(j, s.values[j]);
        continue;
      }
      const double v = source.value(i, j);
      s.values[j] = v;
      if (std::isfinite(v)) {
        push(j, v);
      } else if (ready) {
        push(j, forecast_at(j, s.timestamp));
      } else {
        ctx[j].clear();  // not enough context to stand in for it; warm up again
      }
    }
  }
  return out;
}

inline WeatherSeries impute_flagged(const WeatherSeries& series, const std::vector<bool>& flags,
                                    const ArImputer& imputer, std::span<const WeatherSample> warmup = {}) {
  return impute_flagged(SeriesSource{series}, flags, imputer, warmup);
}

}  // namespace cerealia::impute
