#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/rng.hpp"

namespace cerealia::detect {

enum class OutputKind { softmax, linear };

/// Feed-forward network with ReLU hidden layers. Samples are columns.
/// softmax output pairs with categorical cross-entropy, linear with MSE.
class Mlp {
 public:
  struct Gradients {
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;
  };

  Mlp() = default;

  /// widths = {inputs, hidden..., outputs}; He-normal weights, zero biases.
  Mlp(std::vector<std::size_t> widths, OutputKind output, std::uint64_t seed) : widths_(std::move(widths)), output_(output) {
    if (widths_.size() < 2) throw Error(Errc::config, "network needs at least an input and an output layer");
    for (auto w : widths_) {
      if (w == 0) throw Error(Errc::config, "layer widths must be positive");
    }
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(widths_[l]);
      const auto out = static_cast<Eigen::Index>(widths_[l + 1]);
      const double scale = std::sqrt(2.0 / static_cast<double>(in));
      Eigen::MatrixXd w(out, in);
      for (Eigen::Index c = 0; c < in; ++c) {
        for (Eigen::Index r = 0; r < out; ++r) w(r, c) = rng.normal() * scale;
      }
      weights_.push_back(std::move(w));
      biases_.push_back(Eigen::VectorXd::Zero(out));
    }
  }

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  OutputKind output_kind() const noexcept { return output_; }
  std::size_t layers() const noexcept { return weights_.size(); }
  std::size_t inputs() const noexcept { return widths_.front(); }
  std::size_t outputs() const noexcept { return widths_.back(); }
  const std::vector<Eigen::MatrixXd>& weights() const noexcept { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const noexcept { return biases_; }

  /// Inference pass (no dropout). Returns probabilities for softmax output.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::MatrixXd z = weights_[l] * a;
      z.colwise() += biases_[l];
      if (l + 1 < weights_.size()) {
        a = z.cwiseMax(0.0);
      } else {
        a = std::move(z);
      }
    }
    if (output_ == OutputKind::softmax) softmax_columns(a);
    return a;
  }

  /// Mean loss over the batch and its gradient. With dropout > 0 a mask is
  /// drawn from `rng` for every hidden activation (inverted dropout).
  double loss_and_gradients(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double dropout, Rng* rng,
                            Gradients& g) const {
    const auto batch = static_cast<double>(x.cols());
    std::vector<Eigen::MatrixXd> acts;  // acts[l] is the input of layer l
    std::vector<Eigen::MatrixXd> masks(weights_.size());
    acts.reserve(weights_.size() + 1);
    acts.push_back(x);
    Eigen::MatrixXd out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::MatrixXd z = weights_[l] * acts.back();
      z.colwise() += biases_[l];
      if (l + 1 < weights_.size()) {
        Eigen::MatrixXd a = z.cwiseMax(0.0);
        if (dropout > 0.0 && rng != nullptr) {
          Eigen::MatrixXd m(a.rows(), a.cols());
          const double keep = 1.0 - dropout;
          for (Eigen::Index c = 0; c < m.cols(); ++c) {
            for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng->uniform() < keep ? 1.0 / keep : 0.0;
          }
          a = a.cwiseProduct(m);
          masks[l] = std::move(m);
        }
        acts.push_back(std::move(a));
      } else {
        out = std::move(z);
      }
    }

    double loss = 0.0;
    Eigen::MatrixXd delta;
    if (output_ == OutputKind::softmax) {
      softmax_columns(out);
      for (Eigen::Index c = 0; c < out.cols(); ++c) {
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
          if (y(r, c) != 0.0) loss -= y(r, c) * std::log(std::max(out(r, c), 1e-300));
        }
      }
      loss /= batch;
      delta = (out - y) / batch;
    } else {
      const Eigen::MatrixXd e = out - y;
      loss = e.squaredNorm() / batch;
      delta = 2.0 * e / batch;
    }

    g.dw.resize(weights_.size());
    g.db.resize(weights_.size());
    for (std::size_t l = weights_.size(); l-- > 0;) {
      g.dw[l] = delta * acts[l].transpose();
      g.db[l] = delta.rowwise().sum();
      if (l == 0) break;
      Eigen::MatrixXd back = weights_[l].transpose() * delta;
      // acts[l] is post-ReLU (and post-dropout); zero entries block the gradient.
      back = back.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
      if (masks[l - 1].size() != 0) back = back.cwiseProduct(masks[l - 1]);
      delta = std::move(back);
    }
    return loss;
  }

  /// Loss without dropout and without gradients.
  double loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) const {
    const Eigen::MatrixXd out = forward(x);
    const auto batch = static_cast<double>(x.cols());
    if (output_ == OutputKind::softmax) {
      double l = 0.0;
      for (Eigen::Index c = 0; c < out.cols(); ++c) {
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
          if (y(r, c) != 0.0) l -= y(r, c) * std::log(std::max(out(r, c), 1e-300));
        }
      }
      return l / batch;
    }
    return (out - y).squaredNorm() / batch;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    }
    return n;
  }

  /// Weights then biases, layer by layer, column-major within a matrix.
  std::vector<double> parameters() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      p.insert(p.end(), weights_[l].data(), weights_[l].data() + weights_[l].size());
      p.insert(p.end(), biases_[l].data(), biases_[l].data() + biases_[l].size());
    }
    return p;
  }

  void set_parameters(std::span<const double> p) {
    if (p.size() != parameter_count()) throw Error(Errc::shape, "parameter vector has the wrong length");
    std::size_t k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index i = 0; i < weights_[l].size(); ++i) weights_[l].data()[i] = p[k++];
      for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l].data()[i] = p[k++];
    }
  }

  static std::vector<double> flatten(const Gradients& g) {
    std::vector<double> p;
    for (std::size_t l = 0; l < g.dw.size(); ++l) {
      p.insert(p.end(), g.dw[l].data(), g.dw[l].data() + g.dw[l].size());
      p.insert(p.end(), g.db[l].data(), g.db[l].data() + g.db[l].size());
    }
    return p;
  }

  std::vector<Eigen::MatrixXd>& mutable_weights() noexcept { return weights_; }
  std::vector<Eigen::VectorXd>& mutable_biases() noexcept { return biases_; }

  nlohmann::json to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(weights_[l].cols()));
        for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) row[static_cast<std::size_t>(c)] = weights_[l](r, c);
        rows.push_back(std::move(row));
      }
      layers.push_back({{"w", std::move(rows)},
                        {"b", std::vector<double>(biases_[l].data(), biases_[l].data() + biases_[l].size())}});
    }
    return {{"widths", widths_},
            {"output", output_ == OutputKind::softmax ? "softmax" : "linear"},
            {"layers", std::move(layers)}};
  }

  static Mlp from_json(const nlohmann::json& j) {
    Mlp m;
    m.widths_ = j.at("widths").get<std::vector<std::size_t>>();
    const auto out = j.at("output").get<std::string>();
    if (out == "softmax") {
      m.output_ = OutputKind::softmax;
    } else if (out == "linear") {
      m.output_ = OutputKind::linear;
    } else {
      throw Error(Errc::parse, "unknown network output kind '" + out + "'");
    }
    const auto& layers = j.at("layers");
    if (m.widths_.size() < 2 || layers.size() + 1 != m.widths_.size()) {
      throw Error(Errc::parse, "network layer count does not match its widths");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto rows = static_cast<Eigen::Index>(m.widths_[l + 1]);
      const auto cols = static_cast<Eigen::Index>(m.widths_[l]);
      const auto& w = layers[l].at("w");
      if (static_cast<Eigen::Index>(w.size()) != rows) throw Error(Errc::parse, "weight matrix has the wrong shape");
      Eigen::MatrixXd wm(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const auto row = w[static_cast<std::size_t>(r)].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != cols) throw Error(Errc::parse, "weight matrix has the wrong shape");
        for (Eigen::Index c = 0; c < cols; ++c) wm(r, c) = row[static_cast<std::size_t>(c)];
      }
      const auto b = layers[l].at("b").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(b.size()) != rows) throw Error(Errc::parse, "bias vector has the wrong length");
      m.weights_.push_back(std::move(wm));
      m.biases_.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), rows));
    }
    return m;
  }

 private:
  static void softmax_columns(Eigen::MatrixXd& a) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      auto col = a.col(c);
      const double m = col.maxCoeff();
      col = (col.array() - m).exp().matrix();
      col /= col.sum();
    }
  }

  std::vector<std::size_t> widths_;
  OutputKind output_ = OutputKind::softmax;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

/// Adaptive-moment optimizer (bias-corrected first and second moments).
class Adam {
 public:
  Adam(const Mlp& net, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-7)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
    for (std::size_t l = 0; l < net.layers(); ++l) {
      mw_.push_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
      vw_.push_back(mw_.back());
      mb_.push_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
      vb_.push_back(mb_.back());
    }
  }

  void step(Mlp& net, const Mlp::Gradients& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto& w = net.mutable_weights();
    auto& b = net.mutable_biases();
    for (std::size_t l = 0; l < w.size(); ++l) {
      mw_[l] = beta1_ * mw_[l] + (1.0 - beta1_) * g.dw[l];
      vw_[l] = beta2_ * vw_[l] + (1.0 - beta2_) * g.dw[l].cwiseProduct(g.dw[l]);
      w[l].array() -= lr_ * (mw_[l].array() / c1) / ((vw_[l].array() / c2).sqrt() + eps_);
      mb_[l] = beta1_ * mb_[l] + (1.0 - beta1_) * g.db[l];
      vb_[l] = beta2_ * vb_[l] + (1.0 - beta2_) * g.db[l].cwiseProduct(g.db[l]);
      b[l].array() -= lr_ * (mb_[l].array() / c1) / ((vb_[l].array() / c2).sqrt() + eps_);
    }
  }

  std::uint64_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Eigen::MatrixXd> mw_, vw_;
  std::vector<Eigen::VectorXd> mb_, vb_;
};

}  // namespace cerealia::detect
