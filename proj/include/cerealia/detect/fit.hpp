#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cerealia/core/error.hpp"
#include "cerealia/core/rng.hpp"
#include "cerealia/detect/mlp.hpp"

namespace cerealia::detect {

struct FitOptions {
  double learning_rate = 0.001;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double dropout = 0.0;
  std::uint64_t seed = 7;
};

struct FitHistory {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  std::vector<double> train_loss_history;
  std::vector<double> validation_loss_history;
};

namespace detail {

inline double batched_loss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  // Summed in fixed chunks so memory stays flat on large splits.
  constexpr Eigen::Index chunk = 1024;
  double total = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); c += chunk) {
    const Eigen::Index n = std::min(chunk, x.cols() - c);
    total += net.loss(x.middleCols(c, n), y.middleCols(c, n)) * static_cast<double>(n);
  }
  return total / static_cast<double>(x.cols());
}

}  // namespace detail

/// Mini-batch Adam with early stopping on validation loss. On return `net`
/// holds the best-validation weights. Epoch e shuffles with
/// derive_seed(seed, e) and draws dropout masks from derive_seed(seed ^ 0xd809, e).
inline FitHistory fit_network(Mlp& net, const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                              const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val, const FitOptions& opt) {
  if (opt.max_epochs == 0) throw Error(Errc::config, "max_epochs must be >= 1");
  if (opt.batch_size == 0) throw Error(Errc::config, "batch_size must be >= 1");
  if (x_train.cols() == 0 || x_val.cols() == 0) throw Error(Errc::empty_input, "training and validation sets must be non-empty");
  Adam adam(net, opt.learning_rate);
  FitHistory h;
  Mlp best = net;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(x_train.cols()));
  Mlp::Gradients g;
  for (std::size_t epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng shuffle_rng(derive_seed(opt.seed, epoch));
    shuffle_rng.shuffle(std::span<Eigen::Index>(perm));
    Rng dropout_rng(derive_seed(opt.seed ^ 0xd809u, epoch));
    for (std::size_t start = 0; start < perm.size(); start += opt.batch_size) {
      const std::size_t n = std::min(opt.batch_size, perm.size() - start);
      Eigen::MatrixXd xb(x_train.rows(), static_cast<Eigen::Index>(n));
      Eigen::MatrixXd yb(y_train.rows(), static_cast<Eigen::Index>(n));
      for (std::size_t k = 0; k < n; ++k) {
        xb.col(static_cast<Eigen::Index>(k)) = x_train.col(perm[start + k]);
        yb.col(static_cast<Eigen::Index>(k)) = y_train.col(perm[start + k]);
      }
      const double l = net.loss_and_gradients(xb, yb, opt.dropout, &dropout_rng, g);
      if (!std::isfinite(l)) {
        throw Error(Errc::divergence, "training diverged (non-finite loss) at epoch " + std::to_string(epoch));
      }
      adam.step(net, g);
    }
    const double train_loss = detail::batched_loss(net, x_train, y_train);
    const double val_loss = detail::batched_loss(net, x_val, y_val);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      throw Error(Errc::divergence, "training diverged (non-finite loss) at epoch " + std::to_string(epoch));
    }
    h.train_loss_history.push_back(train_loss);
    h.validation_loss_history.push_back(val_loss);
    h.epochs_run = epoch;
    if (val_loss < best_val) {
      best_val = val_loss;
      best = net;
      h.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      break;
    }
  }
  h.train_loss = h.train_loss_history[h.best_epoch - 1];
  h.validation_loss = best_val;
  net = std::move(best);
  return h;
}

}  // namespace cerealia::detect
