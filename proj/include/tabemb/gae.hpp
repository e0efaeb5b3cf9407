#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tabemb/error.hpp"
#include "tabemb/matrix.hpp"
#include "tabemb/util.hpp"

namespace tabemb {

enum class Optimizer { gradient_descent, adam };

struct TrainConfig {
  std::size_t dim = 3;
  double alpha = 0.0;  // weight of the entrywise L1 term
  double learning_rate = 0.01;
  /// Gradients with a larger Frobenius norm are rescaled to this norm;
  /// +infinity disables clipping.
  double max_grad_norm = 1e-6;
  std::size_t check_window = 10000;
  double rel_improvement_stop = 0.001;
  std::size_t max_epochs = 1000000;
  std::size_t log_every = 100;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::gradient_descent;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const {
    if (dim < 1) throw InvalidArgument("embedding dimension must be >= 1");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in [0, 1)");
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (!(max_grad_norm > 0.0)) throw InvalidArgument("max gradient norm must be positive");
    if (check_window < 1) throw InvalidArgument("check window must be >= 1 epoch");
    if (log_every < 1) throw InvalidArgument("log interval must be >= 1 epoch");
  }
};

/// One linear graph-convolution layer with identity node features, so the
/// encoder output is Z = P * W with P the propagation matrix.
struct GaeModel {
  DenseMatrix propagation;  // n x n
  DenseMatrix weights;      // n x d

  std::size_t nodes() const noexcept { return static_cast<std::size_t>(propagation.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(weights.cols()); }
};

/// Glorot-uniform weights, drawn row by row in node order.
inline GaeModel init_model(DenseMatrix propagation, std::size_t dim, std::uint64_t seed) {
  if (dim < 1) throw InvalidArgument("embedding dimension must be >= 1");
  if (propagation.rows() != propagation.cols()) throw InvalidArgument("propagation matrix must be square");
  const auto n = propagation.rows();
  const auto d = static_cast<Eigen::Index>(dim);
  const double s = std::sqrt(6.0 / static_cast<double>(n + d));
  SplitMix64 rng(seed);
  DenseMatrix w(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) w(i, j) = rng.uniform(-s, s);
  return {std::move(propagation), std::move(w)};
}

struct ForwardResult {
  DenseMatrix embeddings;      // Z, n x d
  DenseMatrix reconstruction;  // sigmoid(Z Z^T), n x n
};

inline ForwardResult forward(const GaeModel& model) {
  ForwardResult r;
  r.embeddings.noalias() = model.propagation * model.weights;
  r.reconstruction.noalias() = r.embeddings * r.embeddings.transpose();
  r.reconstruction.array() = r.reconstruction.array().logistic();
  return r;
}

/// (1 - alpha) * ||R - T||_F + alpha * sum |R - T|.
inline double loss(const DenseMatrix& reconstruction, const DenseMatrix& target, double alpha) {
  if (reconstruction.rows() != target.rows() || reconstruction.cols() != target.cols())
    throw InvalidArgument("loss operands differ in shape");
  const DenseMatrix diff = reconstruction - target;
  double value = 0.0;
  if (alpha < 1.0) value += (1.0 - alpha) * diff.norm();
  if (alpha > 0.0) value += alpha * diff.cwiseAbs().sum();
  return value;
}

namespace detail {

// Buffers reused across epochs, so an epoch allocates no n x n temporaries.
struct Workspace {
  DenseMatrix z, m, s, dz;
};

struct LossGrad {
  double loss;
  DenseMatrix grad;
};

inline LossGrad loss_and_gradient(const GaeModel& model, const DenseMatrix& target, double alpha, Workspace& ws) {
  const auto n = target.rows();
  ws.z.noalias() = model.propagation * model.weights;
  ws.m.resize(n, n);
  ws.m.noalias() = ws.z * ws.z.transpose();
  ws.m.array() = ws.m.array().logistic();
  ws.s.array() = ws.m.array() * (1.0 - ws.m.array());
  ws.m -= target;
  const double norm = ws.m.norm();
  LossGrad out{0.0, {}};
  if (alpha < 1.0) out.loss += (1.0 - alpha) * norm;
  if (alpha > 0.0) out.loss += alpha * ws.m.cwiseAbs().sum();
  // dL/dR through the sigmoid. Frobenius part diff/||diff||, L1 part
  // sign(diff) with sign(0) = 0.
  const double cf = alpha < 1.0 && norm > 0.0 ? (1.0 - alpha) / norm : 0.0;
  if (alpha > 0.0)
    ws.s.array() *= cf * ws.m.array() + alpha * ws.m.array().sign();
  else
    ws.s.array() *= cf * ws.m.array();
  // M = Z Z^T gives dL/dZ = (H + H^T) Z.
  ws.dz.noalias() = ws.s * ws.z;
  ws.dz.noalias() += ws.s.transpose() * ws.z;
  out.grad.noalias() = model.propagation.transpose() * ws.dz;
  return out;
}

}  // namespace detail

/// Analytic gradient of the loss with respect to the weights.
inline DenseMatrix gradient(const GaeModel& model, const DenseMatrix& target, double alpha) {
  detail::Workspace ws;
  return detail::loss_and_gradient(model, target, alpha, ws).grad;
}

inline DenseMatrix clip_gradient(DenseMatrix grad, double max_norm) {
  if (!(max_norm > 0.0)) throw InvalidArgument("max gradient norm must be positive");
  const double norm = grad.norm();
  if (norm > max_norm) grad *= max_norm / norm;
  return grad;
}

enum class StopReason { converged, max_epochs };

inline const char* to_string(StopReason r) noexcept {
  return r == StopReason::converged ? "converged" : "max_epochs";
}

struct WindowCheck {
  std::size_t epoch;
  double loss;
  double relative_improvement;
};

/// Losses are those of the model after `epoch` updates.
struct TrainTrace {
  std::vector<std::pair<std::size_t, double>> losses;
  std::vector<WindowCheck> windows;
  std::size_t final_epoch = 0;
  double final_loss = 0.0;
  StopReason reason = StopReason::max_epochs;

  /// "epoch<TAB>loss" per logged epoch.
  void write(std::ostream& out) const {
    for (const auto& [e, l] : losses) out << e << '\t' << format_real(l) << '\n';
  }
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::size_t epoch, TrainTrace trace)
      : Error("loss became non-finite at epoch " + std::to_string(epoch)), epoch_(epoch), trace_(std::move(trace)) {}
  std::size_t epoch() const noexcept { return epoch_; }
  const TrainTrace& trace() const noexcept { return trace_; }

 private:
  std::size_t epoch_;
  TrainTrace trace_;
};

struct TrainResult {
  GaeModel model;
  TrainTrace trace;
};

/// Full-batch training. Every `check_window` epochs the relative
/// improvement (L_prev - L_now) / L_prev against the previous window
/// boundary is checked; training stops once it falls below
/// `rel_improvement_stop`, or at `max_epochs`.
inline TrainResult train(const DenseMatrix& target, DenseMatrix propagation, const TrainConfig& config,
                         std::optional<DenseMatrix> initial_weights = std::nullopt) {
  config.validate();
  if (target.rows() != target.cols()) throw InvalidArgument("target matrix must be square");
  if (propagation.rows() != target.rows() || propagation.cols() != target.cols())
    throw InvalidArgument("propagation and target differ in shape");

  TrainResult res{init_model(std::move(propagation), config.dim, config.seed), {}};
  auto& model = res.model;
  auto& trace = res.trace;
  if (initial_weights) {
    if (initial_weights->rows() != model.weights.rows() || initial_weights->cols() != model.weights.cols())
      throw InvalidArgument("initial weights have the wrong shape");
    model.weights = std::move(*initial_weights);
  }

  DenseMatrix m1, m2;
  if (config.optimizer == Optimizer::adam) {
    m1 = DenseMatrix::Zero(model.weights.rows(), model.weights.cols());
    m2 = m1;
  }
  double b1_pow = 1.0, b2_pow = 1.0;
  double window_ref = 0.0;

  detail::Workspace ws;
  for (std::size_t epoch = 0;; ++epoch) {
    auto [l, grad] = detail::loss_and_gradient(model, target, config.alpha, ws);
    const bool boundary = epoch > 0 && epoch % config.check_window == 0;
    if (epoch % config.log_every == 0 || boundary) trace.losses.emplace_back(epoch, l);
    if (!std::isfinite(l)) throw NonFiniteLoss(epoch, trace);
    trace.final_epoch = epoch;
    trace.final_loss = l;

    if (epoch == 0) {
      window_ref = l;
    } else if (boundary) {
      const double rel = window_ref > 0.0 ? (window_ref - l) / window_ref : 0.0;
      trace.windows.push_back({epoch, l, rel});
      if (rel < config.rel_improvement_stop) {
        trace.reason = StopReason::converged;
        break;
      }
      window_ref = l;
    }
    if (epoch >= config.max_epochs) {
      trace.reason = StopReason::max_epochs;
      break;
    }

    if (std::isfinite(config.max_grad_norm)) grad = clip_gradient(std::move(grad), config.max_grad_norm);
    if (config.optimizer == Optimizer::adam) {
      b1_pow *= config.adam_beta1;
      b2_pow *= config.adam_beta2;
      m1 = config.adam_beta1 * m1 + (1.0 - config.adam_beta1) * grad;
      m2 = config.adam_beta2 * m2 + (1.0 - config.adam_beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - b1_pow, c2 = 1.0 - b2_pow;
      model.weights.array() -= config.learning_rate * (m1.array() / c1) /
                               ((m2.array() / c2).sqrt() + config.adam_epsilon);
    } else {
      model.weights -= config.learning_rate * grad;
    }
  }
  if (trace.losses.empty() || trace.losses.back().first != trace.final_epoch)
    trace.losses.emplace_back(trace.final_epoch, trace.final_loss);
  return res;
}

}  // namespace tabemb
