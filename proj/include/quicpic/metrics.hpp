#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "quicpic/types.hpp"

namespace quicpic {

/// Hyperparameters of the composite ordinal loss. `class_weights` empty means
/// uniform weights; otherwise it must hold one positive weight per class.
struct LossConfig {
  double alpha = 0.5;  // balance between the focal term and the ordinal pair
  double beta = 0.5;   // balance between ordinal-threshold and distance terms
  double gamma = 2.0;  // focusing exponent
  Eigen::VectorXd class_weights;

  double weight(Index y) const {
    return class_weights.size() > 0 ? class_weights(y) : 1.0;
  }
};

/// Log arguments are clamped here so losses stay finite at degenerate
/// probabilities.
inline constexpr double kProbFloor = 1e-12;

/// Fraction of predictions within +/-k classes of the truth.
inline double cap_accuracy(std::span<const int> y_true,
                           std::span<const int> y_pred, int tolerance) {
  if (y_true.empty())
    throw Error(ErrorCode::EmptyInput, "CAP needs at least one sample");
  if (y_true.size() != y_pred.size())
    throw Error(ErrorCode::LengthMismatch,
                "label and prediction vectors differ in length");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i)
    if (std::abs(y_true[i] - y_pred[i]) <= tolerance) ++hits;
  return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

template <typename Derived>
Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Eigen::Vector<Scalar, Eigen::Dynamic> p =
      (logits.array() - logits.maxCoeff()).exp();
  p /= p.sum();
  return p;
}

inline double stable_sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double softplus(double t) {
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

/// Per-sample focal term: w(y) * (1 - p_y)^gamma * (-log p_y).
template <typename Derived>
double focused_loss(const Eigen::MatrixBase<Derived>& probs, Index y,
                    const LossConfig& cfg) {
  const double p = std::max(static_cast<double>(probs(y)), kProbFloor);
  return cfg.weight(y) * std::pow(1.0 - p, cfg.gamma) * -std::log(p);
}

/// Expected absolute class distance: sum_i p_i * |i - y|.
template <typename Derived>
double distance_loss(const Eigen::MatrixBase<Derived>& probs, Index y) {
  double loss = 0.0;
  for (Index i = 0; i < probs.size(); ++i)
    loss += static_cast<double>(probs(i)) * std::abs(static_cast<double>(i - y));
  return loss;
}

/// Cumulative 0/1 encoding of an ordinal class: targets_k = 1 iff y >= k+1.
inline Eigen::VectorXi cumulative_targets(Index y, Index num_classes) {
  Eigen::VectorXi targets(num_classes - 1);
  for (Index k = 0; k + 1 < num_classes; ++k) targets(k) = y >= k + 1 ? 1 : 0;
  return targets;
}

/// Sum of binary cross-entropies over the K-1 threshold logits, in the
/// log-sum-exp form that stays finite for |t| up to 1e4 and beyond.
template <typename Derived>
double ordinal_loss(const Eigen::MatrixBase<Derived>& thresholds,
                    const Eigen::VectorXi& targets) {
  if (thresholds.size() != targets.size())
    throw Error(ErrorCode::LengthMismatch,
                "threshold and target vectors differ in length");
  double loss = 0.0;
  for (Index k = 0; k < thresholds.size(); ++k) {
    const double t = static_cast<double>(thresholds(k));
    loss += targets(k) ? softplus(-t) : softplus(t);
  }
  return loss;
}

/// L = alpha * FL + (1 - alpha) * (beta * ORL + (1 - beta) * DBL).
inline double composite_loss(double fl, double dbl, double orl,
                             const LossConfig& cfg) {
  return cfg.alpha * fl +
         (1.0 - cfg.alpha) * (cfg.beta * orl + (1.0 - cfg.beta) * dbl);
}

/// Gradient of the focal term with respect to pre-softmax logits, composed
/// through the softmax Jacobian. `probs` must already be a softmax output.
template <typename Derived>
Eigen::VectorXd focused_loss_grad(const Eigen::MatrixBase<Derived>& probs,
                                  Index y, const LossConfig& cfg) {
  const double p = std::max(static_cast<double>(probs(y)), kProbFloor);
  // gamma == 0 reduces to cross-entropy; the focusing term's derivative
  // would otherwise evaluate pow(0, -1) at p == 1.
  const double dloss_dp =
      cfg.gamma == 0.0
          ? -cfg.weight(y) / p
          : cfg.weight(y) * (cfg.gamma * std::pow(1.0 - p, cfg.gamma - 1.0) *
                                 std::log(p) -
                             std::pow(1.0 - p, cfg.gamma) / p);
  Eigen::VectorXd grad(probs.size());
  for (Index j = 0; j < probs.size(); ++j) {
    const double indicator = j == y ? 1.0 : 0.0;
    grad(j) = dloss_dp * p * (indicator - static_cast<double>(probs(j)));
  }
  return grad;
}

/// Gradient of the distance term with respect to pre-softmax logits:
/// p_j * (|j - y| - DBL).
template <typename Derived>
Eigen::VectorXd distance_loss_grad(const Eigen::MatrixBase<Derived>& probs,
                                   Index y) {
  const double expected = distance_loss(probs, y);
  Eigen::VectorXd grad(probs.size());
  for (Index j = 0; j < probs.size(); ++j)
    grad(j) = static_cast<double>(probs(j)) *
              (std::abs(static_cast<double>(j - y)) - expected);
  return grad;
}

/// Gradient of the ordinal term with respect to the threshold logits:
/// sigmoid(t_k) - targets_k.
template <typename Derived>
Eigen::VectorXd ordinal_loss_grad(const Eigen::MatrixBase<Derived>& thresholds,
                                  const Eigen::VectorXi& targets) {
  if (thresholds.size() != targets.size())
    throw Error(ErrorCode::LengthMismatch,
                "threshold and target vectors differ in length");
  Eigen::VectorXd grad(thresholds.size());
  for (Index k = 0; k < thresholds.size(); ++k)
    grad(k) = stable_sigmoid(static_cast<double>(thresholds(k))) -
              static_cast<double>(targets(k));
  return grad;
}

/// Inverse-frequency class weights: n_total / (K_present * count) for present
/// classes, rescaled to mean 1 over them; absent classes take the largest
/// present weight.
inline Eigen::VectorXd inverse_frequency_weights(
    std::span<const std::uint64_t> class_counts) {
  std::uint64_t total = 0;
  Index present = 0;
  for (auto c : class_counts) {
    total += c;
    if (c > 0) ++present;
  }
  if (total == 0)
    throw Error(ErrorCode::AllZeroCounts, "every class count is zero");

  Eigen::VectorXd weights(static_cast<Index>(class_counts.size()));
  double sum_present = 0.0;
  for (Index c = 0; c < weights.size(); ++c) {
    if (class_counts[static_cast<std::size_t>(c)] > 0) {
      weights(c) = static_cast<double>(total) /
                   (static_cast<double>(present) *
                    static_cast<double>(class_counts[static_cast<std::size_t>(c)]));
      sum_present += weights(c);
    } else {
      weights(c) = 0.0;  // filled with the max present weight below
    }
  }
  const double mean_present = sum_present / static_cast<double>(present);
  double max_weight = 0.0;
  for (Index c = 0; c < weights.size(); ++c) {
    if (class_counts[static_cast<std::size_t>(c)] > 0) {
      weights(c) /= mean_present;
      max_weight = std::max(max_weight, weights(c));
    }
  }
  for (Index c = 0; c < weights.size(); ++c)
    if (class_counts[static_cast<std::size_t>(c)] == 0) weights(c) = max_weight;
  return weights;
}

/// Batch reductions are plain means of the per-sample values.
template <typename LossFn>
double batch_mean(std::span<const Eigen::VectorXd> inputs,
                  std::span<const int> labels, LossFn&& per_sample) {
  if (inputs.empty())
    throw Error(ErrorCode::EmptyInput, "batch mean needs at least one sample");
  if (inputs.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch, "inputs and labels differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    sum += per_sample(inputs[i], static_cast<Index>(labels[i]));
  return sum / static_cast<double>(inputs.size());
}

/// Per-trace aggregation: one (true sum, predicted sum) point per trace,
/// accuracy = share of traces whose sums differ by at most `tolerance`.
struct TraceWindows {
  std::vector<int> labels;
  std::vector<int> predictions;
};

struct PerTraceEval {
  int tolerance = 3;
  double accuracy = 0.0;
  std::vector<std::pair<long long, long long>> points;  // (true, predicted)
};

inline PerTraceEval per_trace_eval(std::span<const TraceWindows> traces,
                                   int tolerance) {
  PerTraceEval eval;
  eval.tolerance = tolerance;
  if (traces.empty())
    throw Error(ErrorCode::EmptyInput, "per-trace evaluation needs traces");
  std::size_t hits = 0;
  for (const auto& trace : traces) {
    if (trace.labels.size() != trace.predictions.size())
      throw Error(ErrorCode::LengthMismatch,
                  "trace label and prediction lists differ in length");
    long long true_sum = 0;
    long long pred_sum = 0;
    for (int v : trace.labels) true_sum += v;
    for (int v : trace.predictions) pred_sum += v;
    eval.points.emplace_back(true_sum, pred_sum);
    if (std::llabs(true_sum - pred_sum) <= tolerance) ++hits;
  }
  eval.accuracy = static_cast<double>(hits) / static_cast<double>(traces.size());
  return eval;
}

}  // namespace quicpic
