#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stableseq/dataset.hpp"
#include "stableseq/error.hpp"
#include "stableseq/model.hpp"

namespace stableseq {

enum class LossKind { mse, log_loss, misclassification };

inline const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::mse: return "mse";
    case LossKind::log_loss: return "log_loss";
    case LossKind::misclassification: return "misclassification";
  }
  return "?";
}

/// Probabilities are clipped to [kProbClip, 1 - kProbClip] before taking logs.
inline constexpr double kProbClip = 1e-15;

inline bool is_predictive(const Model& m) { return m.kind() != ModelKind::importance; }

/// Regression output, or P(y = 1 | x) for classifiers.
inline double predict(const Representation& rep, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  if (const auto* lin = std::get_if<LinearModel>(&rep)) {
    double z = lin->intercept;
    for (std::size_t j = 0; j < lin->coefficients.size(); ++j)
      z += lin->coefficients[j] * x(static_cast<Eigen::Index>(j));
    return lin->task == Task::regression ? z : detail::sigmoid(z);
  }
  if (const auto* tree = std::get_if<TreeModel>(&rep)) {
    const TreeNode* node = &tree->nodes[static_cast<std::size_t>(tree->root)];
    while (!node->is_leaf())
      node = &tree->nodes[static_cast<std::size_t>(
          x(node->feature) <= node->threshold ? node->left : node->right)];
    return tree->task == Task::classification ? node->positive_fraction
                                              : static_cast<double>(node->label);
  }
  throw ValidationError("importance-only model is not predictive");
}

inline Eigen::VectorXd predict(const Model& m, const Dataset& data) {
  if (!is_predictive(m)) throw ValidationError("model '" + m.id + "' is not predictive");
  Eigen::VectorXd out(data.rows());
  for (Eigen::Index i = 0; i < data.rows(); ++i) out(i) = predict(m.representation, data.x.row(i));
  return out;
}

inline double pointwise_loss(LossKind kind, double y, double prediction) {
  switch (kind) {
    case LossKind::mse: return (y - prediction) * (y - prediction);
    case LossKind::log_loss: {
      const double q = std::clamp(prediction, kProbClip, 1.0 - kProbClip);
      return y > 0.5 ? -std::log(q) : -std::log(1.0 - q);
    }
    case LossKind::misclassification: return (prediction >= 0.5) == (y > 0.5) ? 0.0 : 1.0;
  }
  return 0.0;
}

/// Mean per-row loss of the model on `data`.
inline double empirical_loss(const Model& model, const Dataset& data, LossKind kind) {
  if (data.rows() == 0) throw ValidationError("empirical loss on empty data");
  if (kind != LossKind::mse) {
    for (Eigen::Index i = 0; i < data.rows(); ++i)
      if (data.y(i) != 0.0 && data.y(i) != 1.0)
        throw ValidationError("classification loss needs 0/1 labels");
  }
  const Eigen::VectorXd pred = predict(model, data);
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) total += pointwise_loss(kind, data.y(i), pred(i));
  return total / static_cast<double>(data.rows());
}

/// Rank-based AUC (Mann-Whitney U) with midranks for ties.
inline double auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  const Eigen::Index n = scores.size();
  if (labels.size() != n) throw ValidationError("scores and labels differ in length");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores(a) < scores(b); });

  double positive_rank_sum = 0.0;
  double positives = 0.0;
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j < n && scores(order[static_cast<std::size_t>(j)]) == scores(order[static_cast<std::size_t>(i)])) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (Eigen::Index k = i; k < j; ++k) {
      const double y = labels(order[static_cast<std::size_t>(k)]);
      if (y != 0.0 && y != 1.0) throw ValidationError("AUC needs 0/1 labels");
      if (y == 1.0) {
        positive_rank_sum += midrank;
        positives += 1.0;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) throw ValidationError("AUC needs both classes present");
  return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

inline double auc(const Model& model, const Dataset& data) { return auc(predict(model, data), data.y); }

}  // namespace stableseq
