#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "stableseq/error.hpp"

namespace stableseq {

enum class Task { regression, classification };

inline const char* to_string(Task task) {
  return task == Task::regression ? "regression" : "classification";
}

/// Closed per-feature range observed in the data, used to clip tree paths.
struct FeatureBound {
  double min = 0.0;
  double max = 0.0;
  bool operator==(const FeatureBound&) const = default;
};

using FeatureBounds = std::vector<FeatureBound>;

struct LinearModel {
  std::vector<double> coefficients;
  double intercept = 0.0;
  Task task = Task::regression;
  bool operator==(const LinearModel&) const = default;
};

/// One node of a binary axis-aligned tree. `feature < 0` marks a leaf.
///
/// Internal nodes send x to `left` iff x[feature] <= threshold and carry the
/// impurity reduction (`gain`) recorded when the split was chosen. Leaves carry
/// the predicted class, the training sample count and the positive-class
/// fraction used for probabilistic predictions.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double gain = 0.0;
  int label = 0;
  std::int64_t count = 0;
  double positive_fraction = 0.0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct TreeModel {
  std::vector<TreeNode> nodes;
  int root = 0;
  Task task = Task::classification;

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }

  /// Edges on the longest root-to-leaf route; a single leaf has depth 0.
  int depth() const {
    int deepest = 0;
    std::vector<std::pair<int, int>> stack{{root, 0}};
    while (!stack.empty()) {
      auto [index, d] = stack.back();
      stack.pop_back();
      const TreeNode& node = nodes.at(static_cast<std::size_t>(index));
      deepest = std::max(deepest, d);
      if (!node.is_leaf()) {
        stack.emplace_back(node.left, d + 1);
        stack.emplace_back(node.right, d + 1);
      }
    }
    return deepest;
  }

  bool operator==(const TreeModel&) const = default;
};

struct ImportanceModel {
  std::vector<double> importances;
  bool operator==(const ImportanceModel&) const = default;
};

using Representation = std::variant<LinearModel, TreeModel, ImportanceModel>;

enum class ModelKind { linear, tree, importance };

inline const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::linear: return "linear";
    case ModelKind::tree: return "tree";
    case ModelKind::importance: return "importance";
  }
  return "?";
}

struct Model {
  std::string id;
  Representation representation;
  double train_loss = 0.0;
  double val_loss = 0.0;
  nlohmann::json metadata = nlohmann::json::object();

  ModelKind kind() const { return static_cast<ModelKind>(representation.index()); }
  bool operator==(const Model&) const = default;
};

/// The finite candidate set for one batch.
struct CandidatePool {
  int batch = 1;
  std::size_t feature_count = 0;
  FeatureBounds feature_bounds;
  std::vector<Model> models;

  std::size_t size() const { return models.size(); }

  std::size_t index_of(const std::string& id) const {
    for (std::size_t i = 0; i < models.size(); ++i)
      if (models[i].id == id) return i;
    throw ValidationError("model id '" + id + "' not found in pool for batch " +
                          std::to_string(batch));
  }

  bool operator==(const CandidatePool&) const = default;
};

/// Half-open interval (lo, hi] of one feature along a tree path.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool operator==(const Interval&) const = default;
};

/// Region of feature space reaching one leaf, clipped to the feature bounds.
struct TreePath {
  std::vector<Interval> intervals;  // one per feature
  int label = 0;
  int leaf = -1;

  /// Membership with the lower bound of the box treated as closed.
  bool contains(const std::vector<double>& x, const FeatureBounds& bounds) const {
    for (std::size_t j = 0; j < intervals.size(); ++j) {
      const Interval& iv = intervals[j];
      const bool at_floor = iv.lo == bounds[j].min && x[j] == iv.lo;
      if (!(x[j] > iv.lo || at_floor) || x[j] > iv.hi) return false;
    }
    return true;
  }
};

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace detail

inline void validate_bounds(const FeatureBounds& bounds) {
  for (std::size_t j = 0; j < bounds.size(); ++j) {
    const auto& b = bounds[j];
    if (!std::isfinite(b.min) || !std::isfinite(b.max))
      throw ValidationError("feature_bounds[" + std::to_string(j) + "] is not finite");
    if (b.min > b.max)
      throw ValidationError("feature_bounds[" + std::to_string(j) + "] has min > max");
  }
}

inline void validate_tree(const TreeModel& tree, std::size_t feature_count) {
  const std::size_t n = tree.nodes.size();
  if (n == 0) throw ValidationError("tree has no nodes");
  if (tree.root < 0 || static_cast<std::size_t>(tree.root) >= n)
    throw ValidationError("tree root index out of range");

  std::vector<int> parents(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const TreeNode& node = tree.nodes[i];
    if (node.is_leaf()) {
      if (node.count < 0) throw ValidationError("leaf " + std::to_string(i) + " has negative count");
      if (!(node.positive_fraction >= 0.0 && node.positive_fraction <= 1.0))
        throw ValidationError("leaf " + std::to_string(i) + " has positive fraction outside [0,1]");
      continue;
    }
    if (static_cast<std::size_t>(node.feature) >= feature_count)
      throw ValidationError("node " + std::to_string(i) + " splits on feature " +
                            std::to_string(node.feature) + " >= p");
    if (!std::isfinite(node.threshold))
      throw ValidationError("node " + std::to_string(i) + " has non-finite threshold");
    if (!std::isfinite(node.gain) || node.gain < 0.0)
      throw ValidationError("node " + std::to_string(i) + " has negative impurity reduction");
    for (int child : {node.left, node.right}) {
      if (child < 0 || static_cast<std::size_t>(child) >= n)
        throw ValidationError("node " + std::to_string(i) + " references missing child " +
                              std::to_string(child));
      ++parents[static_cast<std::size_t>(child)];
    }
  }
  if (parents[static_cast<std::size_t>(tree.root)] != 0)
    throw ValidationError("tree root has a parent");
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<int>(i) != tree.root && parents[i] != 1)
      throw ValidationError("node " + std::to_string(i) + " has " + std::to_string(parents[i]) +
                            " parents");
  }
  // Exactly one parent per non-root node plus reachability of all nodes rules out cycles.
  std::vector<bool> seen(n, false);
  std::vector<int> stack{tree.root};
  std::size_t visited = 0;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    if (seen[static_cast<std::size_t>(i)]) throw ValidationError("tree contains a cycle");
    seen[static_cast<std::size_t>(i)] = true;
    ++visited;
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(i)];
    if (!node.is_leaf()) {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  if (visited != n) throw ValidationError("tree has nodes unreachable from the root");
}

inline void validate_representation(const Representation& rep, std::size_t p) {
  if (const auto* lin = std::get_if<LinearModel>(&rep)) {
    if (lin->coefficients.size() != p)
      throw ValidationError("linear model has " + std::to_string(lin->coefficients.size()) +
                            " coefficients, pool declares p=" + std::to_string(p));
    if (!detail::all_finite(lin->coefficients) || !std::isfinite(lin->intercept))
      throw ValidationError("linear model has non-finite coefficients");
  } else if (const auto* tree = std::get_if<TreeModel>(&rep)) {
    validate_tree(*tree, p);
  } else {
    const auto& imp = std::get<ImportanceModel>(rep);
    if (imp.importances.size() != p)
      throw ValidationError("importance vector length differs from p");
    for (double v : imp.importances)
      if (!std::isfinite(v) || v < 0.0)
        throw ValidationError("importance entries must be finite and non-negative");
  }
}

inline void validate_pool(const CandidatePool& pool) {
  if (pool.batch < 1) throw ValidationError("pool batch index must be >= 1");
  if (pool.models.empty()) throw ValidationError("pool has no models");
  if (pool.feature_bounds.size() != pool.feature_count)
    throw ValidationError("feature_bounds length differs from p");
  validate_bounds(pool.feature_bounds);
  std::set<std::string> ids;
  for (const Model& m : pool.models) {
    if (m.id.empty()) throw ValidationError("model id is empty");
    if (!ids.insert(m.id).second) throw ValidationError("duplicate model id '" + m.id + "'");
    if (!std::isfinite(m.train_loss) || m.train_loss < 0.0)
      throw ValidationError("model '" + m.id + "' has invalid train_loss");
    if (!std::isfinite(m.val_loss) || m.val_loss < 0.0)
      throw ValidationError("model '" + m.id + "' has invalid val_loss");
    try {
      validate_representation(m.representation, pool.feature_count);
    } catch (const ValidationError& e) {
      throw ValidationError("model '" + m.id + "': " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// Tree structure queries

/// One path per leaf, in depth-first order (left subtree first).
///
/// Each interval is the intersection of the split half-spaces along the route,
/// clipped to `bounds`; features never split on keep the full bound interval.
/// A split threshold outside the bounds can leave an empty interval (lo == hi).
inline std::vector<TreePath> extract_paths(const TreeModel& tree, const FeatureBounds& bounds) {
  validate_bounds(bounds);
  std::vector<Interval> box(bounds.size());
  for (std::size_t j = 0; j < bounds.size(); ++j) box[j] = {bounds[j].min, bounds[j].max};

  std::vector<TreePath> paths;
  struct Frame {
    int node;
    std::vector<Interval> box;
  };
  std::vector<Frame> stack{{tree.root, box}};
  while (!stack.empty()) {
    Frame frame = std::move(stack.back());
    stack.pop_back();
    const TreeNode& node = tree.nodes.at(static_cast<std::size_t>(frame.node));
    if (node.is_leaf()) {
      paths.push_back({std::move(frame.box), node.label, frame.node});
      continue;
    }
    const auto f = static_cast<std::size_t>(node.feature);
    if (f >= bounds.size()) throw ValidationError("tree splits on a feature without bounds");
    std::vector<Interval> right = frame.box;
    std::vector<Interval> left = std::move(frame.box);
    left[f].hi = std::clamp(std::min(left[f].hi, node.threshold), left[f].lo, left[f].hi);
    right[f].lo = std::clamp(std::max(right[f].lo, node.threshold), right[f].lo, right[f].hi);
    stack.push_back({node.right, std::move(right)});
    stack.push_back({node.left, std::move(left)});
  }
  return paths;
}

/// Share of the total recorded impurity reduction attributable to each feature.
/// A tree without splits (or with zero total reduction) maps to the zero vector.
inline ImportanceModel gini_importance(const TreeModel& tree, std::size_t feature_count) {
  std::vector<double> per_feature(feature_count, 0.0);
  double total = 0.0;
  for (const TreeNode& node : tree.nodes) {
    if (node.is_leaf()) continue;
    per_feature.at(static_cast<std::size_t>(node.feature)) += node.gain;
    total += node.gain;
  }
  if (total > 0.0)
    for (double& v : per_feature) v /= total;
  return {std::move(per_feature)};
}

}  // namespace stableseq
