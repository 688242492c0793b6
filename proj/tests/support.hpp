#pragma once

#include <string>
#include <vector>

#include "stableseq.hpp"

namespace testing_support {

using namespace stableseq;

inline Model linear_model(const std::string& id, std::vector<double> beta, double val_loss = 1.0,
                          double intercept = 0.0) {
  Model m;
  m.id = id;
  m.representation = LinearModel{std::move(beta), intercept, Task::regression};
  m.train_loss = val_loss;
  m.val_loss = val_loss;
  return m;
}

inline TreeNode leaf(int label, std::int64_t count = 1) {
  TreeNode n;
  n.label = label;
  n.count = count;
  n.positive_fraction = label;
  return n;
}

inline TreeNode split(int feature, double threshold, int left, int right, double gain = 1.0) {
  TreeNode n;
  n.feature = feature;
  n.threshold = threshold;
  n.left = left;
  n.right = right;
  n.gain = gain;
  return n;
}

inline TreeModel stump(int feature, double threshold, int left_label = 0, int right_label = 1) {
  return TreeModel{{split(feature, threshold, 1, 2), leaf(left_label), leaf(right_label)}, 0,
                   Task::classification};
}

inline FeatureBounds unit_bounds(std::size_t p, double hi = 10.0) {
  return FeatureBounds(p, FeatureBound{0.0, hi});
}

/// Random tree with at most `max_leaves` leaves, built by splitting a random leaf.
inline TreeModel random_tree(Rng& rng, std::size_t p, std::size_t max_leaves, double hi = 10.0) {
  TreeModel t;
  t.nodes.push_back(leaf(static_cast<int>(rng.index(2))));
  const std::size_t leaves = 1 + rng.index(max_leaves);
  for (std::size_t l = 1; l < leaves; ++l) {
    std::vector<int> open;
    for (std::size_t i = 0; i < t.nodes.size(); ++i)
      if (t.nodes[i].is_leaf()) open.push_back(static_cast<int>(i));
    const int target = open[rng.index(open.size())];
    const int left = static_cast<int>(t.nodes.size());
    t.nodes.push_back(leaf(static_cast<int>(rng.index(2))));
    t.nodes.push_back(leaf(static_cast<int>(rng.index(2))));
    const double threshold = std::round(rng.uniform(0.5, hi - 0.5) * 4.0) / 4.0;
    t.nodes[static_cast<std::size_t>(target)] =
        split(static_cast<int>(rng.index(p)), threshold, left, left + 1, rng.uniform(0.01, 1.0));
  }
  return t;
}

/// A restricted-selection instance with small integer losses and distances so
/// that ties are common.
struct Instance {
  std::vector<CandidatePool> pools;
  std::vector<DistanceMatrix> matrices;
};

inline Instance random_instance(Rng& rng, std::size_t batches, std::size_t min_size, std::size_t max_size,
                                int max_loss = 4, int max_distance = 3) {
  Instance inst;
  for (std::size_t b = 0; b < batches; ++b) {
    CandidatePool pool;
    pool.batch = static_cast<int>(b + 1);
    pool.feature_count = 1;
    pool.feature_bounds = unit_bounds(1);
    const std::size_t size = min_size + rng.index(max_size - min_size + 1);
    for (std::size_t i = 0; i < size; ++i) {
      const double loss = 1.0 + static_cast<double>(rng.index(static_cast<std::uint64_t>(max_loss)));
      Model m = linear_model(candidate_id(pool.batch, static_cast<int>(i)), {0.0}, loss);
      m.train_loss = 1.0 + static_cast<double>(rng.index(static_cast<std::uint64_t>(max_loss)));
      pool.models.push_back(std::move(m));
    }
    inst.pools.push_back(std::move(pool));
  }
  for (std::size_t b = 0; b + 1 < batches; ++b) {
    DistanceMatrix m;
    m.from_batch = inst.pools[b].batch;
    m.to_batch = inst.pools[b + 1].batch;
    for (const auto& model : inst.pools[b].models) m.row_ids.push_back(model.id);
    for (const auto& model : inst.pools[b + 1].models) m.col_ids.push_back(model.id);
    m.values.resize(static_cast<Eigen::Index>(m.row_ids.size()), static_cast<Eigen::Index>(m.col_ids.size()));
    for (Eigen::Index i = 0; i < m.values.size(); ++i)
      m.values.data()[i] = static_cast<double>(rng.index(static_cast<std::uint64_t>(max_distance + 1)));
    inst.matrices.push_back(std::move(m));
  }
  return inst;
}

/// Linear pools with random coefficient vectors and real distances.
inline Instance random_linear_instance(Rng& rng, std::size_t batches, std::size_t size, std::size_t p,
                                       const DistanceSpec& spec) {
  Instance inst;
  for (std::size_t b = 0; b < batches; ++b) {
    CandidatePool pool;
    pool.batch = static_cast<int>(b + 1);
    pool.feature_count = p;
    pool.feature_bounds = unit_bounds(p);
    for (std::size_t i = 0; i < size; ++i) {
      std::vector<double> beta(p);
      for (double& v : beta) v = rng.normal();
      pool.models.push_back(linear_model(candidate_id(pool.batch, static_cast<int>(i)), beta, rng.uniform(1.0, 2.0)));
    }
    inst.pools.push_back(std::move(pool));
  }
  for (std::size_t b = 0; b + 1 < batches; ++b)
    inst.matrices.push_back(distance_matrix(inst.pools[b], inst.pools[b + 1], spec));
  return inst;
}

/// Silences warnings for the lifetime of the guard and counts them.
class WarningCapture {
 public:
  WarningCapture() : previous_(warning_handler()) {
    set_warning_handler([this](const std::string& msg) { messages.push_back(msg); });
  }
  ~WarningCapture() { set_warning_handler(previous_); }
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  std::vector<std::string> messages;

 private:
  WarningHandler previous_;
};

}  // namespace testing_support
