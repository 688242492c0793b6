#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "stableseq/error.hpp"
#include "stableseq/matching.hpp"
#include "stableseq/model.hpp"

namespace stableseq {

enum class MetricKind { linear_l2, tree_path_matching, importance_l2 };

inline const char* to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::linear_l2: return "linear";
    case MetricKind::tree_path_matching: return "tree";
    case MetricKind::importance_l2: return "importance";
  }
  return "?";
}

/// Which model distance to use and how.
///
/// `squared` applies to the two vector metrics; squared L2 is the default but
/// is not a metric (no triangle inequality). `label_weight` scales the class
/// mismatch term of the path distance.
struct DistanceSpec {
  MetricKind kind = MetricKind::linear_l2;
  bool squared = true;
  bool include_intercept = false;
  double label_weight = 1.0;

  void validate() const {
    if (!std::isfinite(label_weight) || label_weight < 0.0)
      throw ValidationError("label mismatch weight must be finite and non-negative");
  }
};

namespace detail {

inline double l2(const std::vector<double>& a, const std::vector<double>& b, bool squared) {
  if (a.size() != b.size())
    throw ValidationError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return squared ? sum : std::sqrt(sum);
}

}  // namespace detail

inline double linear_distance(const LinearModel& a, const LinearModel& b, const DistanceSpec& spec) {
  if (a.task != b.task) throw ValidationError("linear models have different tasks");
  if (a.coefficients.size() != b.coefficients.size())
    throw ValidationError("dimension mismatch between linear models");
  if (!spec.include_intercept) return detail::l2(a.coefficients, b.coefficients, spec.squared);
  std::vector<double> ax = a.coefficients;
  std::vector<double> bx = b.coefficients;
  ax.push_back(a.intercept);
  bx.push_back(b.intercept);
  return detail::l2(ax, bx, spec.squared);
}

inline double importance_distance(const ImportanceModel& a, const ImportanceModel& b,
                                  const DistanceSpec& spec) {
  return detail::l2(a.importances, b.importances, spec.squared);
}

/// Mean per-feature interval dissimilarity plus a weighted label mismatch.
///
/// For each feature, 1 - |I ∩ J| / |hull(I, J)|. A zero-length hull only
/// occurs with degenerate bounds (min == max); such a feature contributes 0.
inline double path_distance(const TreePath& a, const TreePath& b, const DistanceSpec& spec) {
  if (a.intervals.size() != b.intervals.size())
    throw ValidationError("paths live in different feature spaces");
  const std::size_t p = a.intervals.size();
  double dissimilarity = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    const Interval& x = a.intervals[j];
    const Interval& y = b.intervals[j];
    const double hull = std::max(x.hi, y.hi) - std::min(x.lo, y.lo);
    if (hull <= 0.0) {
      warn("zero-length interval union for feature " + std::to_string(j) +
           "; treating it as identical");
      continue;
    }
    const double overlap = std::max(0.0, std::min(x.hi, y.hi) - std::max(x.lo, y.lo));
    dissimilarity += 1.0 - overlap / hull;
  }
  double d = p == 0 ? 0.0 : dissimilarity / static_cast<double>(p);
  if (a.label != b.label) d += spec.label_weight;
  return d;
}

inline std::vector<std::vector<double>> path_cost_matrix(const std::vector<TreePath>& rows,
                                                         const std::vector<TreePath>& cols,
                                                         const DistanceSpec& spec) {
  std::vector<std::vector<double>> cost(rows.size(), std::vector<double>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < cols.size(); ++k) cost[i][k] = path_distance(rows[i], cols[k], spec);
  return cost;
}

/// Optimal path matching between two path sets; the larger set covers the smaller.
inline PathMatching match_paths(const std::vector<TreePath>& a, const std::vector<TreePath>& b,
                                const DistanceSpec& spec) {
  return a.size() >= b.size() ? solve_path_matching(path_cost_matrix(a, b, spec))
                              : solve_path_matching(path_cost_matrix(b, a, spec));
}

inline double tree_distance(const TreeModel& a, const TreeModel& b, const DistanceSpec& spec,
                            const FeatureBounds& bounds) {
  spec.validate();
  return match_paths(extract_paths(a, bounds), extract_paths(b, bounds), spec).cost;
}

/// Distance between two candidates under `spec`. Trees may also be compared by
/// their Gini importances (importance_l2).
inline double model_distance(const Model& a, const Model& b, const DistanceSpec& spec,
                             const FeatureBounds& bounds) {
  auto mismatch = [&] {
    return ValidationError("metric '" + std::string(to_string(spec.kind)) +
                           "' cannot compare model '" + a.id + "' (" + to_string(a.kind()) +
                           ") with model '" + b.id + "' (" + to_string(b.kind()) + ")");
  };
  switch (spec.kind) {
    case MetricKind::linear_l2: {
      const auto* x = std::get_if<LinearModel>(&a.representation);
      const auto* y = std::get_if<LinearModel>(&b.representation);
      if (!x || !y) throw mismatch();
      return linear_distance(*x, *y, spec);
    }
    case MetricKind::tree_path_matching: {
      const auto* x = std::get_if<TreeModel>(&a.representation);
      const auto* y = std::get_if<TreeModel>(&b.representation);
      if (!x || !y) throw mismatch();
      return tree_distance(*x, *y, spec, bounds);
    }
    case MetricKind::importance_l2: {
      auto importance = [&](const Model& m) -> ImportanceModel {
        if (const auto* imp = std::get_if<ImportanceModel>(&m.representation)) return *imp;
        if (const auto* tree = std::get_if<TreeModel>(&m.representation))
          return gini_importance(*tree, bounds.size());
        throw mismatch();
      };
      return importance_distance(importance(a), importance(b), spec);
    }
  }
  throw mismatch();
}

/// Pairwise distances between the candidates of two consecutive batches.
struct DistanceMatrix {
  int from_batch = 0;
  int to_batch = 0;
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  Eigen::MatrixXd values;

  double operator()(std::size_t j, std::size_t k) const {
    return values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
  }
};

/// Entry (j, k) = d(a.models[j], b.models[k]).
///
/// Entries are computed independently by up to `threads` workers, so the
/// result does not depend on the worker count. Path sets / importances are
/// extracted once per model.
inline DistanceMatrix distance_matrix(const CandidatePool& a, const CandidatePool& b,
                                      const DistanceSpec& spec, unsigned threads = 1) {
  spec.validate();
  if (a.feature_count != b.feature_count)
    throw ValidationError("pools for batches " + std::to_string(a.batch) + " and " +
                          std::to_string(b.batch) + " have different feature counts");
  const FeatureBounds& bounds = b.feature_bounds;

  DistanceMatrix out;
  out.from_batch = a.batch;
  out.to_batch = b.batch;
  for (const Model& m : a.models) out.row_ids.push_back(m.id);
  for (const Model& m : b.models) out.col_ids.push_back(m.id);
  const std::size_t rows = a.size();
  const std::size_t cols = b.size();
  out.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));

  std::vector<std::vector<TreePath>> paths_a, paths_b;
  if (spec.kind == MetricKind::tree_path_matching) {
    auto extract = [&](const CandidatePool& pool, std::vector<std::vector<TreePath>>& out_paths) {
      for (const Model& m : pool.models) {
        const auto* tree = std::get_if<TreeModel>(&m.representation);
        if (!tree)
          throw ValidationError("metric 'tree' cannot compare model '" + m.id + "' (" +
                                to_string(m.kind()) + ")");
        out_paths.push_back(extract_paths(*tree, bounds));
      }
    };
    extract(a, paths_a);
    extract(b, paths_b);
  }

  auto entry = [&](std::size_t j, std::size_t k) {
    if (spec.kind == MetricKind::tree_path_matching)
      return match_paths(paths_a[j], paths_b[k], spec).cost;
    return model_distance(a.models[j], b.models[k], spec, bounds);
  };

  const std::size_t total = rows * cols;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(total)));
  if (threads == 1) {
    for (std::size_t i = 0; i < total; ++i)
      out.values(static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols)) =
          entry(i / cols, i % cols);
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < total; i = next++)
          out.values(static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols)) =
              entry(i / cols, i % cols);
      } catch (...) {
        errors[w] = std::current_exception();
        next = total;
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Header row of target ids, first column of source ids, 17 significant digits.
inline std::string distance_matrix_csv(const DistanceMatrix& m) {
  std::ostringstream out;
  out.precision(17);
  out << "id";
  for (const auto& id : m.col_ids) out << ',' << id;
  out << '\n';
  for (std::size_t j = 0; j < m.row_ids.size(); ++j) {
    out << m.row_ids[j];
    for (std::size_t k = 0; k < m.col_ids.size(); ++k) out << ',' << m(j, k);
    out << '\n';
  }
  return out.str();
}

}  // namespace stableseq
