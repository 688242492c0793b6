#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "stableseq/distance.hpp"
#include "stableseq/error.hpp"
#include "stableseq/model.hpp"

namespace stableseq {

enum class LossSource { validation, train };

inline const char* to_string(LossSource s) { return s == LossSource::validation ? "val" : "train"; }

inline double selection_loss(const Model& m, LossSource source) {
  return source == LossSource::validation ? m.val_loss : m.train_loss;
}

/// Indices whose loss is within a factor (1 + alpha) of the smallest loss.
/// The argmin always survives; alpha = +inf keeps everything.
inline std::vector<std::size_t> filter_losses(std::span<const double> losses, double alpha) {
  if (!(alpha >= 0.0)) throw ValidationError("tolerance alpha must be >= 0");
  std::vector<std::size_t> keep;
  if (losses.empty()) return keep;
  const double best = *std::min_element(losses.begin(), losses.end());
  const double threshold = std::isinf(alpha) ? std::numeric_limits<double>::infinity()
                                             : (1.0 + alpha) * best;
  for (std::size_t i = 0; i < losses.size(); ++i)
    if (losses[i] <= threshold || losses[i] == best) keep.push_back(i);
  return keep;
}

/// Indices whose score is at least (1 - alpha) times the best score (for
/// metrics such as AUC where larger is better).
inline std::vector<std::size_t> filter_scores(std::span<const double> scores, double alpha) {
  if (!(alpha >= 0.0)) throw ValidationError("tolerance alpha must be >= 0");
  std::vector<std::size_t> keep;
  if (scores.empty()) return keep;
  const double best = *std::max_element(scores.begin(), scores.end());
  const double threshold = std::isinf(alpha) ? -std::numeric_limits<double>::infinity()
                                             : (1.0 - alpha) * best;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] >= threshold || scores[i] == best) keep.push_back(i);
  return keep;
}

inline std::vector<double> pool_losses(const CandidatePool& pool, LossSource source) {
  std::vector<double> out;
  out.reserve(pool.size());
  for (const Model& m : pool.models) out.push_back(selection_loss(m, source));
  return out;
}

inline std::vector<std::size_t> filter_pool(const CandidatePool& pool, double alpha,
                                            LossSource source = LossSource::validation) {
  const auto losses = pool_losses(pool, source);
  return filter_losses(losses, alpha);
}

/// Options shared by the exact solver, the brute-force oracle and the sweep.
struct SelectOptions {
  double alpha = 0.0;
  LossSource source = LossSource::validation;
  /// Restrict batch 1 to this model.
  std::optional<std::string> anchor;
  /// Keep the anchor even when it fails the batch-1 filter.
  bool force_anchor = false;
  /// Absolute per-batch loss budgets; when non-empty they replace (1+alpha)·min.
  std::vector<double> epsilon;
  /// Filter on a larger-is-better metadata score (e.g. "val_auc") instead of the loss.
  std::optional<std::string> score_key;
};

namespace detail {

inline void check_instance(std::span<const CandidatePool> pools,
                           std::span<const DistanceMatrix> matrices) {
  if (pools.empty()) throw ValidationError("need at least one batch");
  if (matrices.size() + 1 != pools.size())
    throw ValidationError("need exactly one distance matrix per consecutive batch pair");
  for (std::size_t b = 0; b < matrices.size(); ++b) {
    const auto& m = matrices[b];
    if (static_cast<std::size_t>(m.values.rows()) != pools[b].size() ||
        static_cast<std::size_t>(m.values.cols()) != pools[b + 1].size())
      throw ValidationError("distance matrix " + std::to_string(b + 1) + " does not match pool sizes");
    for (std::size_t j = 0; j < pools[b].size(); ++j)
      if (m.row_ids[j] != pools[b].models[j].id)
        throw ValidationError("distance matrix " + std::to_string(b + 1) + " row ids differ from pool");
    for (std::size_t k = 0; k < pools[b + 1].size(); ++k)
      if (m.col_ids[k] != pools[b + 1].models[k].id)
        throw ValidationError("distance matrix " + std::to_string(b + 1) + " column ids differ from pool");
    for (Eigen::Index i = 0; i < m.values.size(); ++i) {
      const double v = m.values.data()[i];
      if (!std::isfinite(v) || v < 0.0)
        throw ValidationError("distance matrix " + std::to_string(b + 1) + " has a negative or non-finite entry");
    }
  }
}

inline std::vector<double> pool_scores(const CandidatePool& pool, const std::string& key) {
  std::vector<double> out;
  for (const Model& m : pool.models) {
    auto it = m.metadata.find(key);
    if (it == m.metadata.end() || !it->is_number())
      throw ValidationError("model '" + m.id + "' has no numeric metadata '" + key + "'");
    out.push_back(it->get<double>());
  }
  return out;
}

}  // namespace detail

/// Survivors of every batch after the accuracy filter and anchoring.
inline std::vector<std::vector<std::size_t>> surviving_nodes(std::span<const CandidatePool> pools,
                                                             const SelectOptions& options) {
  if (!options.epsilon.empty() && options.epsilon.size() != pools.size())
    throw ValidationError("epsilon vector needs one budget per batch");
  std::vector<std::vector<std::size_t>> layers;
  for (std::size_t b = 0; b < pools.size(); ++b) {
    std::vector<std::size_t> keep;
    if (!options.epsilon.empty()) {
      const auto losses = pool_losses(pools[b], options.source);
      for (std::size_t i = 0; i < losses.size(); ++i)
        if (losses[i] <= options.epsilon[b]) keep.push_back(i);
    } else if (options.score_key) {
      keep = filter_scores(detail::pool_scores(pools[b], *options.score_key), options.alpha);
    } else {
      keep = filter_pool(pools[b], options.alpha, options.source);
    }
    if (b == 0 && options.anchor) {
      const std::size_t a = pools[0].index_of(*options.anchor);
      const bool survives = std::find(keep.begin(), keep.end(), a) != keep.end();
      if (!survives && !options.force_anchor)
        throw InfeasibleError("anchor '" + *options.anchor +
                              "' fails the accuracy filter of batch " + std::to_string(pools[0].batch) +
                              " (use force_anchor to keep it)");
      keep = {a};
    }
    if (keep.empty())
      throw InfeasibleError("no candidate of batch " + std::to_string(pools[b].batch) +
                            " satisfies the accuracy budget");
    layers.push_back(std::move(keep));
  }
  return layers;
}

/// Source -> layer 1 -> ... -> layer B -> sink, restricted to surviving models.
/// Source and sink edges have weight zero; edge (j, k) between consecutive
/// layers weighs d(f_{b,j}, f_{b+1,k}).
struct LayeredGraph {
  std::vector<std::vector<std::size_t>> layers;  // pool indices of survivors
  std::vector<std::vector<std::string>> ids;
  std::vector<std::vector<double>> losses;        // selection loss per survivor
  std::vector<Eigen::MatrixXd> weights;           // layer b -> b+1
  std::vector<int> batches;
  double alpha = 0.0;
  LossSource source = LossSource::validation;

  std::size_t source_edges() const { return layers.front().size(); }
  std::size_t sink_edges() const { return layers.back().size(); }
  std::size_t middle_edges() const {
    std::size_t n = 0;
    for (std::size_t b = 0; b + 1 < layers.size(); ++b) n += layers[b].size() * layers[b + 1].size();
    return n;
  }
};

inline LayeredGraph build_graph(std::span<const CandidatePool> pools,
                                std::span<const DistanceMatrix> matrices,
                                const SelectOptions& options) {
  detail::check_instance(pools, matrices);
  LayeredGraph g;
  g.layers = surviving_nodes(pools, options);
  g.alpha = options.alpha;
  g.source = options.source;
  for (std::size_t b = 0; b < pools.size(); ++b) {
    g.batches.push_back(pools[b].batch);
    std::vector<std::string> ids;
    std::vector<double> losses;
    for (std::size_t i : g.layers[b]) {
      ids.push_back(pools[b].models[i].id);
      losses.push_back(selection_loss(pools[b].models[i], options.source));
    }
    g.ids.push_back(std::move(ids));
    g.losses.push_back(std::move(losses));
  }
  for (std::size_t b = 0; b + 1 < pools.size(); ++b) {
    const auto& from = g.layers[b];
    const auto& to = g.layers[b + 1];
    Eigen::MatrixXd w(static_cast<Eigen::Index>(from.size()), static_cast<Eigen::Index>(to.size()));
    for (std::size_t j = 0; j < from.size(); ++j)
      for (std::size_t k = 0; k < to.size(); ++k)
        w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = matrices[b](from[j], to[k]);
    g.weights.push_back(std::move(w));
  }
  return g;
}

/// One chosen model per batch.
struct SequencePlan {
  std::vector<std::string> ids;
  std::vector<std::size_t> indices;  // into each batch's pool
  std::vector<double> transitions;   // d(f_b, f_{b+1})
  double stability_loss = 0.0;
  std::vector<double> batch_losses;  // selection loss of each chosen model
  double alpha = 0.0;
  LossSource source = LossSource::validation;
  std::vector<std::string> tie_breaks;

  std::size_t length() const { return ids.size(); }
};

/// Shortest source-to-sink path by one forward sweep over the layers.
///
/// Among equal-cost paths the lexicographically smallest id sequence wins:
/// each node keeps the smallest optimal prefix reaching it, which is enough
/// because two full paths through the same node share their suffix. Path
/// costs are accumulated left to right from 0, the same order used when a
/// plan's stability loss is recomputed.
inline SequencePlan solve_sequence(const LayeredGraph& g) {
  const std::size_t layers = g.layers.size();
  if (layers == 0) throw ValidationError("empty graph");
  std::vector<double> cost(g.layers[0].size(), 0.0);
  std::vector<std::vector<std::size_t>> prefix(g.layers[0].size());
  std::vector<std::vector<std::string>> prefix_ids(g.layers[0].size());
  for (std::size_t k = 0; k < g.layers[0].size(); ++k) {
    prefix[k] = {k};
    prefix_ids[k] = {g.ids[0][k]};
  }
  SequencePlan plan;
  for (std::size_t b = 0; b + 1 < layers; ++b) {
    const Eigen::MatrixXd& w = g.weights[b];
    const std::size_t next_size = g.layers[b + 1].size();
    std::vector<double> next_cost(next_size);
    std::vector<std::vector<std::size_t>> next_prefix(next_size);
    std::vector<std::vector<std::string>> next_ids(next_size);
    for (std::size_t k = 0; k < next_size; ++k) {
      std::size_t best = 0;
      double best_cost = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < cost.size(); ++j) {
        const double c = cost[j] + w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
        if (c < best_cost) {
          best_cost = c;
          best = j;
        } else if (c == best_cost) {
          const bool smaller = prefix_ids[j] < prefix_ids[best];
          plan.tie_breaks.push_back("batch " + std::to_string(g.batches[b + 1]) + " node " +
                                    g.ids[b + 1][k] + ": equal cost via " +
                                    prefix_ids[best].back() + " and " + prefix_ids[j].back() +
                                    ", kept " + (smaller ? prefix_ids[j] : prefix_ids[best]).back());
          if (smaller) best = j;
        }
      }
      next_cost[k] = best_cost;
      next_prefix[k] = prefix[best];
      next_prefix[k].push_back(k);
      next_ids[k] = prefix_ids[best];
      next_ids[k].push_back(g.ids[b + 1][k]);
    }
    cost = std::move(next_cost);
    prefix = std::move(next_prefix);
    prefix_ids = std::move(next_ids);
  }

  std::size_t best = 0;
  for (std::size_t k = 1; k < cost.size(); ++k) {
    if (cost[k] < cost[best]) {
      best = k;
    } else if (cost[k] == cost[best]) {
      const bool smaller = prefix_ids[k] < prefix_ids[best];
      plan.tie_breaks.push_back("sink: equal cost via " + prefix_ids[best].back() + " and " +
                                prefix_ids[k].back() + ", kept " +
                                (smaller ? prefix_ids[k] : prefix_ids[best]).back());
      if (smaller) best = k;
    }
  }

  plan.alpha = g.alpha;
  plan.source = g.source;
  plan.ids = prefix_ids[best];
  plan.stability_loss = cost[best];
  for (std::size_t b = 0; b < layers; ++b) {
    const std::size_t node = prefix[best][b];
    plan.indices.push_back(g.layers[b][node]);
    plan.batch_losses.push_back(g.losses[b][node]);
    if (b + 1 < layers)
      plan.transitions.push_back(g.weights[b](static_cast<Eigen::Index>(node),
                                              static_cast<Eigen::Index>(prefix[best][b + 1])));
  }
  return plan;
}

/// Fills ids / transitions / losses of a plan given its pool indices.
inline SequencePlan make_plan(std::span<const CandidatePool> pools,
                              std::span<const DistanceMatrix> matrices,
                              std::vector<std::size_t> indices, double alpha, LossSource source) {
  if (indices.size() != pools.size()) throw ValidationError("plan length differs from batch count");
  SequencePlan plan;
  plan.alpha = alpha;
  plan.source = source;
  plan.indices = std::move(indices);
  double total = 0.0;
  for (std::size_t b = 0; b < pools.size(); ++b) {
    const Model& m = pools[b].models.at(plan.indices[b]);
    plan.ids.push_back(m.id);
    plan.batch_losses.push_back(selection_loss(m, source));
    if (b + 1 < pools.size()) {
      const double d = matrices[b](plan.indices[b], plan.indices[b + 1]);
      plan.transitions.push_back(d);
      total += d;
    }
  }
  plan.stability_loss = total;
  return plan;
}

/// Sum of consecutive distances of `plan`, recomputed from the matrices.
inline double recompute_stability(const SequencePlan& plan, std::span<const DistanceMatrix> matrices) {
  double total = 0.0;
  for (std::size_t b = 0; b + 1 < plan.indices.size(); ++b)
    total += matrices[b](plan.indices[b], plan.indices[b + 1]);
  return total;
}

inline constexpr double kEnumerationLimit = 1e7;

/// Visits every index tuple of the given per-batch choice lists in
/// lexicographic order of positions. Throws TooLargeError past `limit` tuples.
template <typename Visit>
void for_each_sequence(const std::vector<std::vector<std::size_t>>& choices, Visit&& visit,
                       double limit = kEnumerationLimit) {
  double count = 1.0;
  for (const auto& c : choices) count *= static_cast<double>(c.size());
  if (count > limit)
    throw TooLargeError("instance has " + std::to_string(count) + " sequences (limit " +
                        std::to_string(limit) + ")");
  if (count == 0.0) return;
  std::vector<std::size_t> pos(choices.size(), 0);
  std::vector<std::size_t> current(choices.size());
  for (;;) {
    for (std::size_t b = 0; b < choices.size(); ++b) current[b] = choices[b][pos[b]];
    visit(static_cast<const std::vector<std::size_t>&>(current));
    std::size_t b = choices.size();
    while (b > 0) {
      --b;
      if (++pos[b] < choices[b].size()) break;
      pos[b] = 0;
      if (b == 0) return;
    }
  }
}

/// Exhaustive enumeration of all surviving sequences; same tie rule as solve_sequence.
inline SequencePlan brute_force_sequence(std::span<const CandidatePool> pools,
                                         std::span<const DistanceMatrix> matrices,
                                         const SelectOptions& options,
                                         double limit = kEnumerationLimit) {
  detail::check_instance(pools, matrices);
  const auto layers = surviving_nodes(pools, options);
  std::vector<std::size_t> best;
  std::vector<std::string> best_ids;
  double best_cost = std::numeric_limits<double>::infinity();
  for_each_sequence(
      layers,
      [&](const std::vector<std::size_t>& seq) {
        double c = 0.0;
        for (std::size_t b = 0; b + 1 < seq.size(); ++b) c += matrices[b](seq[b], seq[b + 1]);
        if (c > best_cost) return;
        std::vector<std::string> ids;
        for (std::size_t b = 0; b < seq.size(); ++b) ids.push_back(pools[b].models[seq[b]].id);
        if (c < best_cost || ids < best_ids) {
          best_cost = c;
          best = seq;
          best_ids = std::move(ids);
        }
      },
      limit);
  return make_plan(pools, matrices, best, options.alpha, options.source);
}

/// Per-batch best model by selection loss (ties to the smaller id), ignoring stability.
inline SequencePlan greedy_sequence(std::span<const CandidatePool> pools,
                                    std::span<const DistanceMatrix> matrices,
                                    LossSource source = LossSource::validation) {
  detail::check_instance(pools, matrices);
  std::vector<std::size_t> picks;
  for (const CandidatePool& pool : pools) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      const double a = selection_loss(pool.models[i], source);
      const double b = selection_loss(pool.models[best], source);
      if (a < b || (a == b && pool.models[i].id < pool.models[best].id)) best = i;
    }
    picks.push_back(best);
  }
  return make_plan(pools, matrices, std::move(picks), 0.0, source);
}

/// Greedy under the filter criterion of `options`: the largest score when a
/// score key is set (ties to the smaller id), otherwise the smallest loss.
inline SequencePlan greedy_sequence(std::span<const CandidatePool> pools,
                                    std::span<const DistanceMatrix> matrices, const SelectOptions& options) {
  if (!options.score_key) return greedy_sequence(pools, matrices, options.source);
  detail::check_instance(pools, matrices);
  std::vector<std::size_t> picks;
  for (const CandidatePool& pool : pools) {
    const auto scores = detail::pool_scores(pool, *options.score_key);
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i)
      if (scores[i] > scores[best] || (scores[i] == scores[best] && pool.models[i].id < pool.models[best].id))
        best = i;
    picks.push_back(best);
  }
  return make_plan(pools, matrices, std::move(picks), 0.0, options.source);
}

inline SequencePlan select_sequence(std::span<const CandidatePool> pools,
                                    std::span<const DistanceMatrix> matrices,
                                    const SelectOptions& options) {
  return solve_sequence(build_graph(pools, matrices, options));
}

inline nlohmann::json plan_to_json(const SequencePlan& plan) {
  return {{"alpha", plan.alpha},
          {"loss_source", to_string(plan.source)},
          {"ids", plan.ids},
          {"transitions", plan.transitions},
          {"stability_loss", plan.stability_loss},
          {"batch_losses", plan.batch_losses},
          {"tie_breaks", plan.tie_breaks}};
}

}  // namespace stableseq
