#pragma once

#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "stableseq/distance.hpp"
#include "stableseq/error.hpp"
#include "stableseq/selector.hpp"

namespace stableseq {

/// Re-solves the whole sequence over every available batch. With an anchor,
/// batch 1 is pinned to that model. An anchor failing the batch-1 filter is
/// an InfeasibleError unless `options.force_anchor` is set.
inline SequencePlan extend_sequence(std::span<const CandidatePool> pools,
                                    std::span<const DistanceMatrix> matrices, SelectOptions options,
                                    const std::optional<std::string>& anchor) {
  if (anchor) {
    pools.front().index_of(*anchor);  // throws when missing
    options.anchor = anchor;
  } else {
    options.anchor.reset();
  }
  return select_sequence(pools, matrices, options);
}

inline const Model& final_model(const SequencePlan& plan, std::span<const CandidatePool> pools) {
  if (plan.indices.empty() || plan.indices.size() > pools.size())
    throw ValidationError("plan does not fit its pools");
  return pools[plan.indices.size() - 1].models.at(plan.indices.back());
}

/// Distance between the deployed (final) models of two sequences.
inline double inter_sequence_loss(const SequencePlan& a, std::span<const CandidatePool> pools_a,
                                  const SequencePlan& b, std::span<const CandidatePool> pools_b,
                                  const DistanceSpec& spec) {
  const CandidatePool& last_b = pools_b[b.indices.size() - 1];
  return model_distance(final_model(a, pools_a), final_model(b, pools_b), spec, last_b.feature_bounds);
}

/// Σ d(f_b, f_{b+1}) of a plan, recomputed under `spec`.
inline double intra_sequence_loss(const SequencePlan& plan, std::span<const CandidatePool> pools,
                                  const DistanceSpec& spec) {
  double total = 0.0;
  for (std::size_t b = 0; b + 1 < plan.indices.size(); ++b)
    total += model_distance(pools[b].models.at(plan.indices[b]), pools[b + 1].models.at(plan.indices[b + 1]),
                            spec, pools[b + 1].feature_bounds);
  return total;
}

struct BoundCheck {
  bool holds = false;
  double lhs = 0.0;  // d(f_B, f'_B')
  double rhs = 0.0;  // L_S(f) + L_S(f')
};

/// For two sequences sharing their first model and a true metric d,
/// d(f_B, f'_B') <= L_S(f) + L_S(f') by the triangle inequality.
/// Squared L2 is not a metric, so squared specs are refused.
inline BoundCheck stability_bound_check(const SequencePlan& a, std::span<const CandidatePool> pools_a,
                                        const SequencePlan& b, std::span<const CandidatePool> pools_b,
                                        const DistanceSpec& spec) {
  if (spec.squared && spec.kind != MetricKind::tree_path_matching)
    throw ValidationError("the inter-sequence bound needs a metric distance; squared L2 violates "
                          "the triangle inequality (use squared = false)");
  if (a.ids.empty() || b.ids.empty() || a.ids.front() != b.ids.front())
    throw ValidationError("both sequences must start from the same anchor model");
  BoundCheck out;
  out.lhs = inter_sequence_loss(a, pools_a, b, pools_b, spec);
  out.rhs = intra_sequence_loss(a, pools_a, spec) + intra_sequence_loss(b, pools_b, spec);
  out.holds = out.lhs <= out.rhs + 1e-9;
  return out;
}

enum class AdaptStrategy {
  svml,          // full anchored re-solve on every extension
  greedy,        // best validation model of the newest batch
  greedy_adapt,  // admissible model of the newest batch closest to the previous deployment
};

inline const char* to_string(AdaptStrategy s) {
  switch (s) {
    case AdaptStrategy::svml: return "SVML";
    case AdaptStrategy::greedy: return "Greedy";
    case AdaptStrategy::greedy_adapt: return "Greedy-adapt";
  }
  return "?";
}

/// Sequences of lengths 1, 2, ..., N over the same pools, with the distance
/// between consecutive deployed models (transition T_{k-(k+1)}).
struct SequenceFamily {
  AdaptStrategy strategy = AdaptStrategy::svml;
  std::optional<std::string> anchor;
  std::vector<SequencePlan> plans;
  std::vector<double> inter_losses;

  double mean_inter_loss() const {
    double s = 0.0;
    for (double v : inter_losses) s += v;
    return inter_losses.empty() ? 0.0 : s / static_cast<double>(inter_losses.size());
  }
};

/// Builds the family for `strategy`. The length-1 sequence is the anchor when
/// one is given, otherwise the best model of batch 1.
inline SequenceFamily build_family(std::span<const CandidatePool> pools,
                                   std::span<const DistanceMatrix> matrices,
                                   const SelectOptions& options, AdaptStrategy strategy,
                                   const DistanceSpec& spec, const std::optional<std::string>& anchor) {
  detail::check_instance(pools, matrices);
  SequenceFamily family;
  family.strategy = strategy;
  family.anchor = anchor;
  const std::size_t n = pools.size();

  const SequencePlan greedy_all = greedy_sequence(pools, matrices, options);
  std::vector<std::size_t> first{anchor ? pools[0].index_of(*anchor) : greedy_all.indices[0]};
  family.plans.push_back(make_plan(pools.first(1), matrices.first(0), first, options.alpha, options.source));

  for (std::size_t len = 2; len <= n; ++len) {
    const auto sub_pools = pools.first(len);
    const auto sub_matrices = matrices.first(len - 1);
    SequencePlan plan;
    switch (strategy) {
      case AdaptStrategy::svml:
        plan = extend_sequence(sub_pools, sub_matrices, options, anchor);
        break;
      case AdaptStrategy::greedy: {
        std::vector<std::size_t> idx(greedy_all.indices.begin(), greedy_all.indices.begin() + static_cast<long>(len));
        idx[0] = first[0];
        plan = make_plan(sub_pools, sub_matrices, std::move(idx), options.alpha, options.source);
        break;
      }
      case AdaptStrategy::greedy_adapt: {
        std::vector<std::size_t> idx = family.plans.back().indices;
        const auto admissible = surviving_nodes(sub_pools.last(1), [&] {
          SelectOptions o = options;
          o.anchor.reset();
          if (!o.epsilon.empty()) o.epsilon = {options.epsilon[len - 1]};
          return o;
        }());
        const std::size_t prev = idx.back();
        std::size_t best = admissible[0][0];
        for (std::size_t k : admissible[0]) {
          const double dk = sub_matrices.back()(prev, k);
          const double db = sub_matrices.back()(prev, best);
          if (dk < db || (dk == db && pools[len - 1].models[k].id < pools[len - 1].models[best].id))
            best = k;
        }
        idx.push_back(best);
        plan = make_plan(sub_pools, sub_matrices, std::move(idx), options.alpha, options.source);
        break;
      }
    }
    family.inter_losses.push_back(
        inter_sequence_loss(family.plans.back(), pools, plan, pools, spec));
    family.plans.push_back(std::move(plan));
  }
  return family;
}

/// Table layout: one row per strategy, one column per transition T_{k-(k+1)}.
inline std::string family_table_csv(const std::vector<SequenceFamily>& families) {
  std::ostringstream out;
  out.precision(17);
  out << "model";
  if (!families.empty())
    for (std::size_t k = 1; k <= families.front().inter_losses.size(); ++k)
      out << ",T_" << k << '-' << k + 1;
  out << ",mean\n";
  for (const auto& f : families) {
    out << to_string(f.strategy);
    for (double v : f.inter_losses) out << ',' << v;
    out << ',' << f.mean_inter_loss() << '\n';
  }
  return out.str();
}

}  // namespace stableseq
