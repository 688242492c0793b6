#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "stableseq/dataset.hpp"
#include "stableseq/eval.hpp"
#include "stableseq/selector.hpp"

namespace stableseq {

/// One solved tolerance of the sweep.
struct ParetoPoint {
  double alpha = 0.0;
  double predictive_loss = 0.0;  // Σ_b selection loss of the chosen models
  double stability_loss = 0.0;
  SequencePlan plan;
  std::optional<std::size_t> duplicate_of;  // earlier point with the same plan
};

/// Solves the restricted problem once per tolerance, sorted by alpha.
inline std::vector<ParetoPoint> sweep(std::span<const CandidatePool> pools,
                                      std::span<const DistanceMatrix> matrices,
                                      std::vector<double> grid, SelectOptions base = {}) {
  if (grid.empty()) throw ValidationError("tolerance grid is empty");
  std::sort(grid.begin(), grid.end());
  std::vector<ParetoPoint> points;
  for (double alpha : grid) {
    SelectOptions options = base;
    options.alpha = alpha;
    ParetoPoint point;
    point.alpha = alpha;
    point.plan = select_sequence(pools, matrices, options);
    point.stability_loss = point.plan.stability_loss;
    for (double l : point.plan.batch_losses) point.predictive_loss += l;
    for (std::size_t i = 0; i < points.size(); ++i)
      if (points[i].plan.ids == point.plan.ids) {
        point.duplicate_of = i;
        break;
      }
    points.push_back(std::move(point));
  }
  return points;
}

/// Outcome of an exhaustive optimality check. On failure `certificate` holds a
/// sequence that witnesses it.
struct OptimalityCheck {
  bool holds = true;
  std::optional<SequencePlan> certificate;
  std::string detail;
};

namespace detail {

struct Enumeration {
  std::vector<std::vector<double>> losses;           // per batch, per candidate
  std::vector<std::vector<std::size_t>> all_choices;  // every candidate of every batch
};

inline Enumeration full_space(std::span<const CandidatePool> pools, LossSource source) {
  Enumeration e;
  for (const auto& pool : pools) {
    e.losses.push_back(pool_losses(pool, source));
    std::vector<std::size_t> all(pool.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    e.all_choices.push_back(std::move(all));
  }
  return e;
}

inline double stability_of(const std::vector<std::size_t>& seq, std::span<const DistanceMatrix> matrices) {
  double c = 0.0;
  for (std::size_t b = 0; b + 1 < seq.size(); ++b) c += matrices[b](seq[b], seq[b + 1]);
  return c;
}

}  // namespace detail

/// Weak Pareto optimality in the finite candidate space: no sequence is
/// strictly better in every batch loss and in stability at the same time.
inline OptimalityCheck check_wpo(const SequencePlan& plan, std::span<const CandidatePool> pools,
                                 std::span<const DistanceMatrix> matrices,
                                 LossSource source = LossSource::validation) {
  detail::check_instance(pools, matrices);
  const auto space = detail::full_space(pools, source);
  const double stability = recompute_stability(plan, matrices);
  OptimalityCheck out;
  for_each_sequence(space.all_choices, [&](const std::vector<std::size_t>& seq) {
    if (!out.holds) return;
    for (std::size_t b = 0; b < seq.size(); ++b)
      if (!(space.losses[b][seq[b]] < space.losses[b][plan.indices[b]])) return;
    if (!(detail::stability_of(seq, matrices) < stability)) return;
    out.holds = false;
    out.certificate = make_plan(pools, matrices, seq, plan.alpha, source);
    out.detail = "strictly dominated in every batch loss and in stability";
  });
  return out;
}

/// Pareto optimality via the complementary problems: with ε*_b set to the
/// plan's own losses, the plan must (i) minimize stability subject to
/// loss_b <= ε*_b for all b, and (ii) for every batch b', minimize loss_b'
/// subject to loss_b <= ε*_b (b != b') and stability <= the plan's stability.
inline OptimalityCheck verify_po(const SequencePlan& plan, std::span<const CandidatePool> pools,
                                 std::span<const DistanceMatrix> matrices,
                                 LossSource source = LossSource::validation) {
  detail::check_instance(pools, matrices);
  const auto space = detail::full_space(pools, source);
  const std::size_t batches = pools.size();
  std::vector<double> eps(batches);
  for (std::size_t b = 0; b < batches; ++b) eps[b] = space.losses[b][plan.indices[b]];
  const double stability = recompute_stability(plan, matrices);

  OptimalityCheck out;
  // (i) stability problem at ε*
  for_each_sequence(space.all_choices, [&](const std::vector<std::size_t>& seq) {
    if (!out.holds) return;
    for (std::size_t b = 0; b < batches; ++b)
      if (space.losses[b][seq[b]] > eps[b]) return;
    if (detail::stability_of(seq, matrices) < stability) {
      out.holds = false;
      out.certificate = make_plan(pools, matrices, seq, plan.alpha, source);
      out.detail = "does not minimize stability at its own loss budgets";
    }
  });
  // (ii) one complementary problem per batch
  for (std::size_t target = 0; target < batches && out.holds; ++target) {
    for_each_sequence(space.all_choices, [&](const std::vector<std::size_t>& seq) {
      if (!out.holds) return;
      for (std::size_t b = 0; b < batches; ++b)
        if (b != target && space.losses[b][seq[b]] > eps[b]) return;
      if (detail::stability_of(seq, matrices) > stability) return;
      if (space.losses[target][seq[target]] < eps[target]) {
        out.holds = false;
        out.certificate = make_plan(pools, matrices, seq, plan.alpha, source);
        out.detail = "complementary problem for batch " + std::to_string(pools[target].batch) +
                     " has a better loss";
      }
    });
  }
  return out;
}

/// Pareto optimality straight from the definition, by enumeration: no sequence
/// is at least as good in every objective and strictly better in one.
inline OptimalityCheck check_po_direct(const SequencePlan& plan, std::span<const CandidatePool> pools,
                                       std::span<const DistanceMatrix> matrices,
                                       LossSource source = LossSource::validation) {
  detail::check_instance(pools, matrices);
  const auto space = detail::full_space(pools, source);
  const double stability = recompute_stability(plan, matrices);
  OptimalityCheck out;
  for_each_sequence(space.all_choices, [&](const std::vector<std::size_t>& seq) {
    if (!out.holds) return;
    bool strict = false;
    for (std::size_t b = 0; b < seq.size(); ++b) {
      const double mine = space.losses[b][plan.indices[b]];
      const double theirs = space.losses[b][seq[b]];
      if (theirs > mine) return;
      strict = strict || theirs < mine;
    }
    const double s = detail::stability_of(seq, matrices);
    if (s > stability) return;
    if (strict || s < stability) {
      out.holds = false;
      out.certificate = make_plan(pools, matrices, seq, plan.alpha, source);
      out.detail = "dominated";
    }
  });
  return out;
}

/// One CSV row of a predictive-power / stability frontier.
struct FrontierRow {
  std::string curve;
  double alpha = 0.0;
  double in_sample_loss = 0.0;       // Σ_b loss of f_b on its own batch data
  double out_of_sample_loss = 0.0;   // Σ_b loss of f_b on the held-out test set
  double stability_loss = 0.0;

  double gap() const { return out_of_sample_loss - in_sample_loss; }
};

/// In-sample losses are the recorded train losses (on D_b); out-of-sample
/// losses are recomputed on `test`. Importance-only models have no
/// out-of-sample loss (NaN).
inline std::vector<FrontierRow> frontier_report(const std::vector<ParetoPoint>& points,
                                                std::span<const CandidatePool> pools,
                                                const Dataset& test, LossKind kind,
                                                const std::string& curve = "restricted") {
  std::vector<FrontierRow> rows;
  for (const ParetoPoint& point : points) {
    FrontierRow row;
    row.curve = curve;
    row.alpha = point.alpha;
    row.stability_loss = point.stability_loss;
    for (std::size_t b = 0; b < point.plan.indices.size(); ++b) {
      const Model& m = pools[b].models[point.plan.indices[b]];
      row.in_sample_loss += m.train_loss;
      row.out_of_sample_loss += is_predictive(m) ? empirical_loss(m, test, kind)
                                                 : std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(row);
  }
  return rows;
}

inline std::string frontier_csv(const std::vector<FrontierRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "curve,alpha,in_sample_loss,out_of_sample_loss,stability_loss,gap\n";
  for (const auto& r : rows)
    out << r.curve << ',' << r.alpha << ',' << r.in_sample_loss << ',' << r.out_of_sample_loss << ','
        << r.stability_loss << ',' << r.gap() << '\n';
  return out.str();
}

}  // namespace stableseq
