#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "stableseq/error.hpp"

namespace stableseq {

/// Small successive-shortest-path min-cost flow on integer capacities.
///
/// Bellman-Ford (queue based) on the residual graph, so negative residual
/// costs are fine. Sized for path-matching instances (a few hundred arcs).
class MinCostFlow {
 public:
  explicit MinCostFlow(std::size_t nodes) : adjacency_(nodes) {}

  /// Returns the arc index, usable with flow().
  std::size_t add_arc(std::size_t from, std::size_t to, long capacity, double cost) {
    const std::size_t index = arcs_.size();
    arcs_.push_back({to, capacity, cost, 0});
    adjacency_[from].push_back(index);
    arcs_.push_back({from, 0, -cost, 0});
    adjacency_[to].push_back(index + 1);
    return index;
  }

  long flow(std::size_t arc) const { return arcs_[arc].flow; }

  struct Result {
    long flow = 0;
    double cost = 0.0;
  };

  /// Pushes up to `limit` units from source to sink along cheapest augmenting paths.
  Result solve(std::size_t source, std::size_t sink, long limit) {
    Result result;
    const std::size_t n = adjacency_.size();
    constexpr double kInf = std::numeric_limits<double>::infinity();
    while (result.flow < limit) {
      std::vector<double> dist(n, kInf);
      std::vector<std::size_t> via(n, SIZE_MAX);
      std::vector<bool> queued(n, false);
      std::vector<std::size_t> queue{source};
      dist[source] = 0.0;
      queued[source] = true;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::size_t u = queue[head];
        queued[u] = false;
        for (std::size_t a : adjacency_[u]) {
          const Arc& arc = arcs_[a];
          if (arc.capacity - arc.flow <= 0) continue;
          const double candidate = dist[u] + arc.cost;
          if (candidate < dist[arc.to] - 1e-15) {
            dist[arc.to] = candidate;
            via[arc.to] = a;
            if (!queued[arc.to]) {
              queued[arc.to] = true;
              queue.push_back(arc.to);
            }
          }
        }
      }
      if (dist[sink] == kInf) break;

      long push = limit - result.flow;
      for (std::size_t v = sink; v != source; v = arcs_[via[v] ^ 1].to)
        push = std::min(push, arcs_[via[v]].capacity - arcs_[via[v]].flow);
      for (std::size_t v = sink; v != source; v = arcs_[via[v] ^ 1].to) {
        arcs_[via[v]].flow += push;
        arcs_[via[v] ^ 1].flow -= push;
      }
      result.flow += push;
      result.cost += static_cast<double>(push) * dist[sink];
    }
    return result;
  }

 private:
  struct Arc {
    std::size_t to;
    long capacity;
    double cost;
    long flow;
  };
  std::vector<Arc> arcs_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

/// Optimal covering assignment between a larger and a smaller path set.
struct PathMatching {
  double cost = 0.0;
  /// x[p][q] in {0,1}; rows are the larger side.
  std::vector<std::vector<int>> assignment;
};

/// Solves  min sum c[p][q] x[p][q]  s.t.  sum_q x[p][q] = 1 for every p,
///                                        sum_p x[p][q] >= 1 for every q,
/// where rows p outnumber (or equal) columns q.
///
/// Flow model: S -> p (lower = upper = 1), p -> q (cap 1, cost c),
/// q -> T (lower 1, cap rows), and a return arc T -> S carrying exactly
/// `rows` units. Lower bounds are removed by shifting them into node
/// excesses: every p gains one unit, every q owes one unit and T owes
/// rows - cols. A super source feeds the surpluses, a super sink absorbs the
/// deficits, and a flow of `rows` units between them is a feasible
/// assignment. Successive shortest paths keep that flow integral.
inline PathMatching solve_path_matching(const std::vector<std::vector<double>>& cost) {
  const std::size_t rows = cost.size();
  const std::size_t cols = rows == 0 ? 0 : cost.front().size();
  if (rows == 0 || cols == 0) throw ValidationError("path matching needs non-empty path sets");
  if (rows < cols) throw ValidationError("path matching expects rows >= cols");

  // Node layout: [rows p-nodes][cols q-nodes] T, super source, super sink.
  const std::size_t t = rows + cols;
  const std::size_t super_source = t + 1;
  const std::size_t super_sink = t + 2;
  MinCostFlow flow(super_sink + 1);
  std::vector<std::vector<std::size_t>> arc_of(rows, std::vector<std::size_t>(cols));
  for (std::size_t p = 0; p < rows; ++p) {
    flow.add_arc(super_source, p, 1, 0.0);
    for (std::size_t q = 0; q < cols; ++q) arc_of[p][q] = flow.add_arc(p, rows + q, 1, cost[p][q]);
  }
  for (std::size_t q = 0; q < cols; ++q) {
    flow.add_arc(rows + q, super_sink, 1, 0.0);
    if (rows > 1) flow.add_arc(rows + q, t, static_cast<long>(rows - 1), 0.0);
  }
  if (rows > cols) flow.add_arc(t, super_sink, static_cast<long>(rows - cols), 0.0);

  const auto result = flow.solve(super_source, super_sink, static_cast<long>(rows));
  if (result.flow != static_cast<long>(rows)) throw NumericalError("path matching infeasible");

  PathMatching out;
  out.assignment.assign(rows, std::vector<int>(cols, 0));
  std::vector<long> covered(cols, 0);
  for (std::size_t p = 0; p < rows; ++p)
    for (std::size_t q = 0; q < cols; ++q) {
      out.assignment[p][q] = static_cast<int>(flow.flow(arc_of[p][q]));
      covered[q] += out.assignment[p][q];
      if (out.assignment[p][q]) out.cost += cost[p][q];
    }
  for (long c : covered)
    if (c < 1) throw NumericalError("path matching left a column uncovered");
  return out;
}

}  // namespace stableseq
