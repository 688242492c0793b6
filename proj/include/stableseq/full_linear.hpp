#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stableseq/dataset.hpp"
#include "stableseq/error.hpp"
#include "stableseq/model.hpp"
#include "stableseq/pareto.hpp"

namespace stableseq {

/// Least-squares geometry of one batch after centering (the intercept is
/// profiled out): MSE(β) = min_mse + (β - β̂)ᵀ H (β - β̂), H = X̃ᵀX̃ / n.
struct BatchQuadratic {
  Eigen::VectorXd x_mean;
  double y_mean = 0.0;
  Eigen::VectorXd beta_hat;      // minimum-norm least-squares solution
  double min_mse = 0.0;
  Eigen::VectorXd eigenvalues;   // of H, ascending, tiny ones clamped to 0
  Eigen::MatrixXd eigenvectors;

  double excess(const Eigen::VectorXd& beta) const {
    const Eigen::VectorXd v = eigenvectors.transpose() * (beta - beta_hat);
    return (eigenvalues.array() * v.array().square()).sum();
  }

  double intercept(const Eigen::VectorXd& beta) const { return y_mean - x_mean.dot(beta); }
};

inline BatchQuadratic batch_quadratic(const Dataset& data) {
  if (data.rows() < 1) throw ValidationError("least squares on empty data");
  const auto n = static_cast<double>(data.rows());
  BatchQuadratic q;
  q.x_mean = data.x.colwise().mean().transpose();
  q.y_mean = data.y.mean();
  const Eigen::MatrixXd xc = data.x.rowwise() - q.x_mean.transpose();
  const Eigen::VectorXd yc = data.y.array() - q.y_mean;
  const Eigen::MatrixXd h = xc.transpose() * xc / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  q.eigenvalues = eig.eigenvalues();
  q.eigenvectors = eig.eigenvectors();
  const double cutoff = 1e-12 * std::max(1.0, q.eigenvalues.maxCoeff());
  const Eigen::VectorXd rhs = q.eigenvectors.transpose() * (xc.transpose() * yc / n);
  Eigen::VectorXd coord(rhs.size());
  for (Eigen::Index i = 0; i < rhs.size(); ++i) {
    if (q.eigenvalues(i) <= cutoff) {
      q.eigenvalues(i) = 0.0;
      coord(i) = 0.0;
    } else {
      coord(i) = rhs(i) / q.eigenvalues(i);
    }
  }
  q.beta_hat = q.eigenvectors * coord;
  q.min_mse = (yc - xc * q.beta_hat).squaredNorm() / n;
  return q;
}

struct BestLoss {
  double mse = 0.0;
  LinearModel model;
  double epsilon(double alpha) const { return (1.0 + alpha) * mse; }
};

/// Smallest MSE any linear model (with intercept) reaches on `data`.
/// Rank-deficient designs use the minimum-norm least-squares solution.
inline BestLoss best_loss(const Dataset& data) {
  const BatchQuadratic q = batch_quadratic(data);
  BestLoss out;
  out.mse = q.min_mse;
  out.model.coefficients.assign(q.beta_hat.data(), q.beta_hat.data() + q.beta_hat.size());
  out.model.intercept = q.intercept(q.beta_hat);
  out.model.task = Task::regression;
  return out;
}

/// Euclidean projection of `target` onto {β : excess(β) <= budget}.
///
/// The minimizer is β(μ) = β̂ + (I + μH)⁻¹(target - β̂); the multiplier μ is
/// found by bracketing and bisection on the monotone secular function
/// excess(β(μ)) until budget - excess <= residual_tol (always on the feasible
/// side). Directions in the null space of H are unconstrained.
struct Projection {
  Eigen::VectorXd beta;
  double multiplier = 0.0;
};

inline Projection project_onto_budget(const BatchQuadratic& q, const Eigen::VectorXd& target,
                                      double budget, double residual_tol = 1e-8) {
  const Eigen::VectorXd v = q.eigenvectors.transpose() * (target - q.beta_hat);
  const Eigen::ArrayXd lam = q.eigenvalues.array();
  auto excess_at = [&](double mu) {
    return (lam * v.array().square() / (1.0 + mu * lam).square()).sum();
  };
  auto beta_at = [&](double mu) -> Eigen::VectorXd {
    return q.beta_hat + q.eigenvectors * (v.array() / (1.0 + mu * lam)).matrix();
  };
  if (std::isinf(budget) || excess_at(0.0) <= budget) return {target, 0.0};
  if (budget <= 0.0) {
    Eigen::VectorXd coord = v;
    for (Eigen::Index i = 0; i < coord.size(); ++i)
      if (lam(i) > 0.0) coord(i) = 0.0;
    return {q.beta_hat + q.eigenvectors * coord, std::numeric_limits<double>::infinity()};
  }
  double lo = 0.0;
  double hi = 1.0;
  while (excess_at(hi) > budget && hi < 1e300) {
    lo = hi;
    hi *= 2.0;
  }
  for (int iter = 0; iter < 400 && budget - excess_at(hi) > residual_tol; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (excess_at(mid) > budget ? lo : hi) = mid;
  }
  return {beta_at(hi), hi};
}

struct FullLinearOptions {
  double tolerance = 1e-9;  // relative decrease of the stability objective
  int max_outer_iters = 500;
  double residual_tol = 1e-8;
};

struct FullLinearResult {
  std::vector<LinearModel> models;
  std::vector<double> losses;          // MSE_b recomputed from the data
  std::vector<double> epsilon;
  double stability_loss = 0.0;         // Σ ‖β_b - β_{b+1}‖²
  std::vector<double> objective_history;  // after initialization and every sweep
  std::vector<double> violation_history;  // max_b MSE_b - ε_b, same points as objective_history
  std::vector<double> multipliers;     // of each loss constraint, for the halved Lagrangian
  std::vector<double> kkt_residuals;   // stationarity norm per batch
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline double chain_objective(const std::vector<Eigen::VectorXd>& betas) {
  double s = 0.0;
  for (std::size_t b = 0; b + 1 < betas.size(); ++b) s += (betas[b] - betas[b + 1]).squaredNorm();
  return s;
}

inline double block_objective(const std::vector<Eigen::VectorXd>& betas, std::size_t b,
                              const Eigen::VectorXd& candidate) {
  double s = 0.0;
  if (b > 0) s += (candidate - betas[b - 1]).squaredNorm();
  if (b + 1 < betas.size()) s += (candidate - betas[b + 1]).squaredNorm();
  return s;
}

inline double mse(const Dataset& d, const Eigen::VectorXd& beta, double intercept) {
  return ((d.x * beta).array() + intercept - d.y.array()).square().mean();
}

}  // namespace detail

/// Minimizes Σ_b ‖β_b - β_{b+1}‖² subject to MSE_b(β_b) <= ε_b over all linear
/// models, by block-coordinate descent from the per-batch least-squares fits.
/// Each block update is an exact projection of the neighbour mean onto the
/// batch's loss ellipsoid.
inline FullLinearResult solve_full(std::span<const Dataset> batches, const std::vector<double>& epsilon,
                                   const FullLinearOptions& options = {}) {
  const std::size_t count = batches.size();
  if (count < 2) throw ValidationError("full solve needs at least two batches");
  if (epsilon.size() != count) throw ValidationError("need one loss budget per batch");
  std::vector<BatchQuadratic> quads;
  for (std::size_t b = 0; b < count; ++b) {
    quads.push_back(batch_quadratic(batches[b]));
    if (std::isnan(epsilon[b]) || epsilon[b] < quads.back().min_mse * (1.0 - 1e-12) - 1e-15)
      throw InfeasibleError("loss budget of batch " + std::to_string(b + 1) +
                            " is below the best achievable MSE " + std::to_string(quads.back().min_mse));
  }
  auto budget = [&](std::size_t b) { return epsilon[b] - quads[b].min_mse; };

  std::vector<Eigen::VectorXd> betas;
  for (const auto& q : quads) betas.push_back(q.beta_hat);
  std::vector<double> multipliers(count, 0.0);

  FullLinearResult out;
  out.epsilon = epsilon;
  auto max_violation = [&] {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < count; ++b)
      worst = std::max(worst, detail::mse(batches[b], betas[b], quads[b].intercept(betas[b])) - epsilon[b]);
    return worst;
  };
  double objective = detail::chain_objective(betas);
  out.objective_history.push_back(objective);
  out.violation_history.push_back(max_violation());
  for (int iter = 0; iter < options.max_outer_iters; ++iter) {
    for (std::size_t b = 0; b < count; ++b) {
      Eigen::VectorXd target = Eigen::VectorXd::Zero(betas[b].size());
      int neighbours = 0;
      if (b > 0) target += betas[b - 1], ++neighbours;
      if (b + 1 < count) target += betas[b + 1], ++neighbours;
      target /= neighbours;
      Projection proj = project_onto_budget(quads[b], target, budget(b), options.residual_tol);
      if (detail::block_objective(betas, b, proj.beta) <= detail::block_objective(betas, b, betas[b])) {
        betas[b] = std::move(proj.beta);
        multipliers[b] = proj.multiplier * neighbours;
      }
    }
    const double next = detail::chain_objective(betas);
    out.objective_history.push_back(next);
    out.violation_history.push_back(max_violation());
    out.iterations = iter + 1;
    const double decrease = objective - next;
    objective = next;
    if (objective == 0.0 || decrease <= options.tolerance * objective) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged)
    warn("full linear solver stopped after " + std::to_string(out.iterations) +
         " outer iterations without meeting the tolerance");

  out.stability_loss = objective;
  for (std::size_t b = 0; b < count; ++b) {
    LinearModel m;
    m.coefficients.assign(betas[b].data(), betas[b].data() + betas[b].size());
    m.intercept = quads[b].intercept(betas[b]);
    m.task = Task::regression;
    out.losses.push_back(detail::mse(batches[b], betas[b], m.intercept));
    out.models.push_back(std::move(m));

    // ∇ of the Lagrangian (halved): Σ_n (β_b - β_n) + μ_b H (β_b - β̂_b)
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(betas[b].size());
    if (b > 0) grad += betas[b] - betas[b - 1];
    if (b + 1 < count) grad += betas[b] - betas[b + 1];
    if (std::isfinite(multipliers[b]) && multipliers[b] > 0.0) {
      const Eigen::VectorXd v = quads[b].eigenvectors.transpose() * (betas[b] - quads[b].beta_hat);
      grad += multipliers[b] * quads[b].eigenvectors * (quads[b].eigenvalues.array() * v.array()).matrix();
    }
    out.kkt_residuals.push_back(grad.norm());
  }
  out.multipliers = multipliers;
  return out;
}

/// Per-batch budgets (1 + alpha) · best MSE.
inline std::vector<double> full_epsilon(std::span<const Dataset> batches, double alpha) {
  std::vector<double> eps;
  for (const auto& d : batches)
    eps.push_back(std::isinf(alpha) ? std::numeric_limits<double>::infinity() : best_loss(d).epsilon(alpha));
  return eps;
}

/// Frontier row for a full solve, matching frontier_report's columns.
inline FrontierRow full_frontier_row(const FullLinearResult& result, double alpha, const Dataset& test,
                                     const std::string& curve = "full") {
  FrontierRow row;
  row.curve = curve;
  row.alpha = alpha;
  row.stability_loss = result.stability_loss;
  for (std::size_t b = 0; b < result.models.size(); ++b) {
    row.in_sample_loss += result.losses[b];
    const Eigen::Map<const Eigen::VectorXd> beta(result.models[b].coefficients.data(),
                                                 static_cast<Eigen::Index>(result.models[b].coefficients.size()));
    row.out_of_sample_loss += detail::mse(test, beta, result.models[b].intercept);
  }
  return row;
}

}  // namespace stableseq
