#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "stableseq/dataset.hpp"
#include "stableseq/error.hpp"
#include "stableseq/eval.hpp"
#include "stableseq/model.hpp"
#include "stableseq/rng.hpp"

namespace stableseq {

namespace detail {

inline Eigen::MatrixXd with_intercept_column(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z(x.rows(), x.cols() + 1);
  z.leftCols(x.cols()) = x;
  z.col(x.cols()).setOnes();
  return z;
}

inline void require_binary(const Dataset& data) {
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    if (data.y(i) != 0.0 && data.y(i) != 1.0)
      throw ValidationError("classification trainer needs 0/1 labels");
}

}  // namespace detail

/// Solves (ZᵀZ + λ·diag(1..1, 0)) β = Zᵀy with Z = [X 1]; the intercept is unpenalized.
inline LinearModel train_ridge(const Dataset& data, double l2_penalty) {
  if (data.rows() < 1) throw ValidationError("ridge needs at least one row");
  if (!(l2_penalty >= 0.0) || !std::isfinite(l2_penalty))
    throw ValidationError("ridge penalty must be finite and >= 0");
  const Eigen::Index p = data.features();
  const Eigen::MatrixXd z = detail::with_intercept_column(data.x);
  Eigen::MatrixXd a = z.transpose() * z;
  a.diagonal().head(p).array() += l2_penalty;
  const Eigen::VectorXd rhs = z.transpose() * data.y;

  Eigen::VectorXd beta;
  if (l2_penalty == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < a.rows())
      throw NumericalError("ridge system is singular with zero penalty; use a penalty > 0");
    beta = qr.solve(rhs);
  } else {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success) throw NumericalError("ridge factorization failed");
    beta = ldlt.solve(rhs);
  }
  LinearModel out;
  out.coefficients.assign(beta.data(), beta.data() + p);
  out.intercept = beta(p);
  out.task = Task::regression;
  return out;
}

enum class StepRule { newton, gradient };

struct LogisticOptions {
  double l2_penalty = 1e-3;
  int max_iters = 200;
  StepRule step_rule = StepRule::newton;
  double gradient_tolerance = 1e-6;
};

struct LogisticFit {
  LinearModel model;
  double gradient_norm = 0.0;
  int iterations = 0;
};

/// Minimizes mean log-loss + (λ/2)‖w‖² (intercept unpenalized) by damped
/// Newton or by gradient descent, both with Armijo backtracking. Stops once
/// ‖∇‖ <= tolerance or at the iteration cap.
inline LogisticFit train_logistic_fit(const Dataset& data, const LogisticOptions& options) {
  if (data.rows() < 1) throw ValidationError("logistic regression needs at least one row");
  detail::require_binary(data);
  const Eigen::Index p = data.features();
  const auto n = static_cast<double>(data.rows());
  const Eigen::MatrixXd z = detail::with_intercept_column(data.x);
  const double lambda = options.l2_penalty;

  auto objective = [&](const Eigen::VectorXd& w) {
    const Eigen::VectorXd m = z * w;
    double total = 0.0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      // log(1 + e^m) - y m, computed stably
      const double s = m(i) > 0 ? m(i) + std::log1p(std::exp(-m(i))) : std::log1p(std::exp(m(i)));
      total += s - data.y(i) * m(i);
    }
    return total / n + 0.5 * lambda * w.head(p).squaredNorm();
  };
  auto gradient = [&](const Eigen::VectorXd& w, Eigen::VectorXd* prob) {
    Eigen::VectorXd mu = (z * w).unaryExpr([](double v) { return detail::sigmoid(v); });
    Eigen::VectorXd g = z.transpose() * (mu - data.y) / n;
    g.head(p) += lambda * w.head(p);
    if (prob) *prob = std::move(mu);
    return g;
  };

  Eigen::VectorXd w = Eigen::VectorXd::Zero(p + 1);
  Eigen::VectorXd mu;
  Eigen::VectorXd g = gradient(w, &mu);
  double f = objective(w);
  // Lipschitz bound of the gradient for the first-order step.
  const double lipschitz = 0.25 * z.squaredNorm() / n + lambda;
  int iter = 0;
  for (; iter < options.max_iters && g.norm() > options.gradient_tolerance; ++iter) {
    Eigen::VectorXd direction;
    if (options.step_rule == StepRule::newton) {
      Eigen::MatrixXd h = z.transpose() * (mu.array() * (1.0 - mu.array())).matrix().asDiagonal() * z / n;
      h.diagonal().head(p).array() += lambda;
      h.diagonal().array() += 1e-12;
      direction = -h.ldlt().solve(g);
    } else {
      direction = -g / lipschitz;
    }
    double step = 1.0;
    const double slope = g.dot(direction);
    Eigen::VectorXd candidate = w + direction;
    double fc = objective(candidate);
    while (fc > f + 1e-4 * step * slope && step > 1e-12) {
      step *= 0.5;
      candidate = w + step * direction;
      fc = objective(candidate);
    }
    if (fc > f) break;  // no further progress representable
    w = std::move(candidate);
    f = fc;
    g = gradient(w, &mu);
  }

  LogisticFit out;
  out.model.coefficients.assign(w.data(), w.data() + p);
  out.model.intercept = w(p);
  out.model.task = Task::classification;
  out.gradient_norm = g.norm();
  out.iterations = iter;
  return out;
}

inline LinearModel train_logistic(const Dataset& data, const LogisticOptions& options = {}) {
  return train_logistic_fit(data, options).model;
}

struct CartOptions {
  int max_depth = 4;
  int min_leaf = 1;
  double feature_fraction = 1.0;
  std::uint64_t seed = 0;
};

/// Gini impurity of a binary node with `positives` out of `n`.
inline double gini(std::int64_t n, std::int64_t positives) {
  if (n == 0) return 0.0;
  const double q1 = static_cast<double>(positives) / static_cast<double>(n);
  const double q0 = 1.0 - q1;
  return 1.0 - q0 * q0 - q1 * q1;
}

/// Impurity decrease of splitting (n, pos) into (nl, pl) and the complement.
inline double gini_gain(std::int64_t n, std::int64_t pos, std::int64_t nl, std::int64_t pl) {
  const std::int64_t nr = n - nl;
  const double dn = static_cast<double>(n);
  return gini(n, pos) - static_cast<double>(nl) / dn * gini(nl, pl) -
         static_cast<double>(nr) / dn * gini(nr, pos - pl);
}

/// Greedy binary CART on Gini gain.
///
/// Candidate thresholds are midpoints between consecutive distinct values.
/// Ties in gain go to the lowest feature index, then the lowest threshold.
/// Each internal node records its impurity reduction weighted by the share
/// of training rows reaching it (n_node / n_root · gain).
inline TreeModel train_cart(const Dataset& data, const CartOptions& options = {}) {
  if (data.rows() < 1) throw ValidationError("CART needs at least one row");
  detail::require_binary(data);
  if (options.max_depth < 0 || options.min_leaf < 1)
    throw ValidationError("CART needs max_depth >= 0 and min_leaf >= 1");
  const Eigen::Index p = data.features();
  const auto n_root = static_cast<double>(data.rows());
  const int per_node = std::max<int>(
      1, static_cast<int>(std::ceil(std::clamp(options.feature_fraction, 0.0, 1.0) * static_cast<double>(p))));
  Rng rng(options.seed);
  TreeModel tree;
  tree.task = Task::classification;

  std::vector<Eigen::Index> all(static_cast<std::size_t>(data.rows()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});

  // Returns the index of the created node.
  auto build = [&](auto&& self, std::vector<Eigen::Index> rows, int depth) -> int {
    const auto n = static_cast<std::int64_t>(rows.size());
    std::int64_t pos = 0;
    for (auto r : rows) pos += data.y(r) == 1.0 ? 1 : 0;
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    auto make_leaf = [&] {
      TreeNode& leaf = tree.nodes[static_cast<std::size_t>(index)];
      leaf.label = pos * 2 > n ? 1 : 0;
      leaf.count = n;
      leaf.positive_fraction = n > 0 ? static_cast<double>(pos) / static_cast<double>(n) : 0.0;
      return index;
    };
    if (depth >= options.max_depth || pos == 0 || pos == n || n < 2 * options.min_leaf)
      return make_leaf();

    std::vector<int> features(static_cast<std::size_t>(p));
    std::iota(features.begin(), features.end(), 0);
    if (per_node < p) {
      for (int k = 0; k < per_node; ++k) {
        const auto pick = k + static_cast<int>(rng.index(static_cast<std::uint64_t>(p - k)));
        std::swap(features[static_cast<std::size_t>(k)], features[static_cast<std::size_t>(pick)]);
      }
      features.resize(static_cast<std::size_t>(per_node));
      std::sort(features.begin(), features.end());
    }

    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<Eigen::Index> sorted = rows;
    for (int f : features) {
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](auto a, auto b) { return data.x(a, f) < data.x(b, f); });
      std::int64_t left_pos = 0;
      for (std::int64_t i = 0; i + 1 < n; ++i) {
        left_pos += data.y(sorted[static_cast<std::size_t>(i)]) == 1.0 ? 1 : 0;
        const double lo = data.x(sorted[static_cast<std::size_t>(i)], f);
        const double hi = data.x(sorted[static_cast<std::size_t>(i + 1)], f);
        if (!(lo < hi)) continue;
        const std::int64_t nl = i + 1;
        if (nl < options.min_leaf || n - nl < options.min_leaf) continue;
        const double gain = gini_gain(n, pos, nl, left_pos);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          double mid = lo + (hi - lo) / 2.0;
          if (!(mid < hi)) mid = lo;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0 || best_gain <= 1e-12) return make_leaf();

    std::vector<Eigen::Index> left, right;
    for (auto r : rows) (data.x(r, best_feature) <= best_threshold ? left : right).push_back(r);
    const int l = self(self, std::move(left), depth + 1);
    const int r = self(self, std::move(right), depth + 1);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    node.gain = static_cast<double>(n) / n_root * best_gain;
    node.count = n;
    return index;
  };
  tree.root = build(build, std::move(all), 0);
  return tree;
}

// ---------------------------------------------------------------------------
// Candidate pools

enum class Family { ridge, logistic, cart };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::ridge: return "ridge";
    case Family::logistic: return "logistic";
    case Family::cart: return "cart";
  }
  return "?";
}

/// Bootstrap + hyperparameter jitter used to diversify candidates.
struct PoolConfig {
  Family family = Family::ridge;
  int candidates = 25;
  bool bootstrap = true;
  // λ ~ log-uniform[lambda_min, lambda_max]. Ridge uses the sum-of-squares
  // scale, logistic the mean-loss scale.
  double lambda_min = 1e-2;
  double lambda_max = 1e1;
  int depth_min = 2;
  int depth_max = 4;
  int leaf_min = 1;
  int leaf_max = 10;
  double feature_fraction = 1.0;

  static PoolConfig defaults(Family family) {
    PoolConfig c;
    c.family = family;
    if (family == Family::logistic) {
      c.lambda_min = 1e-4;
      c.lambda_max = 1e-1;
    }
    return c;
  }

  LossKind loss() const { return family == Family::ridge ? LossKind::mse : LossKind::log_loss; }
};

inline std::string candidate_id(int batch, int index) {
  return "b" + std::to_string(batch) + "-m" + std::to_string(index);
}

/// Fits `config.candidates` models on bootstrap resamples of `train`, each with
/// its own jittered hyperparameters, and records train loss on the full
/// `train` set and validation loss on `validation`. Candidate i draws from an
/// independent stream derived from (seed, i), so the pool does not depend on
/// `threads`.
inline CandidatePool bootstrap_pool(const Dataset& train, const Dataset& validation, int batch,
                                    const FeatureBounds& bounds, const PoolConfig& config,
                                    std::uint64_t seed, unsigned threads = 1) {
  if (config.candidates < 1) throw ValidationError("candidate count must be at least 1");
  if (train.rows() < 1 || validation.rows() < 1)
    throw ValidationError("pool training needs non-empty train and validation data");
  if (config.family != Family::ridge) detail::require_binary(train);
  if (config.lambda_min <= 0.0 || config.lambda_max < config.lambda_min)
    throw ValidationError("invalid penalty range");
  if (config.depth_min < 0 || config.depth_max < config.depth_min || config.leaf_min < 1 ||
      config.leaf_max < config.leaf_min)
    throw ValidationError("invalid depth/leaf jitter range");

  CandidatePool pool;
  pool.batch = batch;
  pool.feature_count = static_cast<std::size_t>(train.features());
  pool.feature_bounds = bounds;
  pool.models.resize(static_cast<std::size_t>(config.candidates));
  const LossKind loss = config.loss();

  auto fit = [&](int i) {
    const std::uint64_t stream = Rng::derive(seed, static_cast<std::uint64_t>(i));
    Rng rng(stream);
    Dataset sample;
    if (config.bootstrap) {
      std::vector<Eigen::Index> rows(static_cast<std::size_t>(train.rows()));
      for (auto& r : rows) r = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(train.rows())));
      sample = select_rows(train, rows);
    } else {
      sample = train;
    }
    Model m;
    m.id = candidate_id(batch, i);
    m.metadata["stream_seed"] = stream;
    switch (config.family) {
      case Family::ridge:
      case Family::logistic: {
        const double lambda = std::exp(rng.uniform(std::log(config.lambda_min), std::log(config.lambda_max)));
        m.metadata["lambda"] = lambda;
        if (config.family == Family::ridge) {
          m.representation = train_ridge(sample, lambda);
        } else {
          LogisticOptions opt;
          opt.l2_penalty = lambda;
          m.representation = train_logistic(sample, opt);
        }
        break;
      }
      case Family::cart: {
        CartOptions opt;
        opt.max_depth = config.depth_min + static_cast<int>(rng.index(static_cast<std::uint64_t>(config.depth_max - config.depth_min + 1)));
        opt.min_leaf = config.leaf_min + static_cast<int>(rng.index(static_cast<std::uint64_t>(config.leaf_max - config.leaf_min + 1)));
        opt.feature_fraction = config.feature_fraction;
        opt.seed = rng.next();
        m.metadata["max_depth"] = opt.max_depth;
        m.metadata["min_leaf"] = opt.min_leaf;
        m.representation = train_cart(sample, opt);
        break;
      }
    }
    m.train_loss = empirical_loss(m, train, loss);
    m.val_loss = empirical_loss(m, validation, loss);
    if (config.family != Family::ridge && validation.y.minCoeff() != validation.y.maxCoeff())
      m.metadata["val_auc"] = auc(m, validation);
    pool.models[static_cast<std::size_t>(i)] = std::move(m);
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(config.candidates)));
  if (threads == 1) {
    for (int i = 0; i < config.candidates; ++i) fit(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> workers;
    for (unsigned w = 0; w < threads; ++w)
      workers.emplace_back([&, w] {
        try {
          for (int i = next++; i < config.candidates; i = next++) fit(i);
        } catch (...) {
          errors[w] = std::current_exception();
          next = config.candidates;
        }
      });
    for (auto& t : workers) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return pool;
}

}  // namespace stableseq
