#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stableseq/error.hpp"
#include "stableseq/model.hpp"
#include "stableseq/rng.hpp"

namespace stableseq {

/// Rows (x_i, y_i, t_i). Classification targets are stored as 0.0 / 1.0.
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd t;

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index features() const { return x.cols(); }

  void validate() const {
    if (y.size() != x.rows() || t.size() != x.rows())
      throw ValidationError("dataset columns have inconsistent lengths");
    if (!x.allFinite() || !y.allFinite() || !t.allFinite())
      throw ValidationError("dataset contains non-finite values");
  }

  bool operator==(const Dataset& o) const { return x == o.x && y == o.y && t == o.t; }
};

inline Dataset select_rows(const Dataset& d, const std::vector<Eigen::Index>& rows) {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), d.x.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.t.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.x.row(r) = d.x.row(rows[i]);
    out.y(r) = d.y(rows[i]);
    out.t(r) = d.t(rows[i]);
  }
  return out;
}

inline Dataset slice_rows(const Dataset& d, Eigen::Index begin, Eigen::Index end) {
  return {d.x.middleRows(begin, end - begin), d.y.segment(begin, end - begin),
          d.t.segment(begin, end - begin)};
}

inline FeatureBounds feature_bounds(const Dataset& d) {
  FeatureBounds bounds(static_cast<std::size_t>(d.features()));
  for (Eigen::Index j = 0; j < d.features(); ++j)
    bounds[static_cast<std::size_t>(j)] = {d.x.col(j).minCoeff(), d.x.col(j).maxCoeff()};
  return bounds;
}

/// Cumulative batches D_1 ⊆ ... ⊆ D_B, one validation slice per batch and a
/// held-out test set. Feature bounds come from D_B and are shared by all batches.
struct BatchSeries {
  std::vector<Dataset> train;
  std::vector<Dataset> validation;
  Dataset test;
  FeatureBounds bounds;
  Task task = Task::regression;

  std::size_t batches() const { return train.size(); }
};

/// Fraction of interval B carved out as the last batch's validation slice.
inline constexpr double kLastValidationFraction = 0.2;

/// Time-ordered split into B equal-count intervals after holding out the last
/// `test_fraction` of rows (by time). Batch b trains on intervals 1..b and
/// validates on interval b+1. Batch B has no later interval, so it validates
/// on the final 20% of interval B; that slice stays inside D_B, which keeps
/// |D_b| = b · (interval size). Leftover rows (when the count does not divide evenly) go to the last interval.
inline BatchSeries split_batches(const Dataset& data, int batches, double test_fraction,
                                 Task task = Task::regression) {
  data.validate();
  if (batches < 2) throw ValidationError("batch count must be at least 2");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ValidationError("test fraction must lie in [0, 1)");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return data.t(a) < data.t(b); });
  const Dataset sorted = select_rows(data, order);

  const Eigen::Index n = sorted.rows();
  const auto n_test = static_cast<Eigen::Index>(std::llround(test_fraction * static_cast<double>(n)));
  const Eigen::Index n_main = n - n_test;
  const Eigen::Index per = n_main / batches;
  const auto p = sorted.features();
  const Eigen::Index last_len = n_main - per * (batches - 1);
  const auto carve = static_cast<Eigen::Index>(
      std::llround(kLastValidationFraction * static_cast<double>(last_len)));
  if (per < p + 1 || carve < 1)
    throw ValidationError("too few rows per interval: need at least p+1 = " +
                          std::to_string(p + 1));

  BatchSeries series;
  series.task = task;
  for (int b = 1; b <= batches; ++b) {
    if (b < batches) {
      series.train.push_back(slice_rows(sorted, 0, per * b));
      const Eigen::Index vend = b + 1 < batches ? per * (b + 1) : n_main;
      series.validation.push_back(slice_rows(sorted, per * b, vend));
    } else {
      series.train.push_back(slice_rows(sorted, 0, n_main));
      series.validation.push_back(slice_rows(sorted, n_main - carve, n_main));
    }
  }
  series.test = slice_rows(sorted, n_main, n);
  series.bounds = feature_bounds(series.train.back());
  return series;
}

struct LinearSeries {
  BatchSeries series;
  std::vector<Eigen::VectorXd> true_coefficients;  // one per batch
};

namespace detail {

inline void check_sizes(int n, int p, int batches) {
  if (p < 1) throw ValidationError("feature count must be positive");
  if (batches < 2) throw ValidationError("batch count must be at least 2");
  if (n < p + 1) throw ValidationError("rows per batch must be at least p+1");
}

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace detail

/// Linear-regression stream: interval b has n fresh rows with
/// y = x·β*_b + N(0, noise²), β*_1 ~ N(0, I), β*_{b+1} = β*_b + N(0, drift²·I).
/// A test interval of n rows follows interval B, drawn with β*_B.
inline LinearSeries gen_linear(int n, int p, double noise_sd, int batches, std::uint64_t seed,
                               double drift_sd = 0.0) {
  detail::check_sizes(n, p, batches);
  if (noise_sd < 0.0 || drift_sd < 0.0) throw ValidationError("standard deviations must be >= 0");
  Rng rng(seed);
  LinearSeries out;
  Eigen::VectorXd beta(p);
  for (int j = 0; j < p; ++j) beta(j) = rng.normal();

  const int intervals = batches + 1;
  Dataset all;
  all.x.resize(static_cast<Eigen::Index>(n) * intervals, p);
  all.y.resize(all.x.rows());
  all.t.resize(all.x.rows());
  for (int b = 0; b < intervals; ++b) {
    if (b > 0 && b < batches)
      for (int j = 0; j < p; ++j) beta(j) += drift_sd * rng.normal();
    if (b < batches) out.true_coefficients.push_back(beta);
    for (int i = 0; i < n; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(b) * n + i;
      for (int j = 0; j < p; ++j) all.x(r, j) = rng.normal();
      all.y(r) = all.x.row(r).dot(beta) + noise_sd * rng.normal();
      all.t(r) = b + (i + 0.5) / n;
    }
  }
  out.series = split_batches(all, batches, 1.0 / intervals, Task::regression);
  return out;
}

/// Logistic stream: y ~ Bernoulli(σ(x·β*_b)) with β*_1 = separation · u for a
/// random unit vector u, drifting like gen_linear. Separation 0 makes labels
/// independent of the features.
inline BatchSeries gen_classification(int n, int p, int batches, std::uint64_t seed,
                                      double separation, double drift_sd = 0.0) {
  detail::check_sizes(n, p, batches);
  if (separation < 0.0 || drift_sd < 0.0) throw ValidationError("separation/drift must be >= 0");
  Rng rng(seed);
  Eigen::VectorXd beta(p);
  for (int j = 0; j < p; ++j) beta(j) = rng.normal();
  beta *= separation / beta.norm();

  const int intervals = batches + 1;
  Dataset all;
  all.x.resize(static_cast<Eigen::Index>(n) * intervals, p);
  all.y.resize(all.x.rows());
  all.t.resize(all.x.rows());
  for (int b = 0; b < intervals; ++b) {
    if (b > 0 && b < batches)
      for (int j = 0; j < p; ++j) beta(j) += drift_sd * rng.normal();
    for (int i = 0; i < n; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(b) * n + i;
      for (int j = 0; j < p; ++j) all.x(r, j) = rng.normal();
      all.y(r) = rng.bernoulli(detail::sigmoid(all.x.row(r).dot(beta))) ? 1.0 : 0.0;
      all.t(r) = b + (i + 0.5) / n;
    }
  }
  return split_batches(all, batches, 1.0 / intervals, Task::classification);
}

// ---------------------------------------------------------------------------
// CSV: header f0..f{p-1},y,t

inline std::string dataset_csv(const Dataset& d) {
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index j = 0; j < d.features(); ++j) out << 'f' << j << ',';
  out << "y,t\n";
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.features(); ++j) out << d.x(i, j) << ',';
    out << d.y(i) << ',' << d.t(i) << '\n';
  }
  return out.str();
}

inline Dataset parse_dataset_csv(std::istream& in, const std::string& name = "dataset") {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(name + ": empty file");
  std::size_t columns = 1 + static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (columns < 3) throw ParseError(name + ": header needs f0..,y,t");
  const std::size_t p = columns - 2;
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(name + ": row " + std::to_string(rows + 1) + " column " +
                         std::to_string(k) + " is not a number");
      }
      ++k;
    }
    if (k != columns)
      throw ParseError(name + ": row " + std::to_string(rows + 1) + " has " + std::to_string(k) +
                       " cells, expected " + std::to_string(columns));
    ++rows;
  }
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
  d.y.resize(static_cast<Eigen::Index>(rows));
  d.t.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = values.data() + i * columns;
    for (std::size_t j = 0; j < p; ++j)
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    d.y(static_cast<Eigen::Index>(i)) = row[p];
    d.t(static_cast<Eigen::Index>(i)) = row[p + 1];
  }
  d.validate();
  return d;
}

inline Dataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return parse_dataset_csv(in, path.string());
}

}  // namespace stableseq
