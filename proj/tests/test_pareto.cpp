#include <gtest/gtest.h>

#include <limits>

#include "support.hpp"

using namespace stableseq;
using namespace testing_support;

TEST(Sweep, SortsGridAndFlagsDuplicates) {
  Rng rng(1);
  const Instance inst = random_instance(rng, 3, 3, 4);
  const auto points = sweep(inst.pools, inst.matrices, {1.0, 0.0, 100.0, 50.0});
  ASSERT_EQ(points.size(), 4u);
  EXPECT_EQ(points[0].alpha, 0.0);
  EXPECT_EQ(points[3].alpha, 100.0);
  ASSERT_TRUE(points[3].duplicate_of.has_value());  // nothing is filtered at either 50 or 100
  EXPECT_EQ(*points[3].duplicate_of, 2u);
  for (std::size_t i = 1; i < points.size(); ++i) EXPECT_LE(points[i].stability_loss, points[i - 1].stability_loss);
  EXPECT_THROW(sweep(inst.pools, inst.matrices, {}), ValidationError);
}

TEST(Wpo, SolverOutputsPass) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance inst = random_instance(rng, 2 + rng.index(3), 2, 5);
    SelectOptions o;
    o.alpha = rng.uniform(0.0, 1.5);
    const SequencePlan plan = select_sequence(inst.pools, inst.matrices, o);
    const auto check = check_wpo(plan, inst.pools, inst.matrices);
    ASSERT_TRUE(check.holds) << "trial " << trial << ": " << check.detail;
  }
}

TEST(Wpo, DetectsStrictlyDominatedPlan) {
  Instance inst;
  for (int b = 1; b <= 2; ++b) {
    CandidatePool pool;
    pool.batch = b;
    pool.feature_count = 1;
    pool.feature_bounds = unit_bounds(1);
    pool.models = {linear_model(candidate_id(b, 0), {0.0}, 1.0), linear_model(candidate_id(b, 1), {0.0}, 2.0)};
    inst.pools.push_back(pool);
  }
  DistanceMatrix m;
  m.row_ids = {"b1-m0", "b1-m1"};
  m.col_ids = {"b2-m0", "b2-m1"};
  m.values.resize(2, 2);
  m.values << 0, 5, 5, 3;
  inst.matrices.push_back(m);
  const SequencePlan bad = make_plan(inst.pools, inst.matrices, {1, 1}, 0.0, LossSource::validation);
  const auto check = check_wpo(bad, inst.pools, inst.matrices);
  EXPECT_FALSE(check.holds);
  ASSERT_TRUE(check.certificate.has_value());
  EXPECT_EQ(check.certificate->ids, (std::vector<std::string>{"b1-m0", "b2-m0"}));
}

TEST(Po, ComplementaryCriterionAgreesWithDirectScan) {
  Rng rng(3);
  int po = 0, not_po = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const Instance inst = random_instance(rng, 2 + rng.index(2), 2, 4);
    std::vector<std::size_t> seq;
    for (const auto& pool : inst.pools) seq.push_back(rng.index(pool.size()));
    const SequencePlan plan = make_plan(inst.pools, inst.matrices, seq, 0.0, LossSource::validation);
    const bool a = verify_po(plan, inst.pools, inst.matrices).holds;
    const bool b = check_po_direct(plan, inst.pools, inst.matrices).holds;
    ASSERT_EQ(a, b) << "trial " << trial;
    (a ? po : not_po)++;
  }
  EXPECT_GT(po, 5);
  EXPECT_GT(not_po, 5);
}

TEST(Frontier, CsvColumnsAndGap) {
  const LinearSeries g = gen_linear(40, 3, 0.3, 3, 4, 0.2);
  std::vector<CandidatePool> pools;
  PoolConfig cfg = PoolConfig::defaults(Family::ridge);
  cfg.candidates = 5;
  for (int b = 0; b < 3; ++b)
    pools.push_back(bootstrap_pool(g.series.train[b], g.series.validation[b], b + 1, g.series.bounds, cfg,
                                   Rng::derive(7, b)));
  std::vector<DistanceMatrix> matrices;
  for (int b = 0; b < 2; ++b) matrices.push_back(distance_matrix(pools[b], pools[b + 1], DistanceSpec{}));
  const auto points = sweep(pools, matrices, {0.1, 0.01});
  const auto rows = frontier_report(points, pools, g.series.test, LossKind::mse);
  ASSERT_EQ(rows.size(), 2u);
  double in = 0.0;
  for (std::size_t b = 0; b < 3; ++b) in += pools[b].models[points[0].plan.indices[b]].train_loss;
  EXPECT_DOUBLE_EQ(rows[0].in_sample_loss, in);
  EXPECT_DOUBLE_EQ(rows[0].gap(), rows[0].out_of_sample_loss - rows[0].in_sample_loss);
  const std::string csv = frontier_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "curve,alpha,in_sample_loss,out_of_sample_loss,stability_loss,gap");
}

TEST(Sweep, BoundaryTolerances) {
  Rng rng(9);
  const Instance inst = random_instance(rng, 3, 2, 4);
  const auto zero = sweep(inst.pools, inst.matrices, {0.0});
  SelectOptions o;
  const SequencePlan bf = brute_force_sequence(inst.pools, inst.matrices, o);
  EXPECT_EQ(zero[0].stability_loss, bf.stability_loss);

  const auto huge = sweep(inst.pools, inst.matrices, {1e12});
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<std::size_t>> all;
  for (const auto& pool : inst.pools) {
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    all.push_back(idx);
  }
  for_each_sequence(all, [&](const std::vector<std::size_t>& seq) {
    double c = 0.0;
    for (std::size_t b = 0; b + 1 < seq.size(); ++b) c += inst.matrices[b](seq[b], seq[b + 1]);
    best = std::min(best, c);
  });
  EXPECT_EQ(huge[0].stability_loss, best);
}

TEST(Po, TiedOptimaLoserFails) {
  Instance inst;
  const std::vector<std::vector<double>> losses{{1.0}, {2.0, 1.0}};
  for (int b = 1; b <= 2; ++b) {
    CandidatePool pool;
    pool.batch = b;
    pool.feature_count = 1;
    pool.feature_bounds = unit_bounds(1);
    for (std::size_t i = 0; i < losses[b - 1].size(); ++i)
      pool.models.push_back(linear_model(candidate_id(b, static_cast<int>(i)), {0.0}, losses[b - 1][i]));
    inst.pools.push_back(pool);
  }
  DistanceMatrix m;
  m.row_ids = {"b1-m0"};
  m.col_ids = {"b2-m0", "b2-m1"};
  m.values.resize(1, 2);
  m.values << 3, 3;
  inst.matrices.push_back(m);
  // At alpha = 1 both sequences survive with equal stability; the id tie rule picks the loser.
  SelectOptions o;
  o.alpha = 1.0;
  const SequencePlan plan = select_sequence(inst.pools, inst.matrices, o);
  ASSERT_EQ(plan.ids.back(), "b2-m0");
  EXPECT_TRUE(check_wpo(plan, inst.pools, inst.matrices).holds);
  const auto po = verify_po(plan, inst.pools, inst.matrices);
  EXPECT_FALSE(po.holds);
  ASSERT_TRUE(po.certificate.has_value());
  EXPECT_EQ(po.certificate->ids.back(), "b2-m1");
  EXPECT_FALSE(check_po_direct(plan, inst.pools, inst.matrices).holds);
  const SequencePlan winner = make_plan(inst.pools, inst.matrices, {0, 1}, 1.0, LossSource::validation);
  EXPECT_TRUE(verify_po(winner, inst.pools, inst.matrices).holds);
}

TEST(Po, SingleModelPoolsAreOptimal) {
  Rng rng(10);
  const Instance inst = random_instance(rng, 3, 1, 1);
  const SequencePlan plan = select_sequence(inst.pools, inst.matrices, SelectOptions{});
  EXPECT_TRUE(check_wpo(plan, inst.pools, inst.matrices).holds);
  EXPECT_TRUE(verify_po(plan, inst.pools, inst.matrices).holds);
}
