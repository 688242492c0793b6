#include <gtest/gtest.h>

#include <limits>

#include "support.hpp"

using namespace stableseq;
using namespace testing_support;

namespace {

Instance fixed_instance(const std::vector<std::vector<double>>& losses,
                        const std::vector<std::vector<std::vector<double>>>& weights) {
  Instance inst;
  for (std::size_t b = 0; b < losses.size(); ++b) {
    CandidatePool pool;
    pool.batch = static_cast<int>(b + 1);
    pool.feature_count = 1;
    pool.feature_bounds = unit_bounds(1);
    for (std::size_t i = 0; i < losses[b].size(); ++i)
      pool.models.push_back(linear_model(candidate_id(pool.batch, static_cast<int>(i)), {0.0}, losses[b][i]));
    inst.pools.push_back(pool);
  }
  for (std::size_t b = 0; b < weights.size(); ++b) {
    DistanceMatrix m;
    for (const auto& x : inst.pools[b].models) m.row_ids.push_back(x.id);
    for (const auto& x : inst.pools[b + 1].models) m.col_ids.push_back(x.id);
    m.values.resize(static_cast<Eigen::Index>(weights[b].size()), static_cast<Eigen::Index>(weights[b][0].size()));
    for (std::size_t j = 0; j < weights[b].size(); ++j)
      for (std::size_t k = 0; k < weights[b][j].size(); ++k) m.values(j, k) = weights[b][j][k];
    inst.matrices.push_back(m);
  }
  return inst;
}

SelectOptions with_alpha(double alpha) {
  SelectOptions o;
  o.alpha = alpha;
  return o;
}

}  // namespace

TEST(Filter, HandThreshold) {
  const std::vector<double> losses{0.10, 0.101, 0.12};
  EXPECT_EQ(filter_losses(losses, 0.02), (std::vector<std::size_t>{0, 1}));
}

TEST(Filter, ZeroAlphaKeepsOnlyTies) {
  const std::vector<double> losses{0.3, 0.2, 0.2, 0.25};
  EXPECT_EQ(filter_losses(losses, 0.0), (std::vector<std::size_t>{1, 2}));
}

TEST(Filter, InfiniteAlphaKeepsAll) {
  const std::vector<double> losses{3.0, 1.0, 2.0};
  EXPECT_EQ(filter_losses(losses, std::numeric_limits<double>::infinity()).size(), 3u);
}

TEST(Filter, ScoresKeepNearMaximum) {
  const std::vector<double> auc{0.80, 0.795, 0.78};
  EXPECT_EQ(filter_scores(auc, 0.01), (std::vector<std::size_t>{0, 1}));
}

TEST(Graph, EdgeCounts) {
  const Instance inst = fixed_instance({{1, 1, 5}, {1, 1, 1}}, {{{0, 1, 2}, {1, 0, 1}, {2, 2, 2}}});
  const LayeredGraph g = build_graph(inst.pools, inst.matrices, with_alpha(0.0));
  EXPECT_EQ(g.source_edges(), 2u);
  EXPECT_EQ(g.sink_edges(), 3u);
  EXPECT_EQ(g.middle_edges(), 6u);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(g.weights[0](j, k), inst.matrices[0](g.layers[0][j], g.layers[1][k]));

  SelectOptions anchored = with_alpha(0.0);
  anchored.anchor = "b1-m1";
  EXPECT_EQ(build_graph(inst.pools, inst.matrices, anchored).source_edges(), 1u);
}

TEST(Graph, AnchorMustSurviveUnlessForced) {
  const Instance inst = fixed_instance({{1, 5}, {1, 1}}, {{{0, 1}, {1, 0}}});
  SelectOptions o = with_alpha(0.1);
  o.anchor = "b1-m1";
  EXPECT_THROW(build_graph(inst.pools, inst.matrices, o), InfeasibleError);
  o.force_anchor = true;
  EXPECT_EQ(select_sequence(inst.pools, inst.matrices, o).ids.front(), "b1-m1");
  o.anchor = "nope";
  EXPECT_THROW(build_graph(inst.pools, inst.matrices, o), ValidationError);
}

TEST(Graph, EmptyLayerNamesTheBatch) {
  const Instance inst = fixed_instance({{1, 2}, {1, 2}}, {{{0, 1}, {1, 0}}});
  SelectOptions o;
  o.epsilon = {5.0, 0.5};
  try {
    build_graph(inst.pools, inst.matrices, o);
    FAIL();
  } catch (const InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("batch 2"), std::string::npos) << e.what();
  }
}

TEST(Solve, BeatsLocallyGreedyChoice) {
  // From b1-m0 the cheap first hop leads into an expensive second hop.
  const Instance inst = fixed_instance({{1, 1}, {1, 1}, {1, 1}},
                                       {{{0, 2}, {3, 3}}, {{9, 9}, {0, 9}}});
  const SequencePlan dp = select_sequence(inst.pools, inst.matrices, with_alpha(0.0));
  EXPECT_EQ(dp.stability_loss, 2.0);
  EXPECT_EQ(dp.ids, (std::vector<std::string>{"b1-m0", "b2-m1", "b3-m0"}));
  const SequencePlan bf = brute_force_sequence(inst.pools, inst.matrices, with_alpha(0.0));
  EXPECT_EQ(bf.ids, dp.ids);
}

TEST(Solve, AllEqualWeightsPickSmallestIds) {
  const Instance inst = fixed_instance({{1, 1, 1}, {1, 1}, {1, 1, 1}},
                                       {{{1, 1}, {1, 1}, {1, 1}}, {{1, 1, 1}, {1, 1, 1}}});
  const SequencePlan dp = select_sequence(inst.pools, inst.matrices, with_alpha(0.0));
  EXPECT_EQ(dp.ids, (std::vector<std::string>{"b1-m0", "b2-m0", "b3-m0"}));
  EXPECT_FALSE(dp.tie_breaks.empty());
}

TEST(Solve, SingleSurvivorsForceThePath) {
  const Instance inst = fixed_instance({{2, 1}, {1, 3}, {4, 2}}, {{{0, 0}, {7, 0}}, {{0, 5}, {0, 0}}});
  const SequencePlan dp = select_sequence(inst.pools, inst.matrices, with_alpha(0.0));
  EXPECT_EQ(dp.ids, (std::vector<std::string>{"b1-m1", "b2-m0", "b3-m1"}));
  EXPECT_EQ(dp.stability_loss, 12.0);
}

TEST(Solve, TieRuleUsesStringOrder) {
  // "b1-m10" sorts before "b1-m2"
  Instance inst = fixed_instance({{1, 1}, {1}}, {{{1}, {1}}});
  inst.pools[0].models[0].id = "b1-m2";
  inst.pools[0].models[1].id = "b1-m10";
  inst.matrices[0].row_ids = {"b1-m2", "b1-m10"};
  EXPECT_EQ(select_sequence(inst.pools, inst.matrices, with_alpha(0.0)).ids.front(), "b1-m10");
}

TEST(BruteForce, UnfilteredTwoByTwoByTwo) {
  const Instance inst = fixed_instance({{1, 9}, {9, 1}, {1, 9}}, {{{4, 3}, {2, 6}}, {{5, 1}, {2, 7}}});
  const SequencePlan bf =
      brute_force_sequence(inst.pools, inst.matrices, with_alpha(std::numeric_limits<double>::infinity()));
  double best = 1e9;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) best = std::min(best, inst.matrices[0](a, b) + inst.matrices[1](b, c));
  EXPECT_EQ(bf.stability_loss, best);
}

TEST(BruteForce, AnchoredAndTooLarge) {
  Rng rng(1);
  const Instance inst = random_instance(rng, 3, 3, 3);
  SelectOptions o = with_alpha(std::numeric_limits<double>::infinity());
  o.anchor = "b1-m2";
  EXPECT_EQ(brute_force_sequence(inst.pools, inst.matrices, o).ids.front(), "b1-m2");
  EXPECT_THROW(brute_force_sequence(inst.pools, inst.matrices, with_alpha(1e9), 10.0), TooLargeError);
}

TEST(Solve, MatchesBruteForceOnRandomInstances) {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t batches = 2 + rng.index(4);
    const Instance inst = random_instance(rng, batches, 2, 6);
    SelectOptions o = with_alpha(rng.uniform(0.0, 2.0));
    if (trial % 3 == 0) o.source = LossSource::train;
    const SequencePlan dp = select_sequence(inst.pools, inst.matrices, o);
    const SequencePlan bf = brute_force_sequence(inst.pools, inst.matrices, o);
    ASSERT_EQ(dp.stability_loss, bf.stability_loss) << "trial " << trial;
    ASSERT_EQ(dp.ids, bf.ids) << "trial " << trial;
    ASSERT_EQ(dp.stability_loss, recompute_stability(dp, inst.matrices));
  }
}

TEST(Solve, StabilityIsMonotoneInAlpha) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = random_instance(rng, 4, 3, 6, 20, 9);
    double previous = std::numeric_limits<double>::infinity();
    for (double alpha : {0.0, 0.1, 0.3, 0.7, 1.5, 5.0}) {
      const double s = select_sequence(inst.pools, inst.matrices, with_alpha(alpha)).stability_loss;
      EXPECT_LE(s, previous);
      previous = s;
    }
  }
}

TEST(Greedy, DominatingModelsAndStabilityOrder) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = random_instance(rng, 4, 2, 5);
    const SequencePlan greedy = greedy_sequence(inst.pools, inst.matrices);
    for (double alpha : {0.0, 0.5, 2.0}) {
      const SequencePlan svml = select_sequence(inst.pools, inst.matrices, with_alpha(alpha));
      EXPECT_LE(svml.stability_loss, greedy.stability_loss);
      for (std::size_t b = 0; b < svml.length(); ++b) {
        const auto losses = pool_losses(inst.pools[b], LossSource::validation);
        const double best = *std::min_element(losses.begin(), losses.end());
        EXPECT_LE(greedy.batch_losses[b], svml.batch_losses[b]);
        EXPECT_LE(svml.batch_losses[b], (1.0 + alpha) * best);
      }
    }
  }
}

TEST(Plan, JsonCarriesIdsAndLosses) {
  const Instance inst = fixed_instance({{1, 2}, {3, 1}}, {{{0, 1}, {1, 0}}});
  const auto j = plan_to_json(select_sequence(inst.pools, inst.matrices, with_alpha(1.0)));
  EXPECT_EQ(j["ids"].size(), 2u);
  EXPECT_EQ(j["loss_source"], "val");
  EXPECT_TRUE(j.contains("stability_loss"));
}

TEST(Greedy, FollowsTheScoreFilter) {
  Rng rng(12);
  Instance inst = random_instance(rng, 3, 3, 3);
  const std::vector<std::vector<double>> aucs{{0.7, 0.9, 0.9}, {0.8, 0.6, 0.5}, {0.5, 0.5, 0.95}};
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t i = 0; i < 3; ++i) inst.pools[b].models[i].metadata["val_auc"] = aucs[b][i];
  SelectOptions o;
  o.score_key = "val_auc";
  const SequencePlan g = greedy_sequence(inst.pools, inst.matrices, o);
  EXPECT_EQ(g.ids, (std::vector<std::string>{"b1-m1", "b2-m0", "b3-m2"}));
  const SequencePlan s = select_sequence(inst.pools, inst.matrices, o);
  EXPECT_TRUE(s.ids[0] == "b1-m1" || s.ids[0] == "b1-m2") << s.ids[0];
  EXPECT_EQ(s.ids[1], "b2-m0");
  EXPECT_EQ(s.ids[2], "b3-m2");

  inst.pools[1].models[2].metadata.erase("val_auc");
  EXPECT_THROW(greedy_sequence(inst.pools, inst.matrices, o), ValidationError);
}
