#include <gtest/gtest.h>

#include "support.hpp"

using namespace stableseq;
using namespace testing_support;

namespace {

DistanceSpec metric() {
  DistanceSpec s;
  s.squared = false;
  return s;
}

}  // namespace

TEST(Extend, OneToTwoStartsAtAnchor) {
  Rng rng(1);
  const Instance inst = random_linear_instance(rng, 2, 4, 3, metric());
  SelectOptions o;
  o.alpha = 0.5;
  o.force_anchor = true;
  const SequencePlan plan = extend_sequence(inst.pools, inst.matrices, o, std::string("b1-m3"));
  ASSERT_EQ(plan.length(), 2u);
  EXPECT_EQ(plan.ids.front(), "b1-m3");
}

TEST(Extend, UnanchoredEqualsPlainSolve) {
  Rng rng(2);
  const Instance inst = random_instance(rng, 4, 2, 5);
  SelectOptions o;
  o.alpha = 0.7;
  EXPECT_EQ(extend_sequence(inst.pools, inst.matrices, o, std::nullopt).ids,
            select_sequence(inst.pools, inst.matrices, o).ids);
}

TEST(Extend, AnchorNeverImprovesStability) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Instance inst = random_instance(rng, 3, 2, 5);
    SelectOptions o;
    o.alpha = 0.5;
    const double free = select_sequence(inst.pools, inst.matrices, o).stability_loss;
    for (std::size_t i : filter_pool(inst.pools[0], o.alpha))
      EXPECT_GE(extend_sequence(inst.pools, inst.matrices, o, inst.pools[0].models[i].id).stability_loss, free);
  }
}

TEST(Extend, FailingAnchorNeedsForce) {
  Rng rng(12);
  Instance inst = random_instance(rng, 3, 3, 3);
  inst.pools[0].models[0].val_loss = 1.0;
  inst.pools[0].models[1].val_loss = 50.0;
  SelectOptions o;
  o.alpha = 0.1;
  EXPECT_THROW(extend_sequence(inst.pools, inst.matrices, o, std::string("b1-m1")), InfeasibleError);
  o.force_anchor = true;
  EXPECT_EQ(extend_sequence(inst.pools, inst.matrices, o, std::string("b1-m1")).ids.front(), "b1-m1");
}

TEST(Extend, MissingAnchorThrows) {
  Rng rng(4);
  const Instance inst = random_instance(rng, 2, 2, 3);
  EXPECT_THROW(extend_sequence(inst.pools, inst.matrices, SelectOptions{}, std::string("zzz")), ValidationError);
}

TEST(Extend, DuplicatedBatchKeepsThePrefix) {
  Rng rng(5);
  const Instance inst = random_linear_instance(rng, 4, 5, 3, metric());
  std::vector<CandidatePool> pools = inst.pools;
  CandidatePool copy = pools.back();
  copy.batch = 5;
  for (auto& m : copy.models) m.id = "dup-" + m.id;
  pools.push_back(copy);
  std::vector<DistanceMatrix> matrices = inst.matrices;
  matrices.push_back(distance_matrix(pools[3], pools[4], metric()));
  SelectOptions o;
  o.alpha = 0.2;
  o.force_anchor = true;
  const auto anchor = std::optional<std::string>("b1-m0");
  const SequencePlan old_plan =
      extend_sequence(std::span<const CandidatePool>(pools).first(4), std::span<const DistanceMatrix>(matrices).first(3), o, anchor);
  const SequencePlan new_plan = extend_sequence(pools, matrices, o, anchor);
  std::size_t overlap = 0;
  while (overlap < 4 && old_plan.ids[overlap] == new_plan.ids[overlap]) ++overlap;
  EXPECT_GE(overlap, 3u);
  EXPECT_EQ(new_plan.stability_loss, old_plan.stability_loss);
}

TEST(InterLoss, DelegatesToTheFinalModels) {
  Rng rng(6);
  const Instance inst = random_linear_instance(rng, 3, 3, 2, metric());
  SelectOptions o;
  o.alpha = 1.0;
  const SequencePlan long_plan = select_sequence(inst.pools, inst.matrices, o);
  const auto two = std::span<const CandidatePool>(inst.pools).first(2);
  const SequencePlan short_plan = select_sequence(two, std::span<const DistanceMatrix>(inst.matrices).first(1), o);
  const double d = inter_sequence_loss(short_plan, inst.pools, long_plan, inst.pools, metric());
  EXPECT_EQ(d, model_distance(inst.pools[1].models[short_plan.indices.back()],
                              inst.pools[2].models[long_plan.indices.back()], metric(), inst.pools[2].feature_bounds));
  EXPECT_EQ(inter_sequence_loss(long_plan, inst.pools, long_plan, inst.pools, metric()), 0.0);
}

TEST(InterLoss, IncompatibleModelsThrow) {
  Rng rng(7);
  Instance a = random_linear_instance(rng, 2, 2, 2, metric());
  Instance b = a;
  for (auto& m : b.pools[1].models) m.representation = stump(0, 1.0);
  const SequencePlan pa = make_plan(a.pools, a.matrices, {0, 0}, 0.0, LossSource::validation);
  EXPECT_THROW(inter_sequence_loss(pa, a.pools, pa, b.pools, metric()), ValidationError);
}

TEST(BoundCheck, HoldsForAnchoredRandomPairs) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t batches = 2 + rng.index(4);
    const Instance inst = random_linear_instance(rng, batches + 1, 2 + rng.index(5), 3, metric());
    SelectOptions o;
    o.alpha = rng.uniform(0.0, 0.5);
    o.force_anchor = true;
    const std::string anchor = inst.pools[0].models[rng.index(inst.pools[0].size())].id;
    const auto pools = std::span<const CandidatePool>(inst.pools);
    const auto mats = std::span<const DistanceMatrix>(inst.matrices);
    const SequencePlan a = extend_sequence(pools.first(batches), mats.first(batches - 1), o, anchor);
    const SequencePlan b = extend_sequence(pools, mats, o, anchor);
    const BoundCheck c = stability_bound_check(a, inst.pools, b, inst.pools, metric());
    ASSERT_TRUE(c.holds) << "trial " << trial << ": " << c.lhs << " > " << c.rhs;
  }
}

TEST(BoundCheck, SelfComparisonAndRejections) {
  Rng rng(9);
  const Instance inst = random_linear_instance(rng, 3, 3, 2, metric());
  SelectOptions forced;
  forced.force_anchor = true;
  const SequencePlan p = extend_sequence(inst.pools, inst.matrices, forced, std::string("b1-m1"));
  const BoundCheck self = stability_bound_check(p, inst.pools, p, inst.pools, metric());
  EXPECT_EQ(self.lhs, 0.0);
  EXPECT_TRUE(self.holds);
  EXPECT_THROW(stability_bound_check(p, inst.pools, p, inst.pools, DistanceSpec{}), ValidationError);
  const SequencePlan q = extend_sequence(inst.pools, inst.matrices, forced, std::string("b1-m2"));
  EXPECT_THROW(stability_bound_check(p, inst.pools, q, inst.pools, metric()), ValidationError);
}

TEST(Family, TransitionsAndAnchors) {
  Rng rng(10);
  const Instance inst = random_linear_instance(rng, 6, 4, 3, DistanceSpec{});
  SelectOptions o;
  o.alpha = 0.3;
  o.force_anchor = true;
  for (auto strategy : {AdaptStrategy::svml, AdaptStrategy::greedy, AdaptStrategy::greedy_adapt}) {
    const SequenceFamily f = build_family(inst.pools, inst.matrices, o, strategy, DistanceSpec{}, std::string("b1-m2"));
    ASSERT_EQ(f.plans.size(), 6u);
    ASSERT_EQ(f.inter_losses.size(), 5u);
    for (std::size_t k = 0; k < 6; ++k) {
      EXPECT_EQ(f.plans[k].length(), k + 1);
      EXPECT_EQ(f.plans[k].ids.front(), "b1-m2");
    }
    for (std::size_t k = 0; k < 5; ++k)
      EXPECT_EQ(f.inter_losses[k], inter_sequence_loss(f.plans[k], inst.pools, f.plans[k + 1], inst.pools, DistanceSpec{}));
  }
  const std::string csv = family_table_csv(
      {build_family(inst.pools, inst.matrices, o, AdaptStrategy::greedy, DistanceSpec{}, std::nullopt),
       build_family(inst.pools, inst.matrices, o, AdaptStrategy::svml, DistanceSpec{}, std::nullopt)});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,T_1-2,T_2-3,T_3-4,T_4-5,T_5-6,mean");
  EXPECT_NE(csv.find("\nSVML,"), std::string::npos);
}

TEST(Family, GreedyAdaptTracksThePreviousModel) {
  Rng rng(11);
  const Instance inst = random_linear_instance(rng, 4, 5, 2, DistanceSpec{});
  SelectOptions o;
  o.alpha = 10.0;  // everything admissible
  const SequenceFamily f = build_family(inst.pools, inst.matrices, o, AdaptStrategy::greedy_adapt, DistanceSpec{}, std::nullopt);
  for (std::size_t k = 1; k < 4; ++k) {
    const std::size_t prev = f.plans[k - 1].indices.back();
    const std::size_t chosen = f.plans[k].indices.back();
    for (std::size_t j = 0; j < inst.pools[k].size(); ++j) EXPECT_LE(inst.matrices[k - 1](prev, chosen), inst.matrices[k - 1](prev, j));
  }
}
