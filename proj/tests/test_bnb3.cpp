#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracle.hpp"
#include "shallowtree/bnb3.hpp"

using namespace shallowtree;

namespace {

Dataset toy6() {
  return load_csv(std::string(SHALLOWTREE_TEST_DATA) + "/toy6.csv", CsvSchema{Task::kClassification, {"label"}});
}

}  // namespace

TEST(InitAlive3, FullGroupsOnEachSide) {
  auto ds = toy6();
  auto fi = build_feature_index(ds);
  auto al = init_alive3(ds, fi);
  ASSERT_EQ(al.tuples.size(), 3u);
  for (const auto& t : al.tuples) {
    ASSERT_EQ(t.phi1.size(), 3u);
    ASSERT_EQ(t.phi2.size(), 3u);
    for (std::size_t g = 0; g < 3; ++g) {
      EXPECT_EQ(t.phi1[g].f, g);
      EXPECT_EQ(t.phi1[g].a, 0u);
      EXPECT_EQ(t.phi1[g].b, fi.u(g));
      EXPECT_EQ(t.phi1[g].count(), 9u);
      EXPECT_EQ(t.phi2[g].count(), 9u);
    }
  }
  std::mt19937_64 rng(1);
  auto wide = gen::classification(rng, 5, 10, 2);
  auto al10 = init_alive3(wide, build_feature_index(wide));
  EXPECT_EQ(al10.tuples.front().phi1.size(), 10u);
  EXPECT_EQ(al10.tuples.front().phi1.front().count(), 100u);
  auto single = Dataset::classification({{1}, {2}}, std::vector<int>{0, 1});
  auto al1 = init_alive3(single, build_feature_index(single));
  ASSERT_EQ(al1.tuples.size(), 1u);
  EXPECT_EQ(al1.tuples[0].phi1.size(), 1u);
  EXPECT_EQ(al1.tuples[0].phi1[0].count(), 1u);
}

TEST(Step1Depth3, ToyUpperBoundHasMatchingWitness) {
  auto ds = toy6();
  auto fi = build_feature_index(ds);
  BoundEngine<MisclassificationLoss> eng(ds, fi);
  auto tup = init_alive3(ds, fi).tuples[0];
  auto [u, tree] = step1_upper_d3(eng, tup, 2);
  EXPECT_LE(u, 1.0);
  EXPECT_EQ(evaluate(tree, ds), u);
  EXPECT_LE(tree.depth(), 3);
}

TEST(Step1Depth3, WitnessMatchesOnRandomData) {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 30; ++trial) {
    auto ds = gen::any(rng, 8 + rng() % 20, 2);
    auto fi = build_feature_index(ds);
    auto tuples = init_alive3(ds, fi).tuples;
    with_loss(ds, [&](auto loss) {
      BoundEngine<decltype(loss)> eng(ds, fi);
      for (const auto& t : tuples) {
        if (t.b0 - t.a0 <= 2) continue;
        auto [u, tree] = step1_upper_d3(eng, t, 2);
        EXPECT_TRUE(gen::close(evaluate(tree, ds), u, ds.is_classification()));
        EXPECT_TRUE(gen::le(naive::optimum(ds, 3), u, ds.is_classification()));
      }
      return 0;
    });
  }
}

TEST(Step2Depth3, FullPruneBelowAnyLoss) {
  auto ds = toy6();
  auto fi = build_feature_index(ds);
  BoundEngine<MisclassificationLoss> eng(ds, fi);
  SolveOptions opts;
  opts.s = 2;
  auto out = step2_prune_d3(eng, init_alive3(ds, fi).tuples[1], -1.0, opts);
  EXPECT_TRUE(out.children.empty());
}

TEST(Step2Depth3, ChildrenRefineParents) {
  std::mt19937_64 rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    auto ds = gen::classification(rng, 15 + rng() % 15, 2, 2);
    auto fi = build_feature_index(ds);
    BoundEngine<MisclassificationLoss> eng(ds, fi);
    SolveOptions opts;
    opts.s = 2;
    const double U = naive::optimum(ds, 3);
    for (const auto& t : init_alive3(ds, fi).tuples) {
      if (t.b0 - t.a0 <= opts.s) continue;
      for (const auto& c : step2_prune_d3(eng, t, U, opts).children) {
        EXPECT_EQ(c.f0, t.f0);
        EXPECT_GE(c.a0, t.a0);
        EXPECT_LE(c.b0, t.b0);
        for (const auto* side : {&c.phi1, &c.phi2}) {
          for (const auto& g : *side) {
            EXPECT_LE(g.b, fi.u(g.f));
            EXPECT_GT(g.count(), 0u);
          }
        }
      }
    }
  }
}

// Runs the level loop by hand and checks that the tuples alive at every level,
// together with those already settled, still contain an optimal tree.
TEST(Step2Depth3, OptimumSurvivesEveryLevel) {
  std::mt19937_64 rng(79);
  for (int trial = 0; trial < 12; ++trial) {
    auto ds = gen::any(rng, 30, 2);
    auto fi = build_feature_index(ds);
    const bool exact = ds.is_classification();
    const double opt = naive::optimum(ds, 3);
    SolveOptions opts;
    opts.s = 2;
    with_loss(ds, [&](auto loss) {
      BoundEngine<decltype(loss)> eng(ds, fi);
      auto alive = init_alive3(ds, fi).tuples;
      double settled = std::numeric_limits<double>::infinity();
      while (!alive.empty()) {
        double best = settled;
        for (const auto& t : alive) best = std::min(best, resolve_tuple(eng, t).first);
        EXPECT_TRUE(gen::close(best, opt, exact)) << "trial " << trial;
        std::vector<D3Tuple> next;
        for (const auto& t : alive) {
          if (t.b0 - t.a0 <= opts.s) {
            settled = std::min(settled, resolve_tuple(eng, t).first);
            continue;
          }
          for (auto& c : step2_prune_d3(eng, t, opt, opts).children) next.push_back(std::move(c));
        }
        alive = std::move(next);
      }
      return 0;
    });
  }
}

TEST(SolveDepth3, ToyOptimum) {
  auto ds = toy6();
  auto r = solve_depth3(ds);
  EXPECT_EQ(r.status, SolveStatus::kOptimal);
  EXPECT_EQ(r.objective, 0.0);
  EXPECT_EQ(evaluate(r.tree, ds), 0.0);
}

TEST(SolveDepth3, BinaryFeatureAddsNothing) {
  auto ds = Dataset::classification({{0}, {0}, {1}, {1}}, std::vector<int>{0, 1, 0, 1});
  EXPECT_EQ(solve_depth3(ds).objective, solve_depth2(ds).objective);
  EXPECT_EQ(solve_depth3(ds).objective, 2.0);
}

TEST(SolveDepth3, MatchesNaiveOracle) {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 12; ++trial) {
    auto ds = gen::any(rng, 5 + rng() % 20, 1 + rng() % 3);
    const bool exact = ds.is_classification();
    const double want = naive::optimum(ds, 3);
    for (auto kind : {BoundKind::kW0, BoundKind::kW1, BoundKind::kW2}) {
      SolveOptions opts;
      opts.bound = kind;
      auto r = solve_depth3(ds, opts);
      EXPECT_TRUE(gen::close(r.objective, want, exact)) << to_string(kind);
      EXPECT_TRUE(gen::close(evaluate(r.tree, ds), r.objective, exact));
    }
  }
}

TEST(SolveDepth3, MemoryCapKeepsOptimum) {
  std::mt19937_64 rng(89);
  for (int trial = 0; trial < 5; ++trial) {
    auto ds = gen::classification(rng, 35, 3, 3);
    SolveOptions capped;
    capped.max_alive = 2;
    EXPECT_EQ(solve_depth3(ds, capped).objective, solve_depth3(ds).objective);
  }
}

TEST(SolveDepth3, WorkersAndTimeLimit) {
  std::mt19937_64 rng(97);
  auto ds = gen::classification(rng, 40, 3, 2);
  SolveOptions many;
  many.workers = 3;
  EXPECT_EQ(solve_depth3(ds, many).objective, solve_depth3(ds).objective);
  SolveOptions stop;
  stop.time_limit = 0.0;
  auto r = solve_depth3(ds, stop);
  EXPECT_EQ(r.status, SolveStatus::kTimeLimit);
  EXPECT_LE(r.lower_bound, r.objective);
  EXPECT_EQ(evaluate(r.tree, ds), r.objective);
}
