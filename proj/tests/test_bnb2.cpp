#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracle.hpp"
#include "shallowtree/bnb2.hpp"
#include "shallowtree/synthetic.hpp"

using namespace shallowtree;

namespace {

Dataset toy6() {
  return load_csv(std::string(SHALLOWTREE_TEST_DATA) + "/toy6.csv", CsvSchema{Task::kClassification, {"label"}});
}

using Features = std::vector<std::size_t>;

}  // namespace

TEST(InitAlive, OneBoxPerFeature) {
  auto ds = toy6();
  auto fi = build_feature_index(ds);
  auto al = init_alive(ds, fi);
  ASSERT_EQ(al.boxes.size(), 3u);
  const std::uint32_t u[] = {5, 6, 3};
  for (std::size_t f = 0; f < 3; ++f) {
    EXPECT_EQ(al.boxes[f].f0, f);
    EXPECT_EQ(al.boxes[f].a, 0u);
    EXPECT_EQ(al.boxes[f].b, u[f]);
    EXPECT_EQ(al.boxes[f].F1, (Features{0, 1, 2}));
    EXPECT_EQ(al.boxes[f].F2, (Features{0, 1, 2}));
  }
  auto one = Dataset::classification({{7}, {7}}, std::vector<int>{0, 1});
  auto al1 = init_alive(one, build_feature_index(one));
  ASSERT_EQ(al1.boxes.size(), 1u);
  EXPECT_EQ(al1.boxes[0].b, 1u);
}

TEST(ProcessBox, ToyIteration) {
  auto ds = toy6();
  auto fi = build_feature_index(ds);
  BoundEngine<MisclassificationLoss> eng(ds, fi);
  SolveOptions opts;
  opts.s = 2;
  opts.bound = BoundKind::kW0;
  auto out = process_box(eng, SearchBox{0, 1, 4, {1, 2}, {1, 2}, 0.0}, 2.0, opts);
  ASSERT_TRUE(out.improved.has_value());
  EXPECT_EQ(out.improved->first, 1.0);
  EXPECT_EQ(evaluate(out.improved->second, ds), 1.0);
  ASSERT_EQ(out.children.size(), 2u);
  EXPECT_EQ(out.children[0].a, 1u);
  EXPECT_EQ(out.children[0].b, 2u);
  EXPECT_EQ(out.children[0].F1, (Features{1, 2}));
  EXPECT_EQ(out.children[0].F2, (Features{1}));
  EXPECT_EQ(out.children[1].a, 2u);
  EXPECT_EQ(out.children[1].b, 4u);
  EXPECT_EQ(out.children[1].F1, (Features{1, 2}));
  EXPECT_EQ(out.children[1].F2, (Features{1, 2}));
}

TEST(ProcessBox, FullPrune) {
  auto ds = toy6();
  auto fi = build_feature_index(ds);
  BoundEngine<MisclassificationLoss> eng(ds, fi);
  SolveOptions opts;
  opts.s = 2;
  auto out = process_box(eng, SearchBox{0, 1, 4, {1, 2}, {1, 2}, 0.0}, -1.0, opts);
  EXPECT_TRUE(out.children.empty());
  EXPECT_EQ(out.pruned, 2u);
}

TEST(ProcessBox, TighterBoundKeepsSubset) {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 60; ++trial) {
    auto ds = gen::classification(rng, 20 + rng() % 20, 3, 2);
    auto fi = build_feature_index(ds);
    if (fi.u(0) < 4) continue;
    BoundEngine<MisclassificationLoss> eng(ds, fi);
    const SearchBox box{0, 0, fi.u(0), {0, 1, 2}, {0, 1, 2}, 0.0};
    const double U = brute_force(ds, 2).objective;
    SolveOptions w0, l2;
    w0.s = l2.s = 3;
    w0.bound = BoundKind::kW0;
    l2.bound = BoundKind::kL2;
    auto a = process_box(eng, box, U, w0);
    auto b = process_box(eng, box, U, l2);
    for (const auto& kb : b.children) {
      auto it = std::find_if(a.children.begin(), a.children.end(),
                             [&](const SearchBox& ka) { return ka.a == kb.a && ka.b == kb.b; });
      ASSERT_NE(it, a.children.end());
      for (auto f : kb.F1) EXPECT_NE(std::find(it->F1.begin(), it->F1.end(), f), it->F1.end());
      for (auto f : kb.F2) EXPECT_NE(std::find(it->F2.begin(), it->F2.end(), f), it->F2.end());
    }
  }
}

TEST(SolveDepth2, ToyOptimum) {
  auto ds = toy6();
  auto r = solve_depth2(ds);
  EXPECT_EQ(r.status, SolveStatus::kOptimal);
  EXPECT_EQ(r.objective, 1.0);
  EXPECT_EQ(r.lower_bound, 1.0);
  EXPECT_EQ(evaluate(r.tree, ds), 1.0);
}

TEST(SolveDepth2, SeparableGivesZero) {
  auto ds = Dataset::classification({{1, 1}, {2, 2}, {3, 3}, {4, 4}}, std::vector<int>{0, 0, 1, 1});
  EXPECT_EQ(solve_depth2(ds).objective, 0.0);
}

TEST(SolveDepth2, RegressionMatchesOracle) {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 5; ++trial) {
    auto ds = gen::regression(rng, 50, 3, 1);
    auto r = solve_depth2(ds);
    EXPECT_TRUE(gen::close(r.objective, naive::optimum(ds, 2), false));
    EXPECT_TRUE(gen::close(evaluate(r.tree, ds), r.objective, false));
  }
}

TEST(SolveDepth2, AllBoundsAgreeWithOracle) {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 40; ++trial) {
    auto ds = gen::any(rng, 1 + rng() % 40, 1 + rng() % 4);
    const bool exact = ds.is_classification();
    const double want = naive::optimum(ds, 2);
    for (auto kind : {BoundKind::kW0, BoundKind::kW1, BoundKind::kW2, BoundKind::kL2}) {
      for (std::uint32_t s : {2u, 3u}) {
        SolveOptions opts;
        opts.bound = kind;
        opts.s = s;
        auto r = solve_depth2(ds, opts);
        EXPECT_TRUE(gen::close(r.objective, want, exact)) << to_string(kind) << " s=" << s;
        int limit = 1;
        for (std::size_t reach = s; reach < ds.n(); reach *= s) ++limit;
        EXPECT_LE(r.iterations, limit);
      }
    }
  }
}

TEST(SolveDepth2, ZeroTimeLimitReportsIncumbent) {
  auto ds = make_synthetic(3000, 5, Task::kClassification, 1);
  SolveOptions opts;
  opts.time_limit = 0.0;
  auto r = solve_depth2(ds, opts);
  EXPECT_EQ(r.status, SolveStatus::kTimeLimit);
  EXPECT_EQ(r.objective, greedy_tree(ds, 2).loss);
  EXPECT_EQ(evaluate(r.tree, ds), r.objective);
  EXPECT_LE(r.lower_bound, r.objective);
  EXPECT_GE(r.lower_bound, 0.0);
}

TEST(SolveDepth2, WorkersGiveSameObjective) {
  auto ds = make_synthetic(1500, 4, Task::kClassification, 2);
  SolveOptions one, many;
  many.workers = 4;
  auto a = solve_depth2(ds, one);
  auto b = solve_depth2(ds, many);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(b.status, SolveStatus::kOptimal);
  EXPECT_EQ(evaluate(b.tree, ds), b.objective);
}

TEST(SolveDepth2, SingleWorkerIsDeterministic) {
  auto ds = make_synthetic(800, 3, Task::kRegression, 3);
  auto a = solve_depth2(ds);
  auto b = solve_depth2(ds);
  EXPECT_EQ(a.tree, b.tree);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ(a.boxes_explored, b.boxes_explored);
}

TEST(SolveDepth2, RejectsSmallS) {
  SolveOptions opts;
  opts.s = 1;
  EXPECT_THROW(solve_depth2(toy6(), opts), ContractViolation);
}
