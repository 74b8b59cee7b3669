#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "oracle.hpp"
#include "shallowtree/bnb2.hpp"
#include "shallowtree/heuristics.hpp"
#include "shallowtree/tree.hpp"

using namespace shallowtree;

namespace {

Dataset toy6() {
  return load_csv(std::string(SHALLOWTREE_TEST_DATA) + "/toy6.csv", CsvSchema{Task::kClassification, {"label"}});
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Plan random_plan(std::mt19937_64& rng, const FeatureIndex& fi, int depth) {
  if (depth == 0 || rng() % 4 == 0) return Plan::leaf();
  const std::size_t f = rng() % fi.p();
  const auto t = static_cast<std::uint32_t>(rng() % (fi.u(f) + 1));
  return Plan::split(f, t, random_plan(rng, fi, depth - 1), random_plan(rng, fi, depth - 1));
}

}  // namespace

TEST(Predict, ToyOptimalTreeOnFirstSample) {
  auto ds = toy6();
  auto tree = solve_depth2(ds).tree;
  EXPECT_EQ(tree.label_table[static_cast<std::size_t>(predict(tree, ds.row(0)).label)], "1");
}

TEST(Predict, LeafOnlyTreeIsConstant) {
  auto ds = Dataset::regression({{1}, {2}, {3}}, {{1}, {2}, {6}});
  auto fi = build_feature_index(ds);
  auto tree = materialize(Plan::leaf(), ds, fi, all_samples(3));
  for (double x : {-100.0, 0.0, 2.5, 1e9}) EXPECT_EQ(predict(tree, std::vector<double>{x}).value[0], 3.0);
}

TEST(Predict, ThresholdTieGoesLeft) {
  auto ds = Dataset::classification({{1}, {3}}, std::vector<int>{0, 1});
  auto fi = build_feature_index(ds);
  auto tree = materialize(Plan::stump(0, 1), ds, fi, all_samples(2));
  ASSERT_EQ(tree.nodes[0].threshold, 2.0);
  EXPECT_EQ(predict(tree, std::vector<double>{2.0}).label, 0);
  EXPECT_EQ(predict(tree, std::vector<double>{2.0000001}).label, 1);
}

TEST(Predict, DimensionMismatch) {
  auto ds = toy6();
  auto tree = solve_depth2(ds).tree;
  EXPECT_THROW(predict(tree, std::vector<double>{1.0, 2.0}), ContractViolation);
}

TEST(Evaluate, ToyTrees) {
  auto ds = toy6();
  EXPECT_EQ(evaluate(solve_depth2(ds).tree, ds), 1.0);
  EXPECT_EQ(evaluate(greedy_tree(ds, 2).tree, ds), 2.0);
  EXPECT_EQ(evaluate(solve_depth2(ds).tree, ds, IndexSet{}), 0.0);
}

TEST(Evaluate, RejectsIncompatibleData) {
  auto ds = toy6();
  auto tree = solve_depth2(ds).tree;
  auto reg = Dataset::regression({{1, 2, 3}}, {{1}});
  EXPECT_THROW(evaluate(tree, reg), ContractViolation);
  auto narrow = Dataset::classification({{1, 2}}, std::vector<int>{1});
  EXPECT_THROW(evaluate(tree, narrow), ContractViolation);
}

TEST(Materialize, EmptyLeafInheritsParent) {
  auto ds = Dataset::regression({{1, 0}, {2, 0}}, {{2}, {4}});
  auto fi = build_feature_index(ds);
  // Second feature is constant, so the inner split sends nothing right.
  auto tree = materialize(Plan::split(0, 1, Plan::stump(1, 1), Plan::leaf()), ds, fi, all_samples(2));
  EXPECT_EQ(evaluate(tree, ds), 0.0);
  EXPECT_EQ(tree.depth(), 1);
}

TEST(Canonicalize, InfiniteThresholdsRemoved) {
  auto ds = toy6();
  auto fi = build_feature_index(ds);
  auto base = materialize(Plan::stump(1, 3), ds, fi, all_samples(6));
  Tree degenerate = base;
  degenerate.nodes.clear();
  TreeNode root;
  root.feature = 0;
  root.threshold = -std::numeric_limits<double>::infinity();
  root.left = 1;
  root.right = 2;
  degenerate.nodes.push_back(root);
  degenerate.nodes.push_back(base.nodes[1]);
  for (auto nd : base.nodes) {
    if (nd.left >= 0) {
      nd.left += 2;
      nd.right += 2;
    }
    degenerate.nodes.push_back(nd);
  }
  auto canon = canonicalize(degenerate);
  EXPECT_EQ(canon, base);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    EXPECT_EQ(predict(canon, ds.row(i)).label, predict(degenerate, ds.row(i)).label);
  }
  EXPECT_EQ(serialize(degenerate), serialize(base));
  EXPECT_EQ(serialize(degenerate).find("inf"), std::string::npos);
}

TEST(Serialize, RoundTripRandomTrees) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    auto ds = gen::any(rng, 1 + rng() % 30, 1 + rng() % 4);
    auto fi = build_feature_index(ds);
    auto tree = materialize(random_plan(rng, fi, 3), ds, fi, all_samples(ds.n()));
    auto back = deserialize(serialize(tree));
    EXPECT_EQ(back, tree);
    EXPECT_EQ(serialize(back), serialize(tree));
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
      if (!tree.nodes[k].is_leaf()) {
        EXPECT_EQ(std::memcmp(&tree.nodes[k].threshold, &back.nodes[k].threshold, 8), 0);
      }
    }
  }
}

TEST(Serialize, MatchesGoldenFile) {
  auto ds = toy6();
  auto text = serialize(solve_depth2(ds).tree);
  EXPECT_EQ(text, read_file(std::string(SHALLOWTREE_TEST_GOLDEN) + "/toy6_depth2_model.json"));
}

TEST(Deserialize, RejectsBadDocuments) {
  auto ds = toy6();
  auto good = nlohmann::json::parse(serialize(solve_depth2(ds).tree));
  auto expect_error = [](const nlohmann::json& doc, const std::string& where) {
    try {
      deserialize(doc.dump());
      ADD_FAILURE() << "accepted " << doc.dump();
    } catch (const ModelFormatError& e) {
      EXPECT_NE(std::string(e.what()).find(where), std::string::npos) << e.what();
    }
  };
  auto doc = good;
  doc["schemaVersion"] = 2;
  expect_error(doc, "schemaVersion");
  doc = good;
  doc["root"]["left"]["type"] = "branch";
  expect_error(doc, "$.root.left");
  doc = good;
  doc["root"]["feature"] = 7;
  expect_error(doc, "$.root");
  doc = good;
  doc["featureNames"] = 3;
  expect_error(doc, "wrong type");
  doc = good;
  doc["root"]["left"]["left"]["class"] = 5;
  expect_error(doc, "$.root.left.left");
  EXPECT_THROW(deserialize("{not json"), ModelFormatError);
  EXPECT_THROW(deserialize("[]"), ModelFormatError);
}
