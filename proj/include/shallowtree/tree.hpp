#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "shallowtree/dataset.hpp"
#include "shallowtree/error.hpp"

namespace shallowtree {

// ---------------------------------------------------------------------------
// Plan: a tree expressed in threshold indices, before leaf values are fitted.

struct PlanNode {
  int feature = -1;  // -1 marks a leaf
  std::uint32_t t = 0;
  int left = -1;
  int right = -1;
};

class Plan {
 public:
  static Plan leaf() {
    Plan p;
    p.nodes_.push_back(PlanNode{});
    return p;
  }

  static Plan split(std::size_t feature, std::uint32_t t, const Plan& left, const Plan& right) {
    Plan p;
    p.nodes_.push_back(PlanNode{static_cast<int>(feature), t, -1, -1});
    p.nodes_[0].left = p.append(left);
    p.nodes_[0].right = p.append(right);
    return p;
  }

  /// Depth-1 tree splitting on (feature, t).
  static Plan stump(std::size_t feature, std::uint32_t t) { return split(feature, t, leaf(), leaf()); }

  const std::vector<PlanNode>& nodes() const { return nodes_; }
  bool empty() const { return nodes_.empty(); }

 private:
  int append(const Plan& sub) {
    const int base = static_cast<int>(nodes_.size());
    for (auto node : sub.nodes_) {
      if (node.left >= 0) node.left += base;
      if (node.right >= 0) node.right += base;
      nodes_.push_back(node);
    }
    return base;
  }

  std::vector<PlanNode> nodes_;
};

// ---------------------------------------------------------------------------
// Tree: the fitted model.

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;                // classification leaf: class id
  std::vector<double> value;    // regression leaf: mean target

  bool is_leaf() const { return feature < 0; }

  friend bool operator==(const TreeNode& a, const TreeNode& b) {
    return a.feature == b.feature && a.left == b.left && a.right == b.right && a.label == b.label &&
           a.value == b.value && (a.is_leaf() || a.threshold == b.threshold);
  }
};

struct Prediction {
  int label = 0;
  std::vector<double> value;
};

class Tree {
 public:
  Task task = Task::kClassification;
  std::size_t p = 0;
  std::size_t m = 0;
  std::vector<std::string> label_table;
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  std::vector<TreeNode> nodes;  // root at index 0

  int depth() const { return nodes.empty() ? 0 : depth_from(0); }
  std::size_t leaf_count() const {
    std::size_t c = 0;
    for (const auto& nd : nodes) c += nd.is_leaf() ? 1 : 0;
    return c;
  }

  bool operator==(const Tree&) const = default;

 private:
  int depth_from(int k) const {
    const auto& nd = nodes[static_cast<std::size_t>(k)];
    if (nd.is_leaf()) return 0;
    return 1 + std::max(depth_from(nd.left), depth_from(nd.right));
  }
};

namespace detail {

inline void copy_metadata(Tree& tree, const Dataset& ds) {
  tree.task = ds.task();
  tree.p = ds.p();
  tree.m = ds.m();
  tree.label_table = ds.label_table();
  tree.feature_names = ds.feature_names();
  tree.target_names = ds.target_names();
}

/// Best constant for the samples; empty sets inherit `fallback`.
inline TreeNode fit_leaf(const Dataset& ds, std::span<const std::uint32_t> samples, const TreeNode& fallback) {
  TreeNode leaf;
  if (samples.empty()) {
    leaf.label = fallback.label;
    leaf.value = fallback.value;
    if (!ds.is_classification() && leaf.value.empty()) leaf.value.assign(ds.m(), 0.0);
    return leaf;
  }
  if (ds.is_classification()) {
    std::vector<std::int64_t> counts(ds.num_classes(), 0);
    for (auto i : samples) ++counts[static_cast<std::size_t>(ds.label(i))];
    std::size_t best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c) {
      if (counts[c] > counts[best]) best = c;
    }
    leaf.label = static_cast<int>(best);
  } else {
    leaf.value.assign(ds.m(), 0.0);
    for (auto i : samples) {
      auto y = ds.target(i);
      for (std::size_t k = 0; k < ds.m(); ++k) leaf.value[k] += y[k];
    }
    for (auto& v : leaf.value) v /= static_cast<double>(samples.size());
  }
  return leaf;
}

inline int materialize_node(Tree& out, const Plan& plan, int k, const Dataset& ds, const FeatureIndex& fi,
                            std::vector<std::uint32_t> samples, const TreeNode& parent_fit) {
  const auto& pn = plan.nodes()[static_cast<std::size_t>(k)];
  TreeNode fit = fit_leaf(ds, samples, parent_fit);
  if (pn.feature < 0) {
    out.nodes.push_back(std::move(fit));
    return static_cast<int>(out.nodes.size()) - 1;
  }
  const auto f = static_cast<std::size_t>(pn.feature);
  const auto& col = fi[f];
  // Infinite thresholds send every sample one way; keep only that side.
  if (pn.t == 0) return materialize_node(out, plan, pn.right, ds, fi, std::move(samples), fit);
  if (pn.t >= col.u()) return materialize_node(out, plan, pn.left, ds, fi, std::move(samples), fit);

  std::vector<std::uint32_t> left, right;
  for (auto i : samples) (col.rank[i] <= pn.t ? left : right).push_back(i);
  const int self = static_cast<int>(out.nodes.size());
  TreeNode split;
  split.feature = pn.feature;
  split.threshold = col.midpoints[pn.t];
  out.nodes.push_back(split);
  const int l = materialize_node(out, plan, pn.left, ds, fi, std::move(left), fit);
  const int r = materialize_node(out, plan, pn.right, ds, fi, std::move(right), fit);
  out.nodes[static_cast<std::size_t>(self)].left = l;
  out.nodes[static_cast<std::size_t>(self)].right = r;
  return self;
}

inline int canonical_copy(Tree& out, const Tree& in, int k) {
  const auto& nd = in.nodes[static_cast<std::size_t>(k)];
  if (nd.is_leaf()) {
    out.nodes.push_back(nd);
    return static_cast<int>(out.nodes.size()) - 1;
  }
  if (std::isinf(nd.threshold)) return canonical_copy(out, in, nd.threshold < 0 ? nd.right : nd.left);
  const int self = static_cast<int>(out.nodes.size());
  out.nodes.push_back(nd);
  const int l = canonical_copy(out, in, nd.left);
  const int r = canonical_copy(out, in, nd.right);
  out.nodes[static_cast<std::size_t>(self)].left = l;
  out.nodes[static_cast<std::size_t>(self)].right = r;
  return self;
}

}  // namespace detail

/// Fits leaf values of `plan` on `samples` and converts threshold indices to
/// midpoints. Sentinel splits (t = 0 or t = u) are dropped in favour of the
/// child that receives every sample.
inline Tree materialize(const Plan& plan, const Dataset& ds, const FeatureIndex& fi,
                        std::span<const std::uint32_t> samples) {
  Tree tree;
  detail::copy_metadata(tree, ds);
  TreeNode root_fallback;
  if (!ds.is_classification()) root_fallback.value.assign(ds.m(), 0.0);
  detail::materialize_node(tree, plan, 0, ds, fi, {samples.begin(), samples.end()}, root_fallback);
  return tree;
}

/// Removes splits whose threshold is +-inf, keeping the side every input reaches.
inline Tree canonicalize(const Tree& tree) {
  Tree out = tree;
  out.nodes.clear();
  if (!tree.nodes.empty()) detail::canonical_copy(out, tree, 0);
  return out;
}

inline const TreeNode& route(const Tree& tree, std::span<const double> x) {
  if (x.size() != tree.p) {
    throw ContractViolation("prediction input has " + std::to_string(x.size()) + " features, model expects " +
                            std::to_string(tree.p));
  }
  std::size_t k = 0;
  while (!tree.nodes[k].is_leaf()) {
    const auto& nd = tree.nodes[k];
    k = static_cast<std::size_t>(x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right);
  }
  return tree.nodes[k];
}

inline Prediction predict(const Tree& tree, std::span<const double> x) {
  const auto& leaf = route(tree, x);
  return Prediction{leaf.label, leaf.value};
}

/// Total training-style loss of `tree` on the given rows of ds.
inline double evaluate(const Tree& tree, const Dataset& ds, std::span<const std::uint32_t> rows) {
  if (tree.task != ds.task()) throw ContractViolation("model task does not match dataset task");
  if (tree.p != ds.p()) {
    throw ContractViolation("model expects " + std::to_string(tree.p) + " features, dataset has " +
                            std::to_string(ds.p()));
  }
  if (!ds.is_classification() && tree.m != ds.m()) {
    throw ContractViolation("model target dimension does not match dataset");
  }
  std::vector<double> x(ds.p());
  double total = 0.0;
  std::int64_t wrong = 0;
  for (auto i : rows) {
    for (std::size_t f = 0; f < ds.p(); ++f) x[f] = ds.x(i, f);
    const auto& leaf = route(tree, x);
    if (ds.is_classification()) {
      // Labels are compared through the raw label text so models trained on
      // another file with a different first-appearance order still score right.
      const auto& want = ds.label_table()[static_cast<std::size_t>(ds.label(i))];
      const auto& got = tree.label_table.at(static_cast<std::size_t>(leaf.label));
      wrong += (want == got) ? 0 : 1;
    } else {
      auto y = ds.target(i);
      for (std::size_t k = 0; k < ds.m(); ++k) {
        const double d = y[k] - leaf.value[k];
        total += d * d;
      }
    }
  }
  return ds.is_classification() ? static_cast<double>(wrong) : total;
}

inline double evaluate(const Tree& tree, const Dataset& ds) {
  const auto rows = all_samples(ds.n());
  return evaluate(tree, ds, rows);
}

// ---------------------------------------------------------------------------
// Model file: versioned JSON document.

inline constexpr int kModelSchemaVersion = 1;

namespace detail {

inline nlohmann::json node_to_json(const Tree& tree, int k) {
  const auto& nd = tree.nodes[static_cast<std::size_t>(k)];
  nlohmann::json j;
  if (nd.is_leaf()) {
    j["type"] = "leaf";
    if (tree.task == Task::kClassification) {
      j["class"] = nd.label;
      j["label"] = tree.label_table.at(static_cast<std::size_t>(nd.label));
    } else {
      j["value"] = nd.value;
    }
    return j;
  }
  j["type"] = "split";
  j["feature"] = nd.feature;
  if (nd.feature < static_cast<int>(tree.feature_names.size())) {
    j["featureName"] = tree.feature_names[static_cast<std::size_t>(nd.feature)];
  }
  j["threshold"] = nd.threshold;
  j["left"] = node_to_json(tree, nd.left);
  j["right"] = node_to_json(tree, nd.right);
  return j;
}

inline int node_from_json(Tree& tree, const nlohmann::json& j, const std::string& where, int level) {
  if (level > 3) throw ModelFormatError(where + ": tree deeper than 3");
  if (!j.is_object()) throw ModelFormatError(where + ": node must be an object");
  const auto type = j.value("type", std::string{});
  TreeNode nd;
  if (type == "leaf") {
    if (tree.task == Task::kClassification) {
      if (!j.contains("class") || !j["class"].is_number_integer()) {
        throw ModelFormatError(where + ": leaf needs integer 'class'");
      }
      nd.label = j["class"].get<int>();
      if (nd.label < 0 || static_cast<std::size_t>(nd.label) >= tree.label_table.size()) {
        throw ModelFormatError(where + ": class id outside labelTable");
      }
    } else {
      if (!j.contains("value") || !j["value"].is_array()) throw ModelFormatError(where + ": leaf needs 'value'");
      nd.value = j["value"].get<std::vector<double>>();
      if (nd.value.size() != tree.m) throw ModelFormatError(where + ": leaf value has wrong dimension");
    }
    tree.nodes.push_back(std::move(nd));
    return static_cast<int>(tree.nodes.size()) - 1;
  }
  if (type != "split") throw ModelFormatError(where + ": node type must be 'split' or 'leaf'");
  if (!j.contains("feature") || !j["feature"].is_number_integer()) {
    throw ModelFormatError(where + ": split needs integer 'feature'");
  }
  if (!j.contains("threshold") || !j["threshold"].is_number()) {
    throw ModelFormatError(where + ": split needs numeric 'threshold'");
  }
  nd.feature = j["feature"].get<int>();
  if (nd.feature < 0 || static_cast<std::size_t>(nd.feature) >= tree.p) {
    throw ModelFormatError(where + ": feature index out of range");
  }
  nd.threshold = j["threshold"].get<double>();
  if (!std::isfinite(nd.threshold)) throw ModelFormatError(where + ": threshold must be finite");
  if (!j.contains("left") || !j.contains("right")) throw ModelFormatError(where + ": split needs both children");
  const int self = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(nd);
  const int l = node_from_json(tree, j["left"], where + ".left", level + 1);
  const int r = node_from_json(tree, j["right"], where + ".right", level + 1);
  tree.nodes[static_cast<std::size_t>(self)].left = l;
  tree.nodes[static_cast<std::size_t>(self)].right = r;
  return self;
}

}  // namespace detail

inline std::string serialize(const Tree& tree) {
  const Tree canon = canonicalize(tree);
  nlohmann::json doc;
  doc["schemaVersion"] = kModelSchemaVersion;
  doc["task"] = to_string(canon.task);
  doc["p"] = canon.p;
  if (canon.task == Task::kClassification) {
    doc["labelTable"] = canon.label_table;
  } else {
    doc["m"] = canon.m;
  }
  if (!canon.feature_names.empty()) doc["featureNames"] = canon.feature_names;
  if (!canon.target_names.empty()) doc["targetNames"] = canon.target_names;
  doc["root"] = detail::node_to_json(canon, 0);
  return doc.dump(2) + "\n";
}

namespace detail {

inline Tree tree_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ModelFormatError("$: model must be a JSON object");
  if (!doc.contains("schemaVersion") || !doc["schemaVersion"].is_number_integer()) {
    throw ModelFormatError("$.schemaVersion: missing");
  }
  if (doc["schemaVersion"].get<int>() != kModelSchemaVersion) {
    throw ModelFormatError("$.schemaVersion: unsupported version " + doc["schemaVersion"].dump());
  }
  Tree tree;
  const auto task = doc.value("task", std::string{});
  if (task == "classification") {
    tree.task = Task::kClassification;
  } else if (task == "regression") {
    tree.task = Task::kRegression;
  } else {
    throw ModelFormatError("$.task: must be 'classification' or 'regression'");
  }
  if (!doc.contains("p") || !doc["p"].is_number_unsigned()) throw ModelFormatError("$.p: missing");
  tree.p = doc["p"].get<std::size_t>();
  if (tree.task == Task::kClassification) {
    if (!doc.contains("labelTable") || !doc["labelTable"].is_array()) {
      throw ModelFormatError("$.labelTable: missing");
    }
    tree.label_table = doc["labelTable"].get<std::vector<std::string>>();
  } else {
    if (!doc.contains("m") || !doc["m"].is_number_unsigned()) throw ModelFormatError("$.m: missing");
    tree.m = doc["m"].get<std::size_t>();
  }
  if (doc.contains("featureNames")) tree.feature_names = doc["featureNames"].get<std::vector<std::string>>();
  if (doc.contains("targetNames")) tree.target_names = doc["targetNames"].get<std::vector<std::string>>();
  if (!doc.contains("root")) throw ModelFormatError("$.root: missing");
  node_from_json(tree, doc["root"], "$.root", 0);
  return tree;
}

}  // namespace detail

inline Tree deserialize(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ModelFormatError(std::string("model is not valid JSON: ") + e.what());
  }
  try {
    return detail::tree_from_json(doc);
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("model has a field of the wrong type: ") + e.what());
  }
}

}  // namespace shallowtree
