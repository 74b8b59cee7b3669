#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "shallowtree/bounds.hpp"
#include "shallowtree/dataset.hpp"
#include "shallowtree/error.hpp"
#include "shallowtree/loss.hpp"
#include "shallowtree/tree.hpp"

namespace shallowtree {

struct HeuristicResult {
  Tree tree;
  double loss = 0.0;
};

namespace detail {

template <class Loss>
Plan greedy_plan(StumpEngine<Loss>& eng, const FeatureIndex& fi, std::span<const std::uint32_t> samples,
                 int depth) {
  if (depth == 0) return Plan::leaf();
  std::size_t best_f = 0;
  StumpResult best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t f = 0; f < fi.p(); ++f) {
    auto r = eng.stump(samples, f);
    if (r.loss < best.loss) {
      best = r;
      best_f = f;
    }
  }
  const auto& rank = fi[best_f].rank;
  std::vector<std::uint32_t> left, right;
  for (auto i : samples) (rank[i] <= best.t ? left : right).push_back(i);
  auto l = greedy_plan(eng, fi, left, depth - 1);
  auto r = greedy_plan(eng, fi, right, depth - 1);
  return Plan::split(best_f, best.t, l, r);
}

}  // namespace detail

/// Top-down tree: each node takes its best stump under the task loss
/// (ties to the smaller feature, then the smaller threshold).
inline HeuristicResult greedy_tree(const Dataset& ds, const FeatureIndex& fi, int depth) {
  require(depth >= 1 && depth <= 3, "greedy depth must be 1, 2 or 3");
  const auto all = all_samples(ds.n());
  Plan plan = with_loss(ds, [&](auto loss) {
    StumpEngine<decltype(loss)> eng(ds, fi);
    return detail::greedy_plan(eng, fi, all, depth);
  });
  HeuristicResult out{materialize(plan, ds, fi, all), 0.0};
  out.loss = evaluate(out.tree, ds);
  return out;
}

inline HeuristicResult greedy_tree(const Dataset& ds, int depth) {
  const auto fi = build_feature_index(ds);
  return greedy_tree(ds, fi, depth);
}

inline constexpr double kDefaultOracleBudget = 1e9;

/// Budget from SHALLOWTREE_ORACLE_BUDGET when set to a positive number.
inline double default_oracle_budget() {
  if (const char* env = std::getenv("SHALLOWTREE_ORACLE_BUDGET")) {
    char* end = nullptr;
    const double v = std::strtod(env, &end);
    if (end != env && *end == '\0' && v > 0 && std::isfinite(v)) return v;
  }
  return kDefaultOracleBudget;
}

struct OracleResult {
  double objective = 0.0;
  Tree tree;
};

namespace detail {

struct PlanValue {
  double value = std::numeric_limits<double>::infinity();
  Plan plan;
};

/// Best depth-2 plan on `base` by enumerating root feature, both child
/// features and every threshold index (first minimum in that order wins).
template <class Loss>
PlanValue best_depth2(BoundEngine<Loss>& eng, const SampleBase& base) {
  const auto& fi = eng.index();
  std::vector<std::size_t> all(fi.p());
  for (std::size_t f = 0; f < fi.p(); ++f) all[f] = f;
  PlanValue best;
  for (std::size_t f0 = 0; f0 < fi.p(); ++f0) {
    auto table = eng.scan(base, f0, BoundEngine<Loss>::sweep_configs(0, fi.u(f0)), all, all);
    auto m = BoundEngine<Loss>::min_pairs(table);
    for (std::size_t i = 0; i < m.rows; ++i) {
      for (std::size_t j = 0; j < m.cols; ++j) {
        if (m.at(i, j) < best.value) {
          best.value = m.at(i, j);
          best.plan = BoundEngine<Loss>::witness_plan(f0, table, m, i, j);
        }
      }
    }
  }
  return best;
}

}  // namespace detail

/// Exact optimum over all trees of the given depth by full enumeration.
/// Refuses instances with (n p)^depth above `budget`.
inline OracleResult brute_force(const Dataset& ds, const FeatureIndex& fi, int depth, double budget) {
  require(depth == 2 || depth == 3, "oracle depth must be 2 or 3");
  const double work = std::pow(static_cast<double>(ds.n()) * static_cast<double>(ds.p()), depth);
  if (work > budget) {
    throw BudgetExceeded("oracle refused: (n*p)^depth = " + std::to_string(work) + " exceeds budget " +
                         std::to_string(budget));
  }
  const auto all = all_samples(ds.n());
  Plan plan = with_loss(ds, [&](auto loss) {
    BoundEngine<decltype(loss)> eng(ds, fi);
    const SampleBase whole = eng.whole();
    if (depth == 2) return detail::best_depth2(eng, whole).plan;
    detail::PlanValue best;
    for (std::size_t f0 = 0; f0 < fi.p(); ++f0) {
      const auto u = fi.u(f0);
      detail::PlanValue left, right;
      std::size_t left_size = std::numeric_limits<std::size_t>::max();
      std::size_t right_size = left_size;
      for (std::uint32_t t = 0; t <= u; ++t) {
        const SampleBase lb{fi[f0].slice(0, t), static_cast<int>(f0), t == u};
        const SampleBase rb{fi[f0].slice(t, u), static_cast<int>(f0), t == 0};
        if (lb.ids.size() != left_size) left = detail::best_depth2(eng, lb);
        if (rb.ids.size() != right_size) right = detail::best_depth2(eng, rb);
        left_size = lb.ids.size();
        right_size = rb.ids.size();
        if (left.value + right.value < best.value) {
          best.value = left.value + right.value;
          best.plan = Plan::split(f0, t, left.plan, right.plan);
        }
      }
    }
    return best.plan;
  });
  OracleResult out{0.0, materialize(plan, ds, fi, all)};
  out.objective = evaluate(out.tree, ds);
  return out;
}

inline OracleResult brute_force(const Dataset& ds, int depth, double budget = default_oracle_budget()) {
  const auto fi = build_feature_index(ds);
  return brute_force(ds, fi, depth, budget);
}

}  // namespace shallowtree
