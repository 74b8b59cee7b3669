#pragma once

// Test-only reference implementations. Nothing here reuses the library's
// rank index, stump sweeps or bound code: splits are applied to raw values
// and leaves are scored with a plain two-pass computation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "shallowtree/dataset.hpp"

namespace naive {

using shallowtree::Dataset;

inline double leaf_loss(const Dataset& ds, const std::vector<std::uint32_t>& s) {
  if (s.empty()) return 0.0;
  if (ds.is_classification()) {
    std::map<int, int> counts;
    for (auto i : s) ++counts[ds.label(i)];
    int best = 0;
    for (auto [c, k] : counts) best = std::max(best, k);
    return static_cast<double>(s.size()) - best;
  }
  double total = 0.0;
  for (std::size_t k = 0; k < ds.m(); ++k) {
    double mean = 0.0;
    for (auto i : s) mean += ds.target(i)[k];
    mean /= static_cast<double>(s.size());
    for (auto i : s) total += (ds.target(i)[k] - mean) * (ds.target(i)[k] - mean);
  }
  return total;
}

/// Candidate thresholds for feature f: -inf, the midpoints, +inf.
inline std::vector<double> thresholds(const Dataset& ds, std::size_t f) {
  std::set<double> vals;
  for (std::size_t i = 0; i < ds.n(); ++i) vals.insert(ds.x(i, f));
  std::vector<double> v(vals.begin(), vals.end());
  std::vector<double> t{-std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k + 1 < v.size(); ++k) t.push_back((v[k] + v[k + 1]) / 2);
  t.push_back(std::numeric_limits<double>::infinity());
  return t;
}

/// Best loss of any tree of the given depth on sample set s.
inline double best_tree(const Dataset& ds, const std::vector<std::uint32_t>& s, int depth) {
  if (depth == 0) return leaf_loss(ds, s);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < ds.p(); ++f) {
    for (double th : thresholds(ds, f)) {
      std::vector<std::uint32_t> l, r;
      for (auto i : s) (ds.x(i, f) <= th ? l : r).push_back(i);
      best = std::min(best, best_tree(ds, l, depth - 1) + best_tree(ds, r, depth - 1));
    }
  }
  return best;
}

inline double optimum(const Dataset& ds, int depth) {
  std::vector<std::uint32_t> all(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) all[i] = static_cast<std::uint32_t>(i);
  return best_tree(ds, all, depth);
}

/// Restricted depth-2 loss on s: root feature f0 with threshold index in
/// [a, b] (index into thresholds()), children fixed to f1 and f2.
inline double restricted_l2(const Dataset& ds, const std::vector<std::uint32_t>& s, std::size_t f0,
                            std::uint32_t a, std::uint32_t b, std::size_t f1, std::size_t f2) {
  const auto t0 = thresholds(ds, f0);
  const auto t1 = thresholds(ds, f1);
  const auto t2 = thresholds(ds, f2);
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t t = a; t <= b; ++t) {
    std::vector<std::uint32_t> l, r;
    for (auto i : s) (ds.x(i, f0) <= t0[t] ? l : r).push_back(i);
    double bl = std::numeric_limits<double>::infinity(), br = bl;
    for (double th : t1) {
      std::vector<std::uint32_t> ll, lr;
      for (auto i : l) (ds.x(i, f1) <= th ? ll : lr).push_back(i);
      bl = std::min(bl, leaf_loss(ds, ll) + leaf_loss(ds, lr));
    }
    for (double th : t2) {
      std::vector<std::uint32_t> rl, rr;
      for (auto i : r) (ds.x(i, f2) <= th ? rl : rr).push_back(i);
      br = std::min(br, leaf_loss(ds, rl) + leaf_loss(ds, rr));
    }
    best = std::min(best, bl + br);
  }
  return best;
}

/// Best stump loss on s along feature f.
inline double stump(const Dataset& ds, const std::vector<std::uint32_t>& s, std::size_t f) {
  double best = std::numeric_limits<double>::infinity();
  for (double th : thresholds(ds, f)) {
    std::vector<std::uint32_t> l, r;
    for (auto i : s) (ds.x(i, f) <= th ? l : r).push_back(i);
    best = std::min(best, leaf_loss(ds, l) + leaf_loss(ds, r));
  }
  return best;
}

/// Stump on the samples left of threshold index a plus stump on those right
/// of b (both along f0), with the samples in between left out.
inline double drop_middle(const Dataset& ds, const std::vector<std::uint32_t>& s, std::size_t f0,
                          std::uint32_t a, std::uint32_t b, std::size_t f1, std::size_t f2) {
  const auto t0 = thresholds(ds, f0);
  std::vector<std::uint32_t> l, r;
  for (auto i : s) {
    if (ds.x(i, f0) <= t0[a]) l.push_back(i);
    if (ds.x(i, f0) > t0[b]) r.push_back(i);
  }
  return stump(ds, l, f1) + stump(ds, r, f2);
}

}  // namespace naive

namespace gen {

using shallowtree::Dataset;

/// Small-alphabet integer features so ties and duplicates are common.
inline std::vector<std::vector<double>> features(std::mt19937_64& rng, std::size_t n, std::size_t p) {
  std::uniform_int_distribution<int> levels(1, 8);
  std::vector<int> k(p);
  for (auto& v : k) v = levels(rng);
  std::vector<std::vector<double>> rows(n, std::vector<double>(p));
  for (auto& r : rows) {
    for (std::size_t f = 0; f < p; ++f) r[f] = std::uniform_int_distribution<int>(0, k[f])(rng);
  }
  return rows;
}

inline Dataset classification(std::mt19937_64& rng, std::size_t n, std::size_t p, int classes) {
  auto rows = features(rng, n, p);
  std::vector<int> y(n);
  for (auto& v : y) v = std::uniform_int_distribution<int>(0, classes - 1)(rng);
  return Dataset::classification(rows, y);
}

inline Dataset regression(std::mt19937_64& rng, std::size_t n, std::size_t p, std::size_t m) {
  auto rows = features(rng, n, p);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> y(n, std::vector<double>(m));
  for (auto& r : y) {
    for (auto& v : r) v = g(rng);
  }
  return Dataset::regression(rows, y);
}

inline Dataset any(std::mt19937_64& rng, std::size_t n, std::size_t p) {
  if (std::uniform_int_distribution<int>(0, 1)(rng) == 0) {
    return classification(rng, n, p, std::uniform_int_distribution<int>(2, 3)(rng));
  }
  return regression(rng, n, p, std::uniform_int_distribution<std::size_t>(1, 2)(rng));
}

inline bool close(double a, double b, bool exact) {
  if (exact) return a == b;
  return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

/// a <= b, exactly or up to relative 1e-9.
inline bool le(double a, double b, bool exact) {
  if (exact) return a <= b;
  return a <= b + 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace gen
