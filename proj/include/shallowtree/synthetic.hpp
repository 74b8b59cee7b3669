#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "shallowtree/dataset.hpp"
#include "shallowtree/error.hpp"

namespace shallowtree {

/// Uniform features in [0, 1) with a planted depth-2 structure on features
/// 0, 1 and 2 (or fewer when p is small). Classification flips `noise` of the
/// labels to a random class; regression adds Gaussian noise of that scale.
inline Dataset make_synthetic(std::size_t n, std::size_t p, Task task, std::uint64_t seed, double noise = 0.1) {
  require(n >= 1 && p >= 1, "synthetic data needs n >= 1 and p >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> rows(n, std::vector<double>(p));
  for (auto& r : rows) {
    for (auto& v : r) v = unit(rng);
  }
  const std::size_t fl = p > 1 ? 1 : 0;
  const std::size_t fr = p > 2 ? 2 : fl;
  auto leaf_of = [&](const std::vector<double>& r) {
    if (r[0] <= 0.5) return r[fl] <= 0.3 ? 0 : 1;
    return r[fr] <= 0.7 ? 2 : 3;
  };
  if (task == Task::kClassification) {
    const int planted[4] = {0, 1, 1, 0};
    std::uniform_int_distribution<int> pick(0, 1);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = planted[leaf_of(rows[i])];
      if (unit(rng) < noise) labels[i] = pick(rng);
    }
    return Dataset::classification(rows, labels);
  }
  const double planted[4] = {-1.0, 0.5, 2.0, -0.5};
  std::normal_distribution<double> gauss(0.0, noise);
  std::vector<std::vector<double>> targets(n, std::vector<double>(1));
  for (std::size_t i = 0; i < n; ++i) targets[i][0] = planted[leaf_of(rows[i])] + gauss(rng);
  return Dataset::regression(rows, targets);
}

}  // namespace shallowtree
